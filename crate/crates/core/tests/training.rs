use mgct::dataio::{monte_carlo_splits, synthesize, Dataset, FoldSplit, SynthConfig};
use mgct::embedders::DropoutCtx;
use mgct::model::{AblationSpec, FusionConfig, Mgct};
use mgct::numkit::{Tape, Tensor};
use mgct::survival::{nll_loss_var, LossConfig, SurvivalLabel};
use mgct::train::{cross_validate_splits, mean_gradient, sample_gradient, train_fold, Adam, TrainConfig};

fn small_dataset(n: usize) -> Dataset {
    synthesize(&SynthConfig { n, d_in: 6, min_patches: 3, max_patches: 9, genes_per_category: 3, ..Default::default() })
        .unwrap()
        .0
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        lr: 1e-3,
        accumulation: 4,
        snn_hidden: 8,
        fusion: FusionConfig { d: 8, d_a: 8, d_ff: 16, ..FusionConfig::default() },
        ..TrainConfig::default()
    }
}

fn split(ds: &Dataset) -> FoldSplit {
    monte_carlo_splits(&ds.ids(), 1, 0.25, 3).unwrap().remove(0)
}

fn max_diff(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y).unwrap()).fold(0.0, f64::max)
}

#[test]
fn accumulated_steps_equal_one_mean_gradient_step() {
    let ds = small_dataset(40);
    let cfg = small_config();
    let model = Mgct::new(cfg.model_config(&ds, AblationSpec::full()).unwrap(), 1).unwrap();
    let batch: Vec<_> = ds.samples[..32]
        .iter()
        .enumerate()
        .map(|(i, s)| (s, SurvivalLabel::new(s.t, s.event, i % 4), DropoutCtx { training: true, seed: 9, step: i as u64 }))
        .collect();
    let loss = LossConfig::default();

    // 32 single-sample backward passes, each accumulated with weight 1/32.
    let mut acc: Vec<Tensor> = model.store.values().iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
    for (s, label, ctx) in &batch {
        let (_, g) = sample_gradient(&model, s, label, loss, *ctx).unwrap();
        for (a, gi) in acc.iter_mut().zip(&g) {
            a.add_assign(&gi.scale(1.0 / 32.0)).unwrap();
        }
    }
    // One backward pass through the mean of the 32 losses on a single tape.
    let tape = Tape::new();
    let bound = model.store.bind(&tape);
    let mut total = None;
    for (s, label, ctx) in &batch {
        let logits = model.forward_sample(&tape, &bound, s, *ctx).unwrap();
        let l = nll_loss_var(&tape, tape.sigmoid(logits), label, loss).unwrap();
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l).unwrap(),
        });
    }
    let mean_loss = tape.scale(total.unwrap(), 1.0 / 32.0);
    let grads = tape.backward(mean_loss).unwrap();
    let joint: Vec<Tensor> = bound.vars().iter().map(|&v| grads.wrt(v)).collect();
    let (_, mean) = mean_gradient(&model, &batch, loss).unwrap();

    assert!(max_diff(&acc, &mean) < 1e-10);
    assert!(max_diff(&joint, &mean) < 1e-10);

    let step = |g: &[Tensor]| {
        let mut params = model.store.values().to_vec();
        Adam::new(&params, cfg.lr, cfg.weight_decay).step(&mut params, g).unwrap();
        params
    };
    assert!(max_diff(&step(&acc), &step(&mean)) < 1e-10);
}

#[test]
fn poisoned_training_labels_do_not_touch_untrained_validation_metrics() {
    let ds = small_dataset(40);
    let sp = split(&ds);
    let cfg = TrainConfig { epochs: 0, ..small_config() };
    let clean = train_fold(&ds, &sp, &cfg, AblationSpec::full()).unwrap();

    let mut poisoned = ds.clone();
    for s in poisoned.samples.iter_mut().filter(|s| sp.train.contains(&s.id)) {
        s.t = 1000.0 - s.t;
        s.event = !s.event;
    }
    let dirty = train_fold(&poisoned, &sp, &cfg, AblationSpec::full()).unwrap();
    assert_eq!(clean.validation_risks, dirty.validation_risks);
    assert_eq!(clean.validation.c_index, dirty.validation.c_index);
}

#[test]
fn validation_labels_never_reach_training() {
    let ds = small_dataset(40);
    let sp = split(&ds);
    let cfg = small_config();
    let clean = train_fold(&ds, &sp, &cfg, AblationSpec::full()).unwrap();

    let mut poisoned = ds.clone();
    for s in poisoned.samples.iter_mut().filter(|s| sp.validation.contains(&s.id)) {
        s.t *= 7.0;
        s.event = !s.event;
    }
    let dirty = train_fold(&poisoned, &sp, &cfg, AblationSpec::full()).unwrap();
    assert_eq!(clean.model.store.values(), dirty.model.store.values());
    assert_eq!(clean.bins, dirty.bins);
    assert_eq!(clean.horizon, dirty.horizon);
    assert_eq!(clean.validation_risks, dirty.validation_risks);
}

#[test]
fn training_is_bitwise_reproducible_across_thread_counts() {
    let ds = small_dataset(30);
    let splits = monte_carlo_splits(&ds.ids(), 2, 0.2, 5).unwrap();
    let cfg = small_config();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| cross_validate_splits(&ds, &splits, &cfg, AblationSpec::full()).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.history(), b.history());
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        assert_eq!(fa.model.store.values(), fb.model.store.values());
    }
}

#[test]
fn history_has_one_row_per_fold_and_epoch() {
    let ds = small_dataset(30);
    let splits = monte_carlo_splits(&ds.ids(), 3, 0.2, 5).unwrap();
    let cfg = TrainConfig { epochs: 3, ..small_config() };
    let report = cross_validate_splits(&ds, &splits, &cfg, AblationSpec::preset('A').unwrap()).unwrap();
    let rows: Vec<(usize, usize)> = report.history().iter().map(|h| (h.epoch, h.fold)).collect();
    let expected: Vec<(usize, usize)> = (1..=3).flat_map(|e| (0..3).map(move |f| (e, f))).collect();
    assert_eq!(rows, expected);
    assert!(report.history().iter().all(|h| h.loss.is_finite()));
}
