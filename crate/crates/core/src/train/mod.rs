//! Training, Monte Carlo cross-validation and the Model A–E ablation matrix.
//!
//! Samples are fed one at a time. Per-sample gradients are averaged over
//! `accumulation` consecutive samples (the last window of an epoch may be
//! shorter) before each Adam update. Within a window the per-sample passes
//! run on the rayon pool and are summed in a fixed order, so results do not
//! depend on the thread count.

pub mod adam;
mod report;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::model::AblationSpec;
pub use adam::Adam;
pub use report::{read_history_csv, write_ablation_csv, write_history_csv, AblationRow};

use crate::dataio::{monte_carlo_splits, Dataset, FoldSplit, Sample};
use crate::embedders::DropoutCtx;
use crate::error::{Error, Result};
use crate::model::{FusionConfig, Mgct, ModelConfig};
use crate::numkit::{Tape, Tensor};
use crate::survival::{
    binary_auc, concordance_index, median_event_time, nll_loss_var, LossConfig, SurvivalLabel, TimeBins,
};

/// Share of samples held out in each Monte Carlo fold.
pub const VALIDATION_RATIO: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Samples per optimizer step.
    pub accumulation: usize,
    pub seed: u64,
    pub snn_hidden: usize,
    pub dropout: f64,
    pub fusion: FusionConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr: 2e-4,
            weight_decay: 1e-5,
            accumulation: 32,
            seed: 7,
            snn_hidden: 256,
            dropout: 0.25,
            fusion: FusionConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bad.push(format!("lr = {} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bad.push(format!("weight_decay = {} must be >= 0", self.weight_decay));
        }
        if self.accumulation == 0 {
            bad.push("accumulation must be >= 1".into());
        }
        if self.snn_hidden == 0 {
            bad.push("snn_hidden must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout = {} outside [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.loss.alpha) {
            bad.push(format!("loss.alpha = {} outside [0, 1]", self.loss.alpha));
        }
        if let Err(Error::Config(msg)) = self.fusion.validate() {
            bad.push(msg);
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn model_config(&self, dataset: &Dataset, ablation: AblationSpec) -> Result<ModelConfig> {
        let first = dataset.samples.first().ok_or_else(|| Error::Contract("dataset is empty".into()))?;
        Ok(ModelConfig {
            d_in: dataset.d_in(),
            genomic_sizes: first.genomic.iter().map(Vec::len).collect(),
            snn_hidden: self.snn_hidden,
            dropout: self.dropout,
            fusion: self.fusion.clone(),
            ablation,
        })
    }
}

/// Validation metrics; `None` when undefined (no comparable pairs, or one
/// class empty at the AUC horizon).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalMetrics {
    pub c_index: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub fold: usize,
    pub c_index: Option<f64>,
    pub auc: Option<f64>,
    /// Mean training loss over the epoch.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    /// Parameters after the last epoch.
    pub model: Mgct,
    pub bins: TimeBins,
    /// AUC horizon: median uncensored training time.
    pub horizon: Option<f64>,
    pub history: Vec<EpochMetrics>,
    /// Epoch with the highest validation C-index, for reporting only.
    pub best_epoch: Option<usize>,
    /// Last-epoch validation metrics.
    pub validation: EvalMetrics,
    pub validation_ids: Vec<String>,
    /// Last-epoch validation risks, aligned with `validation_ids`.
    pub validation_risks: Vec<f64>,
}

/// Independent seeds for initialisation, shuffling and dropout of one fold.
fn fold_seeds(seed: u64, fold: usize) -> (u64, u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64);
    (rng.next_u64(), rng.next_u64(), rng.next_u64())
}

/// Loss and gradient of every parameter for one sample.
pub fn sample_gradient(
    model: &Mgct,
    sample: &Sample,
    label: &SurvivalLabel,
    loss: LossConfig,
    ctx: DropoutCtx,
) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let bound = model.store.bind(&tape);
    let logits = model.forward_sample(&tape, &bound, sample, ctx)?;
    let l = nll_loss_var(&tape, tape.sigmoid(logits), label, loss)?;
    let mut grads = tape.backward(l)?;
    Ok((tape.scalar(l), bound.vars().iter().map(|&v| grads.take(v)).collect()))
}

/// Mean loss and mean gradient over a window of samples.
pub fn mean_gradient(
    model: &Mgct,
    batch: &[(&Sample, SurvivalLabel, DropoutCtx)],
    loss: LossConfig,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty accumulation window".into()));
    }
    let parts: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|(s, label, ctx)| sample_gradient(model, s, label, loss, *ctx))
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut total, mut sum) = iter.next().unwrap();
    for (l, g) in iter {
        total += l;
        for (acc, gi) in sum.iter_mut().zip(&g) {
            acc.add_assign(gi)?;
        }
    }
    let k = 1.0 / batch.len() as f64;
    Ok((total * k, sum.into_iter().map(|g| g.scale(k)).collect()))
}

/// Eval-mode risks for `samples`.
pub fn predict_risks(model: &Mgct, samples: &[&Sample]) -> Result<Vec<f64>> {
    samples.par_iter().map(|s| model.predict(s).map(|p| p.risk)).collect()
}

pub fn evaluate(model: &Mgct, samples: &[&Sample], horizon: Option<f64>) -> Result<(Vec<f64>, EvalMetrics)> {
    let risks = predict_risks(model, samples)?;
    // Metrics only read times and events.
    let labels: Vec<SurvivalLabel> = samples.iter().map(|s| SurvivalLabel::new(s.t, s.event, 0)).collect();
    let metrics = EvalMetrics {
        c_index: concordance_index(&risks, &labels),
        auc: horizon.and_then(|h| binary_auc(&risks, &labels, h)),
    };
    Ok((risks, metrics))
}

pub fn train_fold(dataset: &Dataset, split: &FoldSplit, config: &TrainConfig, ablation: AblationSpec) -> Result<FoldResult> {
    config.validate()?;
    let train = dataset.select(&split.train)?;
    let val = dataset.select(&split.validation)?;
    if train.is_empty() {
        return Err(Error::Contract(format!("fold {} has an empty training set", split.fold)));
    }
    let outcomes: Vec<(f64, bool)> = train.iter().map(|s| (s.t, s.event)).collect();
    let bins = TimeBins::from_training(&outcomes, config.fusion.bins)?;
    let horizon = median_event_time(&outcomes);
    let labels: Vec<SurvivalLabel> = train.iter().map(|s| bins.label(s.t, s.event)).collect();

    let (init_seed, shuffle_seed, dropout_seed) = fold_seeds(config.seed, split.fold);
    let mut model = Mgct::new(config.model_config(dataset, ablation)?, init_seed)?;
    let mut opt = Adam::new(model.store.values(), config.lr, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    let mut history = Vec::with_capacity(config.epochs);
    let mut last = (Vec::new(), EvalMetrics::default());

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for window in order.chunks(config.accumulation) {
            let batch: Vec<_> = window
                .iter()
                .map(|&i| {
                    let ctx = DropoutCtx { training: true, seed: dropout_seed, step };
                    step += 1;
                    (train[i], labels[i], ctx)
                })
                .collect();
            let (loss, grads) = mean_gradient(&model, &batch, config.loss)?;
            if !loss.is_finite() {
                return Err(Error::Contract(format!("fold {}: non-finite loss in epoch {epoch}", split.fold)));
            }
            epoch_loss += loss * window.len() as f64;
            opt.step(model.store.values_mut(), &grads)?;
        }
        let loss = epoch_loss / train.len() as f64;
        last = evaluate(&model, &val, horizon)?;
        let m = last.1;
        log::info!(
            "fold {} epoch {epoch}/{}: loss {loss:.4}, val c-index {}, auc {}",
            split.fold,
            config.epochs,
            fmt_opt(m.c_index),
            fmt_opt(m.auc)
        );
        history.push(EpochMetrics { epoch, fold: split.fold, c_index: m.c_index, auc: m.auc, loss });
    }
    if config.epochs == 0 {
        last = evaluate(&model, &val, horizon)?;
    }

    let best_epoch = history
        .iter()
        .filter_map(|h| h.c_index.map(|c| (h.epoch, c)))
        .fold(None, |best: Option<(usize, f64)>, (e, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((e, c)),
        });
    if let Some((e, c)) = best_epoch {
        log::info!(
            "fold {}: best validation c-index {c:.4} at epoch {e}; last epoch {} reported",
            split.fold,
            fmt_opt(last.1.c_index)
        );
    }
    Ok(FoldResult {
        fold: split.fold,
        model,
        bins,
        horizon,
        history,
        best_epoch: best_epoch.map(|(e, _)| e),
        validation: last.1,
        validation_ids: split.validation.clone(),
        validation_risks: last.0,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

/// Mean and population standard deviation over the folds where a metric is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    /// Folds that contributed.
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt(), n: v.len() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub c_index: Option<MeanStd>,
    pub auc: Option<MeanStd>,
}

impl CvReport {
    pub fn history(&self) -> Vec<EpochMetrics> {
        let mut rows: Vec<EpochMetrics> = self.folds.iter().flat_map(|f| f.history.iter().copied()).collect();
        rows.sort_by_key(|r| (r.epoch, r.fold));
        rows
    }
}

/// Runs [`train_fold`] on each split; folds go to the rayon pool.
pub fn cross_validate_splits(
    dataset: &Dataset,
    splits: &[FoldSplit],
    config: &TrainConfig,
    ablation: AblationSpec,
) -> Result<CvReport> {
    if splits.is_empty() {
        return Err(Error::Contract("cross-validation needs at least one fold".into()));
    }
    let folds: Vec<FoldResult> = splits
        .par_iter()
        .map(|s| {
            train_fold(dataset, s, config, ablation).map_err(|e| Error::Contract(format!("fold {} failed: {e}", s.fold)))
        })
        .collect::<Result<_>>()?;
    let c_index = MeanStd::of(folds.iter().map(|f| f.validation.c_index));
    let auc = MeanStd::of(folds.iter().map(|f| f.validation.auc));
    Ok(CvReport { folds, c_index, auc })
}

/// `k` Monte Carlo folds holding out [`VALIDATION_RATIO`] of the samples,
/// split with `config.seed`.
pub fn cross_validate(dataset: &Dataset, k: usize, config: &TrainConfig, ablation: AblationSpec) -> Result<CvReport> {
    let splits = monte_carlo_splits(&dataset.ids(), k, VALIDATION_RATIO, config.seed)?;
    cross_validate_splits(dataset, &splits, config, ablation)
}

/// Cross-validates every preset A–E on the same `k` Monte Carlo splits.
pub fn run_ablation_matrix(dataset: &Dataset, k: usize, config: &TrainConfig) -> Result<Vec<(AblationRow, CvReport)>> {
    let splits = monte_carlo_splits(&dataset.ids(), k, VALIDATION_RATIO, config.seed)?;
    run_ablation_matrix_splits(dataset, &splits, config)
}

pub fn run_ablation_matrix_splits(
    dataset: &Dataset,
    splits: &[FoldSplit],
    config: &TrainConfig,
) -> Result<Vec<(AblationRow, CvReport)>> {
    AblationSpec::PRESETS
        .iter()
        .map(|&name| {
            let spec = AblationSpec::preset(name).expect("preset");
            let params = Mgct::new(config.model_config(dataset, spec)?, 0)?.parameter_count();
            let report = cross_validate_splits(dataset, splits, config, spec)?;
            log::info!("Model {name}: c-index {}", fmt_opt(report.c_index.map(|m| m.mean)));
            let row = AblationRow { name, spec, parameters: params, c_index: report.c_index, auc: report.auc };
            Ok((row, report))
        })
        .collect()
}
