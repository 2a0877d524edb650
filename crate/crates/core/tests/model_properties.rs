use mgct::model::{gated_attention_pool, mgca_with_weights, AblationSpec, GatedPoolParams, Initializer, MgcaParams, Mgct, ParamStore};
use mgct::numkit::{check_gradients, Axis, Fault, GradCheckConfig, Tape, Tensor};
use mgct::verify::{model_gradient_check, permutation_max_diff, random_sample, run_checks, ModelCheckSpec, VerifyConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor(rows: usize, cols: usize, seed: u64, scale: f64) -> Tensor {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(rows, cols, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
}

#[test]
fn verify_suite_passes() {
    let failed: Vec<_> = run_checks(VerifyConfig::default()).into_iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn injected_fault_is_caught() {
    let spec = ModelCheckSpec::default();
    assert!(model_gradient_check(&spec, 3, None).unwrap().passed());
    assert!(!model_gradient_check(&spec, 3, Some(Fault::TanhGradSign)).unwrap().passed());
}

#[test]
fn composite_expression_gradients() {
    // softmax(tanh(A B)) weighted against log of a sigmoid, through concat and slicing.
    let inputs = [tensor(3, 4, 1, 1.0), tensor(4, 5, 2, 1.0), tensor(3, 5, 3, 1.0)];
    let report = check_gradients(
        &inputs,
        |t, v| {
            let s = t.softmax_rows(t.tanh(t.matmul(v[0], v[1])?));
            let both = t.concat(s, t.sigmoid(v[2]), Axis::Cols)?;
            let part = t.slice(both, 2, 8, Axis::Cols)?;
            Ok(t.sum(t.log_clamped(t.affine(part, 0.5, 0.25), 1e-12)))
        },
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.checked, 12 + 20 + 15);
}

#[test]
fn every_preset_has_correct_gradients() {
    for name in AblationSpec::PRESETS {
        let spec = ModelCheckSpec { ablation: AblationSpec::preset(name).unwrap(), patches: 5, ..ModelCheckSpec::default() };
        let report = model_gradient_check(&spec, 11, None).unwrap();
        assert!(report.passed(), "model {name}: {report:?}");
    }
}

#[test]
fn patch_permutations_leave_fusion_unchanged() {
    let spec = ModelCheckSpec::default();
    for preset in AblationSpec::PRESETS {
        let spec = ModelCheckSpec { ablation: AblationSpec::preset(preset).unwrap(), ..spec.clone() };
        let model = Mgct::new(spec.model_config(), 5).unwrap();
        let sample = random_sample(&spec, &mut ChaCha8Rng::seed_from_u64(6));
        let worst = permutation_max_diff(&model, &sample, 20, 7).unwrap();
        assert!(worst < 1e-9, "model {preset}: {worst}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn attention_and_pooling_weights_are_simplices(
        heads in 1usize..=3,
        per_head in 1usize..=4,
        m in 1usize..=8,
        n in 1usize..=16,
        d_a in 1usize..=6,
        scale in prop::sample::select(vec![0.01, 1.0, 10.0, 100.0]),
        seed in any::<u64>(),
    ) {
        let d = heads * per_head;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(&mut store, seed);
        let attn = MgcaParams::init(&mut init, "a", d, heads).unwrap();
        let pool = GatedPoolParams::init(&mut init, "p", d, d_a).unwrap();
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let q = tape.constant(tensor(d, m, seed ^ 1, scale));
        let c = tape.constant(tensor(d, n, seed ^ 2, scale));
        let out = mgca_with_weights(&tape, &bound, q, c, &attn).unwrap();
        prop_assert_eq!(tape.shape(out.tokens), (d, m));
        prop_assert!(tape.value(out.tokens).is_finite());
        prop_assert_eq!(out.weights.len(), heads);
        let (pooled, alpha) = gated_attention_pool(&tape, &bound, c, &pool).unwrap();
        prop_assert_eq!(tape.shape(pooled), (d, 1));
        let mut rows: Vec<Tensor> = out.weights.iter().map(|w| tape.value(*w)).collect();
        rows.push(tape.value(alpha));
        for w in rows {
            for r in 0..w.rows() {
                let row = w.row(r);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_is_finite_for_any_bag_size(
        patches in 1usize..40,
        preset in prop::sample::select(AblationSpec::PRESETS.to_vec()),
        scale in prop::sample::select(vec![0.01, 1.0, 50.0]),
        seed in any::<u64>(),
    ) {
        let spec = ModelCheckSpec { patches, ablation: AblationSpec::preset(preset).unwrap(), ..ModelCheckSpec::default() };
        let model = Mgct::new(spec.model_config(), seed).unwrap();
        let mut sample = random_sample(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        sample.patches = sample.patches.scale(scale);
        let pred = model.predict(&sample).unwrap();
        prop_assert!(pred.hazards.iter().all(|h| h.is_finite() && (0.0..=1.0).contains(h)));
        prop_assert!(pred.risk.is_finite());
        let emb = model.embed(&sample).unwrap();
        prop_assert_eq!(emb.shape(), (2 * spec.d, 1));
    }
}
