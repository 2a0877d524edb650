//! Numerical self-checks behind `mgct verify`.
//!
//! Every differentiable op, each model component and the full model are
//! compared against central finite differences; attention and pooling
//! weights are checked to lie on the simplex; the fused embedding is checked
//! for invariance to patch order.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::Sample;
use crate::embedders::{embed_genomics, DropoutCtx, SnnParams};
use crate::error::Result;
use crate::model::{
    gated_attention_pool, mgca_with_weights, mgct_layer, AblationSpec, Bound, FeedForward, FusionConfig,
    GatedPoolParams, Initializer, MgcaParams, Mgct, MgctLayerParams, ModelConfig, ParamStore,
};
use crate::numkit::{check_gradients, Axis, DropoutKey, Fault, GradCheckConfig, GradCheckReport, Tape, Tensor, Var};
use crate::survival::{nll_loss_var, LossConfig, SurvivalLabel};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Deliberate bug in the analytic gradients, to prove the suite bites.
    pub fault: Option<Fault>,
}

/// Shape of the model used by [`model_gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckSpec {
    pub d: usize,
    pub patches: usize,
    pub categories: usize,
    pub genes: usize,
    pub d_in: usize,
    pub snn_hidden: usize,
    pub bins: usize,
    pub ablation: AblationSpec,
}

impl Default for ModelCheckSpec {
    fn default() -> Self {
        ModelCheckSpec {
            d: 8,
            patches: 12,
            categories: 6,
            genes: 4,
            d_in: 8,
            snn_hidden: 16,
            bins: 4,
            ablation: AblationSpec::full(),
        }
    }
}

impl ModelCheckSpec {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d_in: self.d_in,
            genomic_sizes: vec![self.genes; self.categories],
            snn_hidden: self.snn_hidden,
            dropout: 0.25,
            fusion: FusionConfig {
                s1: 1,
                s2: 2,
                d: self.d,
                heads: 1,
                d_a: self.d,
                d_ff: 2 * self.d,
                bins: self.bins,
                residual: false,
            },
            ablation: self.ablation,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Standard-normal entries pushed at least `gap` away from zero, so kinks
/// stay outside the finite-difference stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gap: f64) -> Tensor {
    gaussian(rng, rows, cols).map(|v| if v.abs() < gap { v.signum() * gap + v } else { v })
}

/// Random synthetic sample matching `spec`.
pub fn random_sample(spec: &ModelCheckSpec, rng: &mut ChaCha8Rng) -> Sample {
    Sample {
        id: "check".into(),
        patches: gaussian(rng, spec.d_in, spec.patches),
        genomic: (0..spec.categories).map(|_| gaussian(rng, spec.genes, 1).into_data()).collect(),
        t: 5.0,
        event: true,
        truth_risk: None,
    }
}

/// Finite-difference check of every parameter and input of the full model,
/// with training-mode dropout and the survival loss on top.
pub fn model_gradient_check(spec: &ModelCheckSpec, seed: u64, fault: Option<Fault>) -> Result<GradCheckReport> {
    let model = Mgct::new(spec.model_config(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let sample = random_sample(spec, &mut rng);
    let label = SurvivalLabel::new(sample.t, true, 1);
    let np = model.store.len();
    let mut inputs = model.store.values().to_vec();
    inputs.push(sample.patches.clone());
    inputs.extend(sample.genomic.iter().map(|g| Tensor::column(g)));
    let ctx = DropoutCtx { training: true, seed, step: 3 };
    check_gradients(
        &inputs,
        |tape, v| {
            let bound = Bound::from_vars(v[..np].to_vec());
            let logits = model.forward(tape, &bound, v[np], &v[np + 1..], ctx)?;
            nll_loss_var(tape, tape.sigmoid(logits), &label, LossConfig::default())
        },
        GradCheckConfig { fault, ..GradCheckConfig::default() },
    )
}

/// Largest `|fuse(Hπ) − fuse(H)|_∞` over `trials` random patch permutations.
pub fn permutation_max_diff(model: &Mgct, sample: &Sample, trials: usize, seed: u64) -> Result<f64> {
    let reference = model.embed(sample)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..sample.patches.cols()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        order.shuffle(&mut rng);
        let permuted = Sample { patches: sample.patches.permute_cols(&order)?, ..sample.clone() };
        worst = worst.max(model.embed(&permuted)?.max_abs_diff(&reference)?);
    }
    Ok(worst)
}

/// Worst deviation from the simplex among attention rows and pooling weights:
/// `max(|Σ − 1|, −min)` over `cases` random shapes.
pub fn simplex_violation(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut check_rows = |t: &Tensor| {
        for r in 0..t.rows() {
            let row = t.row(r);
            let sum: f64 = row.iter().sum();
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            worst = worst.max((sum - 1.0).abs()).max(-min);
        }
    };
    for _ in 0..cases {
        let heads = rng.random_range(1..=3);
        let d = heads * rng.random_range(1..=4);
        let (m, n) = (rng.random_range(1..=8), rng.random_range(1..=16));
        let scale = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let mut store = ParamStore::new();
        let mut init = Initializer::new(&mut store, rng.random());
        let attn = MgcaParams::init(&mut init, "a", d, heads)?;
        let pool = GatedPoolParams::init(&mut init, "p", d, rng.random_range(1..=6))?;
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let q = tape.constant(gaussian(&mut rng, d, m).scale(scale));
        let c = tape.constant(gaussian(&mut rng, d, n).scale(scale));
        let out = mgca_with_weights(&tape, &bound, q, c, &attn)?;
        for w in &out.weights {
            check_rows(&tape.value(*w));
        }
        let (_, alpha) = gated_attention_pool(&tape, &bound, c, &pool)?;
        check_rows(&tape.value(alpha));
    }
    Ok(worst)
}

type OpFn = Box<dyn Fn(&Tape, &[Var]) -> Result<Var>>;

/// Reduces a node to a scalar with fixed random weights so no entry's
/// gradient cancels by symmetry.
fn weighted_sum(tape: &Tape, x: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(x);
    let w = gaussian(&mut ChaCha8Rng::seed_from_u64(seed), r, c);
    Ok(tape.sum(tape.mul(x, tape.constant(w))?))
}

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor>, OpFn)> {
    let g = |rng: &mut ChaCha8Rng, r, c| gaussian(rng, r, c);
    let key = DropoutKey::new(9, 1, 4);
    vec![
        ("matmul", vec![g(rng, 3, 4), g(rng, 4, 2)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.matmul(v[0], v[1])?, 1))),
        ("transpose", vec![g(rng, 3, 2)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.transpose(v[0]), 2))),
        ("add", vec![g(rng, 2, 3), g(rng, 2, 3)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.add(v[0], v[1])?, 3))),
        ("mul", vec![g(rng, 2, 3), g(rng, 2, 3)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.mul(v[0], v[1])?, 4))),
        (
            "add_col_bias",
            vec![g(rng, 3, 4), g(rng, 3, 1)],
            Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.add_col_bias(v[0], v[1])?, 5)),
        ),
        ("affine", vec![g(rng, 2, 2)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.affine(v[0], -1.5, 0.25), 6))),
        ("tanh", vec![g(rng, 3, 3)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.tanh(v[0]), 7))),
        ("sigmoid", vec![g(rng, 3, 3)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.sigmoid(v[0]), 8))),
        ("elu", vec![away_from_zero(rng, 3, 3, 0.05)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.elu(v[0]), 9))),
        ("relu", vec![away_from_zero(rng, 3, 3, 0.05)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.relu(v[0]), 10))),
        ("softmax_rows", vec![g(rng, 3, 5)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.softmax_rows(v[0]), 11))),
        (
            "concat",
            vec![g(rng, 2, 3), g(rng, 2, 2), g(rng, 1, 3)],
            Box::new(|t: &Tape, v: &[Var]| {
                let cols = t.concat(v[0], v[1], Axis::Cols)?;
                let rows = t.concat(v[0], v[2], Axis::Rows)?;
                t.add(weighted_sum(t, cols, 12)?, weighted_sum(t, rows, 13)?)
            }),
        ),
        (
            "slice",
            vec![g(rng, 4, 5)],
            Box::new(|t: &Tape, v: &[Var]| {
                let a = t.slice(v[0], 1, 3, Axis::Rows)?;
                let b = t.slice(v[0], 2, 5, Axis::Cols)?;
                t.add(weighted_sum(t, a, 14)?, weighted_sum(t, b, 15)?)
            }),
        ),
        ("sum", vec![g(rng, 2, 4)], Box::new(|t: &Tape, v: &[Var]| Ok(t.sum(t.mul(v[0], v[0])?)))),
        ("mean_cols", vec![g(rng, 3, 4)], Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.mean_cols(v[0])?, 16))),
        (
            "log_clamped",
            vec![Tensor::from_fn(2, 3, |r, c| 0.1 + 0.15 * (r * 3 + c) as f64)],
            Box::new(|t: &Tape, v: &[Var]| weighted_sum(t, t.log_clamped(v[0], 1e-7), 17)),
        ),
        (
            "alpha_dropout",
            vec![g(rng, 4, 3)],
            Box::new(move |t: &Tape, v: &[Var]| weighted_sum(t, t.alpha_dropout(v[0], 0.3, key, true)?, 18)),
        ),
        (
            "nll_loss",
            vec![g(rng, 4, 1)],
            Box::new(|t: &Tape, v: &[Var]| {
                let h = t.sigmoid(v[0]);
                let event = nll_loss_var(t, h, &SurvivalLabel::new(1.0, true, 2), LossConfig { alpha: 0.3 })?;
                let censored = nll_loss_var(t, h, &SurvivalLabel::new(1.0, false, 1), LossConfig { alpha: 0.3 })?;
                t.add(event, censored)
            }),
        ),
    ]
}

/// Parameter leaves first, then the listed extra inputs.
fn component_case(
    seed: u64,
    build: impl FnOnce(&mut Initializer<'_>) -> Result<OpFnParams>,
    extra: Vec<Tensor>,
) -> Result<(Vec<Tensor>, OpFn)> {
    let mut store = ParamStore::new();
    let f = build(&mut Initializer::new(&mut store, seed))?;
    let np = store.len();
    let mut inputs = store.values().to_vec();
    inputs.extend(extra);
    let op: OpFn = Box::new(move |t: &Tape, v: &[Var]| f(t, &Bound::from_vars(v[..np].to_vec()), &v[np..]));
    Ok((inputs, op))
}

type OpFnParams = Box<dyn Fn(&Tape, &Bound, &[Var]) -> Result<Var>>;

fn component_cases(rng: &mut ChaCha8Rng) -> Result<Vec<(&'static str, Vec<Tensor>, OpFn)>> {
    let (d, m, n) = (4, 2, 3);
    let mut cases = Vec::new();
    let (i, f) = component_case(
        1,
        |init| {
            let p = MgcaParams::init(init, "a", d, 2)?;
            Ok(Box::new(move |t: &Tape, b: &Bound, x: &[Var]| {
                weighted_sum(t, mgca_with_weights(t, b, x[0], x[1], &p)?.tokens, 20)
            }) as OpFnParams)
        },
        vec![gaussian(rng, d, m), gaussian(rng, d, n)],
    )?;
    cases.push(("mgca", i, f));
    let (i, f) = component_case(
        2,
        |init| {
            let p = GatedPoolParams::init(init, "p", d, 3)?;
            Ok(Box::new(move |t: &Tape, b: &Bound, x: &[Var]| weighted_sum(t, gated_attention_pool(t, b, x[0], &p)?.0, 21))
                as OpFnParams)
        },
        vec![gaussian(rng, d, n)],
    )?;
    cases.push(("gated_pool", i, f));
    let (i, f) = component_case(
        3,
        |init| {
            let p = FeedForward::init(init, "f", d, 2 * d);
            Ok(Box::new(move |t: &Tape, b: &Bound, x: &[Var]| weighted_sum(t, p.forward(t, b, x[0])?, 22)) as OpFnParams)
        },
        vec![gaussian(rng, d, m)],
    )?;
    cases.push(("feedforward", i, f));
    for (name, stage_final) in [("mgct_layer", false), ("mgct_layer_final", true)] {
        let (i, f) = component_case(
            4,
            |init| {
                let p = MgctLayerParams {
                    mgca: Some(MgcaParams::init(init, "a", d, 1)?),
                    pool: Some(GatedPoolParams::init(init, "p", d, d)?),
                    mlp: Some(FeedForward::init(init, "f", d, 2 * d)),
                    residual: false,
                };
                Ok(Box::new(move |t: &Tape, b: &Bound, x: &[Var]| {
                    weighted_sum(t, mgct_layer(t, b, x[0], x[1], &p, stage_final)?, 23)
                }) as OpFnParams)
            },
            vec![gaussian(rng, d, m), gaussian(rng, d, n)],
        )?;
        cases.push((name, i, f));
    }
    let sizes = [3, 2];
    let (i, f) = component_case(
        5,
        |init| {
            let p = SnnParams::init(init, &sizes, 5, d, 0.25);
            let ctx = DropoutCtx { training: true, seed: 1, step: 2 };
            Ok(Box::new(move |t: &Tape, b: &Bound, x: &[Var]| weighted_sum(t, embed_genomics(t, b, x, &p, ctx)?, 24))
                as OpFnParams)
        },
        sizes.iter().map(|&s| gaussian(rng, s, 1)).collect(),
    )?;
    cases.push(("snn_embedder", i, f));
    Ok(cases)
}

fn timed(name: impl Into<String>, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult { name: name.into(), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn describe(r: &GradCheckReport) -> (bool, String) {
    (
        r.passed(),
        format!(
            "{} entries, max rel err {:.2e} (tol {:.0e}), worst analytic {:.6e} vs numeric {:.6e}",
            r.checked, r.max_rel_err, r.tolerance, r.analytic_at_worst, r.numeric_at_worst
        ),
    )
}

/// Runs every check; never stops early.
pub fn run_checks(cfg: VerifyConfig) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gc = GradCheckConfig { fault: cfg.fault, ..GradCheckConfig::default() };
    let mut out = Vec::new();

    for (name, inputs, f) in op_cases(&mut rng) {
        out.push(timed(format!("grad/op/{name}"), || Ok(describe(&check_gradients(&inputs, &f, gc)?))));
    }
    match component_cases(&mut rng) {
        Ok(cases) => {
            for (name, inputs, f) in cases {
                out.push(timed(format!("grad/component/{name}"), || Ok(describe(&check_gradients(&inputs, &f, gc)?))));
            }
        }
        Err(e) => out.push(CheckResult {
            name: "grad/component".into(),
            passed: false,
            detail: format!("error: {e}"),
            seconds: 0.0,
        }),
    }
    for name in AblationSpec::PRESETS {
        let spec = ModelCheckSpec { ablation: AblationSpec::preset(name).unwrap(), ..ModelCheckSpec::default() };
        out.push(timed(format!("grad/model/{name}"), || Ok(describe(&model_gradient_check(&spec, cfg.seed, cfg.fault)?))));
    }

    out.push(timed("grad/model/every_parameter_reached", || {
        let spec = ModelCheckSpec::default();
        let model = Mgct::new(spec.model_config(), cfg.seed)?;
        let sample = random_sample(&spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let tape = Tape::with_fault(cfg.fault);
        let bound = model.store.bind(&tape);
        let logits = model.forward_sample(&tape, &bound, &sample, DropoutCtx::eval())?;
        let loss = nll_loss_var(&tape, tape.sigmoid(logits), &SurvivalLabel::new(1.0, true, 1), LossConfig::default())?;
        let grads = tape.backward(loss)?;
        let dead: Vec<&str> = model
            .store
            .names()
            .iter()
            .zip(bound.vars())
            .filter(|(_, &v)| !grads.get(v).is_some_and(|g| g.is_finite()))
            .map(|(n, _)| n.as_str())
            .collect();
        Ok((dead.is_empty(), format!("{} parameters, unreached or non-finite: {dead:?}", model.store.len())))
    }));

    out.push(timed("simplex/attention_and_pooling", || {
        let worst = simplex_violation(200, cfg.seed)?;
        Ok((worst <= 1e-12, format!("200 random shapes, worst deviation {worst:.2e} (tol 1e-12)")))
    }));

    out.push(timed("permutation/patches", || {
        let spec = ModelCheckSpec::default();
        let model = Mgct::new(spec.model_config(), cfg.seed)?;
        let sample = random_sample(&spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed + 1));
        let worst = permutation_max_diff(&model, &sample, 100, cfg.seed)?;
        Ok((worst < 1e-9, format!("100 permutations, max |Δ| {worst:.2e} (tol 1e-9)")))
    }));
    out
}
