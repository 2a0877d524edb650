//! Per-modality embedders mapping raw inputs to `d`-wide tokens.
//!
//! Genomics: each functional category has its own self-normalizing network
//! (two hidden layers of linear → ELU → alpha dropout, then a projection to
//! `d`). The `S` outputs become the columns of `G ∈ R^{d×S}`.
//!
//! Histology: a shared affine map projects every `d_in`-wide patch
//! embedding to width `d`, giving `H ∈ R^{d×N}`.

use crate::error::{Error, Result};
use crate::model::params::{Bound, Initializer, Linear};
use crate::numkit::{Axis, DropoutKey, Tape, Var};

/// One category's network.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnPath {
    pub input_len: usize,
    pub hidden1: Linear,
    pub hidden2: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnParams {
    pub paths: Vec<SnnPath>,
    pub d: usize,
    /// Alpha-dropout rate after each hidden layer.
    pub dropout: f64,
}

impl SnnParams {
    pub fn init(init: &mut Initializer<'_>, sizes: &[usize], hidden: usize, d: usize, dropout: f64) -> Self {
        let paths = sizes
            .iter()
            .enumerate()
            .map(|(s, &len)| SnnPath {
                input_len: len,
                hidden1: init.linear(&format!("snn.{s}.fc1"), hidden, len, true),
                hidden2: init.linear(&format!("snn.{s}.fc2"), hidden, hidden, true),
                output: init.linear(&format!("snn.{s}.out"), d, hidden, true),
            })
            .collect();
        SnnParams { paths, d, dropout }
    }
}

/// Dropout context for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutCtx {
    pub training: bool,
    pub seed: u64,
    /// Distinguishes forward passes (typically the global sample counter).
    pub step: u64,
}

impl DropoutCtx {
    pub fn eval() -> Self {
        DropoutCtx { training: false, seed: 0, step: 0 }
    }
}

/// `G = [g_1 … g_S]`, one column per category.
pub fn embed_genomics(tape: &Tape, bound: &Bound, raw: &[Var], params: &SnnParams, ctx: DropoutCtx) -> Result<Var> {
    if raw.len() != params.paths.len() {
        return Err(Error::Shape(format!(
            "{} genomic categories supplied, network expects {}",
            raw.len(),
            params.paths.len()
        )));
    }
    let mut g: Option<Var> = None;
    for (s, (&x, path)) in raw.iter().zip(&params.paths).enumerate() {
        if tape.shape(x) != (path.input_len, 1) {
            let (r, c) = tape.shape(x);
            return Err(Error::Shape(format!(
                "category {s} input is {r}x{c}, expected {}x1",
                path.input_len
            )));
        }
        let mut h = x;
        for (layer, lin) in [&path.hidden1, &path.hidden2].into_iter().enumerate() {
            h = tape.elu(lin.forward(tape, bound, h)?);
            let key = DropoutKey::new(ctx.seed, (s * 2 + layer) as u64, ctx.step);
            h = tape.alpha_dropout(h, params.dropout, key, ctx.training)?;
        }
        let col = path.output.forward(tape, bound, h)?;
        g = Some(match g {
            None => col,
            Some(prev) => tape.concat(prev, col, Axis::Cols)?,
        });
    }
    g.ok_or_else(|| Error::Contract("no genomic categories".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchProjParams {
    pub proj: Linear,
    pub d_in: usize,
}

impl PatchProjParams {
    pub fn init(init: &mut Initializer<'_>, d_in: usize, d: usize) -> Self {
        PatchProjParams { proj: init.linear("patch.proj", d, d_in, true), d_in }
    }
}

/// `H = W·patches + b` per patch column.
pub fn embed_patches(tape: &Tape, bound: &Bound, patches: Var, params: &PatchProjParams) -> Result<Var> {
    let (d_in, n) = tape.shape(patches);
    if d_in != params.d_in {
        return Err(Error::Shape(format!("bag width {d_in} differs from projection input {}", params.d_in)));
    }
    if n == 0 {
        return Err(Error::Contract("empty bag".into()));
    }
    params.proj.forward(tape, bound, patches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ParamStore;
    use crate::numkit::Tensor;

    fn genomic_inputs(tape: &Tape, sizes: &[usize], seed: f64) -> Vec<Var> {
        sizes
            .iter()
            .enumerate()
            .map(|(s, &n)| tape.constant(Tensor::from_fn(n, 1, |r, _| ((r + 3 * s) as f64 * seed).sin())))
            .collect()
    }

    #[test]
    fn six_categories_width_64() {
        let sizes = [3, 5, 2, 4, 4, 1];
        let mut store = ParamStore::new();
        let snn = SnnParams::init(&mut Initializer::new(&mut store, 1), &sizes, 16, 64, 0.25);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let g = embed_genomics(&tape, &bound, &genomic_inputs(&tape, &sizes, 0.7), &snn, DropoutCtx::eval()).unwrap();
        assert_eq!(tape.shape(g), (64, 6));
    }

    #[test]
    fn zero_params_give_zero_matrix() {
        let sizes = [2, 2];
        let mut store = ParamStore::new();
        let snn = SnnParams::init(&mut Initializer::new(&mut store, 1), &sizes, 8, 4, 0.0);
        store.values_mut().iter_mut().for_each(|t| *t = Tensor::zeros(t.rows(), t.cols()));
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let g = embed_genomics(&tape, &bound, &genomic_inputs(&tape, &sizes, 1.3), &snn, DropoutCtx::eval()).unwrap();
        assert_eq!(tape.value(g), Tensor::zeros(4, 2));
    }

    #[test]
    fn training_without_dropout_matches_eval() {
        let sizes = [3, 2];
        let mut store = ParamStore::new();
        let snn = SnnParams::init(&mut Initializer::new(&mut store, 5), &sizes, 8, 4, 0.0);
        let run = |ctx| {
            let tape = Tape::new();
            let bound = store.bind(&tape);
            let g = embed_genomics(&tape, &bound, &genomic_inputs(&tape, &sizes, 0.4), &snn, ctx).unwrap();
            tape.value(g)
        };
        assert_eq!(run(DropoutCtx::eval()), run(DropoutCtx { training: true, seed: 3, step: 9 }));
    }

    #[test]
    fn column_depends_only_on_its_category() {
        let sizes = [3, 4, 2];
        let mut store = ParamStore::new();
        let snn = SnnParams::init(&mut Initializer::new(&mut store, 2), &sizes, 8, 5, 0.25);
        let ctx = DropoutCtx { training: true, seed: 1, step: 4 };
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let full = genomic_inputs(&tape, &sizes, 0.9);
        let g_full = tape.value(embed_genomics(&tape, &bound, &full, &snn, ctx).unwrap());
        let mut zeroed = full.clone();
        zeroed[0] = tape.constant(Tensor::zeros(3, 1));
        zeroed[2] = tape.constant(Tensor::zeros(2, 1));
        let g_zero = tape.value(embed_genomics(&tape, &bound, &zeroed, &snn, ctx).unwrap());
        assert_eq!(g_full.col(1), g_zero.col(1));
        assert_ne!(g_full.col(0), g_zero.col(0));
    }

    #[test]
    fn length_mismatch_is_a_shape_error() {
        let sizes = [3, 4];
        let mut store = ParamStore::new();
        let snn = SnnParams::init(&mut Initializer::new(&mut store, 2), &sizes, 8, 5, 0.25);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let bad = genomic_inputs(&tape, &[3, 5], 0.1);
        assert!(matches!(embed_genomics(&tape, &bound, &bad, &snn, DropoutCtx::eval()), Err(Error::Shape(_))));
        assert!(embed_genomics(&tape, &bound, &bad[..1], &snn, DropoutCtx::eval()).is_err());
    }

    #[test]
    fn identity_projection_and_permutation() {
        let mut store = ParamStore::new();
        let proj = PatchProjParams::init(&mut Initializer::new(&mut store, 0), 4, 4);
        store.values_mut()[proj.proj.weight.index()] = Tensor::identity(4);
        let x = Tensor::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.21 - 1.0);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let h = embed_patches(&tape, &bound, tape.constant(x.clone()), &proj).unwrap();
        assert_eq!(tape.value(h), x);

        let single = embed_patches(&tape, &bound, tape.constant(x.slice(0, 1, Axis::Cols).unwrap()), &proj).unwrap();
        assert_eq!(tape.shape(single), (4, 1));

        let mut store = ParamStore::new();
        let proj = PatchProjParams::init(&mut Initializer::new(&mut store, 8), 4, 6);
        let bound = store.bind(&tape);
        let order = [2, 0, 1];
        let a = tape.value(embed_patches(&tape, &bound, tape.constant(x.clone()), &proj).unwrap());
        let b = tape.value(embed_patches(&tape, &bound, tape.constant(x.permute_cols(&order).unwrap()), &proj).unwrap());
        assert_eq!(a.permute_cols(&order).unwrap(), b);
    }
}
