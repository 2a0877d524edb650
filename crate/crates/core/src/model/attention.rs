//! Mutual-guided cross-modality attention (MGCA).
//!
//! Queries come from one modality and keys/values from the other:
//!
//! ```text
//! A_h   = softmax_rows( (W_q X)_hᵀ (W_k C)_h / √d_k )      m × n
//! out_h = (W_v C)_h · A_hᵀ                                d_k × m
//! ```
//!
//! where `X` holds `m` query tokens and `C` holds `n` context tokens, both as
//! columns of width `d`. Heads are stacked back to `d × m`.

use crate::error::{Error, Result};
use crate::model::params::{Bound, Initializer, ParamId};
use crate::numkit::{Axis, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct MgcaParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub heads: usize,
    pub d: usize,
}

impl MgcaParams {
    pub fn init(init: &mut Initializer<'_>, prefix: &str, d: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Contract(format!("width {d} is not divisible by {heads} heads")));
        }
        Ok(MgcaParams {
            w_q: init.matrix(format!("{prefix}.w_q"), d, d),
            w_k: init.matrix(format!("{prefix}.w_k"), d, d),
            w_v: init.matrix(format!("{prefix}.w_v"), d, d),
            heads,
            d,
        })
    }

    pub fn head_width(&self) -> usize {
        self.d / self.heads
    }
}

/// Attention output together with each head's `m × n` weight matrix.
pub struct MgcaOutput {
    pub tokens: Var,
    pub weights: Vec<Var>,
}

pub fn mgca(tape: &Tape, bound: &Bound, query: Var, context: Var, params: &MgcaParams) -> Result<Var> {
    Ok(mgca_with_weights(tape, bound, query, context, params)?.tokens)
}

pub fn mgca_with_weights(
    tape: &Tape,
    bound: &Bound,
    query: Var,
    context: Var,
    params: &MgcaParams,
) -> Result<MgcaOutput> {
    let (dq, m) = tape.shape(query);
    let (dc, n) = tape.shape(context);
    if m == 0 || n == 0 {
        return Err(Error::Contract(format!("attention needs tokens on both sides (m = {m}, n = {n})")));
    }
    if dq != params.d || dc != params.d {
        return Err(Error::Shape(format!("token widths {dq} and {dc} differ from model width {}", params.d)));
    }
    let q = tape.matmul(bound[params.w_q], query)?;
    let k = tape.matmul(bound[params.w_k], context)?;
    let v = tape.matmul(bound[params.w_v], context)?;
    let dk = params.head_width();
    let scale = 1.0 / (dk as f64).sqrt();

    let mut out: Option<Var> = None;
    let mut weights = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let (q_h, k_h, v_h) = if params.heads == 1 {
            (q, k, v)
        } else {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            (tape.slice(q, lo, hi, Axis::Rows)?, tape.slice(k, lo, hi, Axis::Rows)?, tape.slice(v, lo, hi, Axis::Rows)?)
        };
        let scores = tape.scale(tape.matmul(tape.transpose(q_h), k_h)?, scale);
        let attn = tape.softmax_rows(scores);
        let head = tape.matmul(v_h, tape.transpose(attn))?;
        weights.push(attn);
        out = Some(match out {
            None => head,
            Some(prev) => tape.concat(prev, head, Axis::Rows)?,
        });
    }
    Ok(MgcaOutput { tokens: out.expect("at least one head"), weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ParamStore;
    use crate::numkit::Tensor;

    fn setup(d: usize, heads: usize, seed: u64) -> (ParamStore, MgcaParams) {
        let mut store = ParamStore::new();
        let p = MgcaParams::init(&mut Initializer::new(&mut store, seed), "a", d, heads).unwrap();
        (store, p)
    }

    fn tokens(d: usize, n: usize, k: f64) -> Tensor {
        Tensor::from_fn(d, n, |r, c| ((r * n + c) as f64 * k).sin() * 1.5)
    }

    #[test]
    fn shape_follows_queries() {
        let (store, p) = setup(8, 1, 1);
        let tape = Tape::new();
        let b = store.bind(&tape);
        let out = mgca(&tape, &b, tape.constant(tokens(8, 6, 0.3)), tape.constant(tokens(8, 12, 0.7)), &p).unwrap();
        assert_eq!(tape.shape(out), (8, 6));
    }

    #[test]
    fn single_key_copies_value() {
        let (store, p) = setup(4, 2, 2);
        let tape = Tape::new();
        let b = store.bind(&tape);
        let ctx = tokens(4, 1, 0.9);
        let out = mgca_with_weights(&tape, &b, tape.constant(tokens(4, 3, 0.2)), tape.constant(ctx.clone()), &p).unwrap();
        for w in &out.weights {
            assert!(tape.value(*w).data().iter().all(|&a| a == 1.0));
        }
        let v = store.get(p.w_v).matmul(&ctx).unwrap();
        let y = tape.value(out.tokens);
        for c in 0..3 {
            assert_eq!(y.col(c), v.col(0));
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut store = ParamStore::new();
        assert!(MgcaParams::init(&mut Initializer::new(&mut store, 0), "a", 6, 4).is_err());
    }

    #[test]
    fn empty_context_rejected() {
        let (store, p) = setup(4, 1, 3);
        let tape = Tape::new();
        let b = store.bind(&tape);
        let empty = tape.constant(Tensor::zeros(4, 0));
        assert!(matches!(mgca(&tape, &b, tape.constant(tokens(4, 2, 0.1)), empty, &p), Err(Error::Contract(_))));
    }
}
