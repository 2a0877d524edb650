//! Gated attention pooling.
//!
//! For tokens `R = [r_1 … r_n]` (columns):
//!
//! ```text
//! s_i = W · ( tanh(V r_i) ⊙ sigm(U r_i) )
//! α   = softmax(s)
//! out = Σ_i α_i r_i
//! ```

use crate::error::{Error, Result};
use crate::model::params::{Bound, Initializer, ParamId};
use crate::numkit::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GatedPoolParams {
    /// `d_a × d`, tanh branch.
    pub v: ParamId,
    /// `d_a × d`, sigmoid branch.
    pub u: ParamId,
    /// `1 × d_a` scorer.
    pub w: ParamId,
}

impl GatedPoolParams {
    pub fn init(init: &mut Initializer<'_>, prefix: &str, d: usize, d_a: usize) -> Result<Self> {
        if d_a == 0 {
            return Err(Error::Contract("gated pooling needs d_a >= 1".into()));
        }
        Ok(GatedPoolParams {
            v: init.matrix(format!("{prefix}.v"), d_a, d),
            u: init.matrix(format!("{prefix}.u"), d_a, d),
            w: init.matrix(format!("{prefix}.w"), 1, d_a),
        })
    }
}

/// Returns the pooled `d × 1` token and the `1 × n` weights `α`.
pub fn gated_attention_pool(tape: &Tape, bound: &Bound, tokens: Var, params: &GatedPoolParams) -> Result<(Var, Var)> {
    if tape.shape(tokens).1 == 0 {
        return Err(Error::Contract("cannot pool zero tokens".into()));
    }
    let gate_t = tape.tanh(tape.matmul(bound[params.v], tokens)?);
    let gate_s = tape.sigmoid(tape.matmul(bound[params.u], tokens)?);
    let scores = tape.matmul(bound[params.w], tape.mul(gate_t, gate_s)?)?;
    let alpha = tape.softmax_rows(scores);
    let pooled = tape.matmul(tokens, tape.transpose(alpha))?;
    Ok((pooled, alpha))
}
