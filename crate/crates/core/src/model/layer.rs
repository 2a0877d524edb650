//! The MGCT layer: cross-modality attention, optional pooling, feed-forward.

use crate::error::Result;
use crate::model::attention::{mgca, MgcaParams};
use crate::model::params::{Bound, Initializer, Linear};
use crate::model::pool::{gated_attention_pool, GatedPoolParams};
use crate::numkit::{Tape, Var};

/// Two linear layers with a ReLU between them, then the output projection `W_ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
    pub proj: Linear,
}

impl FeedForward {
    pub fn init(init: &mut Initializer<'_>, prefix: &str, d: usize, d_ff: usize) -> Self {
        FeedForward {
            fc1: init.linear(&format!("{prefix}.fc1"), d_ff, d, true),
            fc2: init.linear(&format!("{prefix}.fc2"), d, d_ff, true),
            proj: init.linear(&format!("{prefix}.proj"), d, d, false),
        }
    }

    pub fn forward(&self, tape: &Tape, bound: &Bound, x: Var) -> Result<Var> {
        let h = tape.relu(self.fc1.forward(tape, bound, x)?);
        let y = self.fc2.forward(tape, bound, h)?;
        self.proj.forward(tape, bound, y)
    }
}

/// Parameters of one MGCT layer. Absent blocks are skipped; a stage-final
/// layer without gated pooling falls back to mean pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct MgctLayerParams {
    pub mgca: Option<MgcaParams>,
    pub pool: Option<GatedPoolParams>,
    pub mlp: Option<FeedForward>,
    /// Adds skip connections around attention and feed-forward.
    pub residual: bool,
}

/// `R = MGCA(query, context)`; `R' = pool(R)` when `stage_final`, else `R`;
/// output `R'' = W_ξ · MLP(R')`.
pub fn mgct_layer(
    tape: &Tape,
    bound: &Bound,
    query: Var,
    context: Var,
    params: &MgctLayerParams,
    stage_final: bool,
) -> Result<Var> {
    let mut r = match &params.mgca {
        Some(p) => {
            let attended = mgca(tape, bound, query, context, p)?;
            if params.residual {
                tape.add(attended, query)?
            } else {
                attended
            }
        }
        None => query,
    };
    if stage_final {
        r = match &params.pool {
            Some(p) => gated_attention_pool(tape, bound, r, p)?.0,
            None => tape.mean_cols(r)?,
        };
    }
    match &params.mlp {
        Some(ff) => {
            let y = ff.forward(tape, bound, r)?;
            if params.residual {
                tape.add(y, r)
            } else {
                Ok(y)
            }
        }
        None => Ok(r),
    }
}
