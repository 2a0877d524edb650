//! Two-stage mutual-guided fusion.
//!
//! Stage 1 runs two directional stacks of `S1` layers: genomics attending to
//! histology (query `G`, context `H`) and histology attending to genomics
//! (query `H`, context `G`). Each stack feeds its output forward as the next
//! query with the same context, pooling only in its last layer. The two
//! pooled tokens form `R_F1 ∈ R^{d×2}`.
//!
//! Stage 2 repeats the pattern with `S2` layers on `(R_F1, H)` and
//! `(H, R_F1)`. The two pooled tokens are stacked into `R_Final ∈ R^{2d×1}`.
//! Without deep fusion, stage 1's tokens are stacked directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::attention::MgcaParams;
use crate::model::layer::{mgct_layer, FeedForward, MgctLayerParams};
use crate::model::params::{Bound, Initializer};
use crate::model::pool::GatedPoolParams;
use crate::model::AblationSpec;
use crate::numkit::{Axis, Tape, Var};

/// Architecture of the fusion network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Layers per direction in stage 1.
    pub s1: usize,
    /// Layers per direction in stage 2.
    pub s2: usize,
    /// Token width.
    pub d: usize,
    /// Attention heads; must divide `d`.
    pub heads: usize,
    /// Hidden width of the gated pooling scorer.
    pub d_a: usize,
    /// Hidden width of the feed-forward block.
    pub d_ff: usize,
    /// Number of discrete hazard intervals.
    pub bins: usize,
    /// Skip connections around attention and feed-forward (off by default).
    pub residual: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { s1: 1, s2: 2, d: 32, heads: 1, d_a: 32, d_ff: 64, bins: 4, residual: false }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.s1 == 0 {
            bad.push("s1 must be >= 1".to_string());
        }
        if self.s2 == 0 {
            bad.push("s2 must be >= 1".to_string());
        }
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            bad.push(format!("d = {} must be a positive multiple of heads = {}", self.d, self.heads));
        }
        if self.d_a == 0 || self.d_ff == 0 {
            bad.push("d_a and d_ff must be >= 1".to_string());
        }
        if self.bins < 2 {
            bad.push(format!("bins = {} must be >= 2", self.bins));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub stage1_g2h: Vec<MgctLayerParams>,
    pub stage1_h2g: Vec<MgctLayerParams>,
    /// Empty without deep fusion.
    pub stage2_f2h: Vec<MgctLayerParams>,
    pub stage2_h2f: Vec<MgctLayerParams>,
}

fn stack(
    init: &mut Initializer<'_>,
    prefix: &str,
    depth: usize,
    cfg: &FusionConfig,
    ablation: &AblationSpec,
) -> Result<Vec<MgctLayerParams>> {
    (0..depth)
        .map(|l| {
            let p = format!("{prefix}.{l}");
            let last = l + 1 == depth;
            Ok(MgctLayerParams {
                mgca: if ablation.mgca { Some(MgcaParams::init(init, &format!("{p}.mgca"), cfg.d, cfg.heads)?) } else { None },
                pool: if last && ablation.gap { Some(GatedPoolParams::init(init, &format!("{p}.pool"), cfg.d, cfg.d_a)?) } else { None },
                mlp: ablation.feedforward.then(|| FeedForward::init(init, &format!("{p}.ffn"), cfg.d, cfg.d_ff)),
                residual: cfg.residual,
            })
        })
        .collect()
}

impl FusionParams {
    pub fn init(init: &mut Initializer<'_>, cfg: &FusionConfig, ablation: &AblationSpec) -> Result<Self> {
        cfg.validate()?;
        let stage1_g2h = stack(init, "stage1.g2h", cfg.s1, cfg, ablation)?;
        let stage1_h2g = stack(init, "stage1.h2g", cfg.s1, cfg, ablation)?;
        let (stage2_f2h, stage2_h2f) = if ablation.deep_fusion {
            (stack(init, "stage2.f2h", cfg.s2, cfg, ablation)?, stack(init, "stage2.h2f", cfg.s2, cfg, ablation)?)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(FusionParams { stage1_g2h, stage1_h2g, stage2_f2h, stage2_h2f })
    }
}

fn run_stack(tape: &Tape, bound: &Bound, query: Var, context: Var, layers: &[MgctLayerParams]) -> Result<Var> {
    let mut x = query;
    for (l, p) in layers.iter().enumerate() {
        x = mgct_layer(tape, bound, x, context, p, l + 1 == layers.len())?;
    }
    Ok(x)
}

/// Intermediate and final fusion outputs.
pub struct FusionOutput {
    /// Stage-1 tokens `R_F1`, `d × 2`.
    pub stage1: Var,
    /// `R_Final`, `2d × 1`.
    pub fused: Var,
}

/// Fuses `H` (`d × N`) and `G` (`d × S`) into a `2d × 1` embedding.
pub fn fuse(tape: &Tape, bound: &Bound, h: Var, g: Var, params: &FusionParams) -> Result<Var> {
    Ok(fuse_detailed(tape, bound, h, g, params)?.fused)
}

pub fn fuse_detailed(tape: &Tape, bound: &Bound, h: Var, g: Var, params: &FusionParams) -> Result<FusionOutput> {
    if tape.shape(h).1 == 0 || tape.shape(g).1 == 0 {
        return Err(Error::Contract("fusion needs at least one patch and one genomic token".into()));
    }
    let g2h = run_stack(tape, bound, g, h, &params.stage1_g2h)?;
    let h2g = run_stack(tape, bound, h, g, &params.stage1_h2g)?;
    if params.stage2_f2h.is_empty() {
        let stage1 = tape.concat(g2h, h2g, Axis::Cols)?;
        let fused = tape.concat(g2h, h2g, Axis::Rows)?;
        return Ok(FusionOutput { stage1, fused });
    }
    let stage1 = tape.concat(g2h, h2g, Axis::Cols)?;
    let f2h = run_stack(tape, bound, stage1, h, &params.stage2_f2h)?;
    let h2f = run_stack(tape, bound, h, stage1, &params.stage2_h2f)?;
    let fused = tape.concat(f2h, h2f, Axis::Rows)?;
    Ok(FusionOutput { stage1, fused })
}
