//! The MGCT survival model.
//!
//! Forward pass for one patient:
//!
//! 1. genomic SNNs give `G ∈ R^{d×S}`, the patch projection gives `H ∈ R^{d×N}`;
//! 2. [`fusion::fuse`] turns `(H, G)` into `R_Final ∈ R^{2d×1}`;
//! 3. [`classify`] maps `R_Final` to one hazard logit per time interval.

pub mod attention;
pub mod checkpoint;
pub mod fusion;
pub mod layer;
pub mod params;
pub mod pool;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use attention::{mgca, mgca_with_weights, MgcaParams};
pub use fusion::{fuse, fuse_detailed, FusionConfig, FusionParams};
pub use layer::{mgct_layer, FeedForward, MgctLayerParams};
pub use params::{Bound, Initializer, Linear, ParamId, ParamStore};
pub use pool::{gated_attention_pool, GatedPoolParams};

use crate::dataio::Sample;
use crate::embedders::{embed_genomics, embed_patches, DropoutCtx, PatchProjParams, SnnParams};
use crate::error::{Error, Result};
use crate::numkit::{Tape, Tensor, Var};
use crate::survival::SurvivalPrediction;

/// Which MGCT components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    /// Second fusion stage.
    pub deep_fusion: bool,
    /// Cross-modality attention; without it each modality is pooled on its own.
    pub mgca: bool,
    /// Gated attention pooling; without it pooling is a plain mean.
    pub gap: bool,
    /// Feed-forward block inside each layer.
    pub feedforward: bool,
}

impl AblationSpec {
    pub const PRESETS: [char; 5] = ['A', 'B', 'C', 'D', 'E'];

    /// Cumulative presets: A is plain concatenation, each later letter adds
    /// one component, E is the full model.
    pub fn preset(name: char) -> Option<Self> {
        let level = Self::PRESETS.iter().position(|&c| c == name.to_ascii_uppercase())?;
        Some(AblationSpec { deep_fusion: level >= 1, mgca: level >= 2, gap: level >= 3, feedforward: level >= 4 })
    }

    pub fn full() -> Self {
        Self::preset('E').unwrap()
    }

    pub fn preset_name(&self) -> Option<char> {
        Self::PRESETS.into_iter().find(|&c| Self::preset(c) == Some(*self))
    }
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl fmt::Display for AblationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset_name() {
            Some(c) => write!(f, "Model {c}"),
            None => write!(
                f,
                "custom(deep_fusion={}, mgca={}, gap={}, feedforward={})",
                self.deep_fusion, self.mgca, self.gap, self.feedforward
            ),
        }
    }
}

/// Everything needed to rebuild the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of ingested patch embeddings.
    pub d_in: usize,
    /// Input length of each genomic category.
    pub genomic_sizes: Vec<usize>,
    /// Hidden width of each SNN layer.
    pub snn_hidden: usize,
    /// Alpha-dropout rate inside the SNNs.
    pub dropout: f64,
    pub fusion: FusionConfig,
    pub ablation: AblationSpec,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if self.d_in == 0 || self.snn_hidden == 0 {
            return Err(Error::Config("d_in and snn_hidden must be >= 1".into()));
        }
        if self.genomic_sizes.is_empty() || self.genomic_sizes.contains(&0) {
            return Err(Error::Config("every genomic category needs at least one input".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Hazard head: a single affine map from `2d` to `bins` logits.
pub fn classify(tape: &Tape, bound: &Bound, fused: Var, head: &Linear) -> Result<Var> {
    head.forward(tape, bound, fused)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mgct {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub snn: SnnParams,
    pub patch: PatchProjParams,
    pub fusion: FusionParams,
    pub head: Linear,
}

impl Mgct {
    /// Freshly initialised model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.fusion.d;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(&mut store, seed);
        let snn = SnnParams::init(&mut init, &config.genomic_sizes, config.snn_hidden, d, config.dropout);
        let patch = PatchProjParams::init(&mut init, config.d_in, d);
        let fusion = FusionParams::init(&mut init, &config.fusion, &config.ablation)?;
        let head = init.linear("head", config.fusion.bins, 2 * d, true);
        Ok(Mgct { config, store, snn, patch, fusion, head })
    }

    /// Model with the given parameter values; names and shapes must match
    /// the layout implied by `config`.
    pub fn with_params(config: ModelConfig, names: &[String], values: Vec<Tensor>) -> Result<Self> {
        let mut model = Mgct::new(config, 0)?;
        if names != model.store.names() {
            let expected = model.store.names().len();
            return Err(Error::Shape(format!(
                "parameter layout differs from configuration ({} blocks given, {expected} expected)",
                names.len()
            )));
        }
        for ((name, have), want) in names.iter().zip(&values).zip(model.store.values()) {
            if have.shape() != want.shape() {
                return Err(Error::Shape(format!(
                    "parameter {name} is {}, configuration expects {}",
                    have.shape_str(),
                    want.shape_str()
                )));
            }
        }
        model.store.values_mut().clone_from_slice(&values);
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Hazard logits (`bins × 1`) from bound parameters and input nodes.
    pub fn forward(&self, tape: &Tape, bound: &Bound, patches: Var, genomic: &[Var], ctx: DropoutCtx) -> Result<Var> {
        let g = embed_genomics(tape, bound, genomic, &self.snn, ctx)?;
        let h = embed_patches(tape, bound, patches, &self.patch)?;
        let fused = fuse(tape, bound, h, g, &self.fusion)?;
        classify(tape, bound, fused, &self.head)
    }

    /// Records a sample's inputs as constants and runs [`Mgct::forward`].
    pub fn forward_sample(&self, tape: &Tape, bound: &Bound, sample: &Sample, ctx: DropoutCtx) -> Result<Var> {
        let (patches, genomic) = self.inputs(tape, sample)?;
        self.forward(tape, bound, patches, &genomic, ctx)
    }

    fn inputs(&self, tape: &Tape, sample: &Sample) -> Result<(Var, Vec<Var>)> {
        if sample.patches.rows() != self.config.d_in {
            return Err(Error::Shape(format!(
                "sample {} has patch width {}, model expects {}",
                sample.id,
                sample.patches.rows(),
                self.config.d_in
            )));
        }
        let patches = tape.constant(sample.patches.clone());
        let genomic = sample.genomic.iter().map(|v| tape.constant(Tensor::column(v))).collect();
        Ok((patches, genomic))
    }

    /// Eval-mode prediction.
    pub fn predict(&self, sample: &Sample) -> Result<SurvivalPrediction> {
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let logits = self.forward_sample(&tape, &bound, sample, DropoutCtx::eval())?;
        Ok(SurvivalPrediction::from_logits(tape.value(logits).data()))
    }

    /// Eval-mode fused embedding `R_Final`.
    pub fn embed(&self, sample: &Sample) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let (patches, genomic) = self.inputs(&tape, sample)?;
        let g = embed_genomics(&tape, &bound, &genomic, &self.snn, DropoutCtx::eval())?;
        let h = embed_patches(&tape, &bound, patches, &self.patch)?;
        Ok(tape.value(fuse(&tape, &bound, h, g, &self.fusion)?))
    }
}
