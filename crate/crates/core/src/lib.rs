//! Mutual-guided cross-modality transformer (MGCT) for multimodal survival
//! prediction from histology bags and grouped genomic profiles.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: dense tensors and a reverse-mode tape.
//! - [`dataio`]: bag, manifest and genomic file formats, synthetic cohorts,
//!   Monte Carlo splits.
//! - [`embedders`]: per-category genomic SNNs and the patch projection.
//! - [`model`]: cross-modality attention, gated pooling, the MGCT layer, two-stage
//!   fusion, the hazard head and checkpoints.
//! - [`survival`]: discrete-time loss and the evaluation metrics.
//! - [`train`]: Adam, gradient accumulation, cross-validation and ablations.
//! - [`cli`]: the `mgct` command-line front end.

pub mod cli;
pub mod dataio;
pub mod embedders;
mod error;
pub mod model;
pub mod numkit;
pub mod survival;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tape.md")]
    mod tape {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/embedders.md")]
    mod embedders {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/survival.md")]
    mod survival {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
