//! Synthetic cross-modal survival cohorts with a known risk function.
//!
//! Each patient has a histology signal `z_h` and a genomic signal `z_g`, both
//! standard normal. The latent log-hazard is
//!
//! ```text
//! r = w_h · z_h + w_g · z_g + w_x · z_h · z_g
//! ```
//!
//! `z_h` is written into a designated "signal" patch cluster along a fixed
//! direction, while every other patch shifts along the same direction by a
//! patient-level nuisance, so averaging all patches blurs the signal.
//! `z_g` is the normalised sum of the first category's genes. Survival
//! times are exponential with rate `exp(r)`; censoring is independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::genomics::{CategoryMap, FUNCTIONAL_CATEGORIES};
use crate::dataio::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::numkit::Tensor;
use crate::survival::spearman;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n: usize,
    pub d_in: usize,
    /// Number of genomic categories.
    pub categories: usize,
    pub genes_per_category: usize,
    pub min_patches: usize,
    pub max_patches: usize,
    /// Patch clusters, the first of which carries the histology signal.
    pub clusters: usize,
    /// Expected share of patches drawn from the signal cluster.
    pub signal_fraction: f64,
    /// Scale of the signal shift inside the signal cluster.
    pub signal_scale: f64,
    /// Scale of the nuisance shift shared by non-signal patches.
    pub nuisance_scale: f64,
    /// Distance of cluster centres from the origin.
    pub cluster_spread: f64,
    /// Isotropic per-patch noise.
    pub patch_noise: f64,
    pub hist_weight: f64,
    pub gen_weight: f64,
    pub cross_weight: f64,
    /// Probability that a sample is censored.
    pub censor_rate: f64,
    /// Median-ish survival scale in months.
    pub base_months: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 200,
            d_in: 16,
            categories: 6,
            genes_per_category: 8,
            min_patches: 16,
            max_patches: 48,
            clusters: 4,
            signal_fraction: 0.25,
            signal_scale: 3.0,
            nuisance_scale: 1.0,
            cluster_spread: 3.0,
            patch_noise: 0.3,
            hist_weight: 4.0,
            gen_weight: 1.0,
            cross_weight: 0.5,
            censor_rate: 0.25,
            base_months: 24.0,
            seed: 7,
        }
    }
}

/// Generation-time statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub n: usize,
    pub events: usize,
    pub censored: usize,
    /// Spearman correlation between latent risk and `-t` over uncensored samples.
    pub spearman_risk_vs_neg_time: f64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.n < 4 {
            return fail(format!("need at least 4 samples, got {}", self.n));
        }
        if self.d_in < 2 || self.categories == 0 || self.genes_per_category == 0 {
            return fail("d_in >= 2 and at least one gene in one category are required".into());
        }
        if self.min_patches == 0 || self.max_patches < self.min_patches {
            return fail(format!("bad patch range {}..={}", self.min_patches, self.max_patches));
        }
        if self.clusters < 2 {
            return fail("need a signal cluster and at least one background cluster".into());
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction < 1.0) {
            return fail(format!("signal_fraction {} outside (0, 1)", self.signal_fraction));
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return fail(format!("censor_rate {} outside [0, 1)", self.censor_rate));
        }
        if self.signal_scale <= 0.0 || self.patch_noise < 0.0 || self.nuisance_scale < 0.0 || self.base_months <= 0.0 {
            return fail("scales must be positive (noise and nuisance non-negative)".into());
        }
        if self.hist_weight == 0.0 && self.gen_weight == 0.0 && self.cross_weight == 0.0 {
            return fail("all risk weights are zero: latent risk has no variance".into());
        }
        Ok(())
    }

    pub fn category_map(&self) -> CategoryMap {
        let cats = (0..self.categories)
            .map(|s| {
                let name = if self.categories == FUNCTIONAL_CATEGORIES.len() {
                    FUNCTIONAL_CATEGORIES[s].to_string()
                } else {
                    format!("Category {}", s + 1)
                };
                let slug: String = name
                    .split_whitespace()
                    .filter_map(|w| w.chars().next())
                    .collect::<String>()
                    .to_uppercase();
                let genes = (0..self.genes_per_category).map(|g| format!("{slug}{}_{g:02}", s + 1)).collect();
                (name, genes)
            })
            .collect();
        CategoryMap::new(cats).expect("generated categories are non-empty and disjoint")
    }
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a cohort. Bit-identical for a fixed configuration.
pub fn synthesize(cfg: &SynthConfig) -> Result<(Dataset, SynthSummary)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.d_in;

    let centres: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| (0..d).map(|_| cfg.cluster_spread * normal(&mut rng) / (d as f64).sqrt()).collect())
        .collect();
    let mut direction: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let map = cfg.category_map();
    let mut samples = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let z_h = normal(&mut rng);
        let nuisance = normal(&mut rng);
        let genomic: Vec<Vec<f64>> = (0..cfg.categories)
            .map(|_| (0..cfg.genes_per_category).map(|_| round_f32(normal(&mut rng))).collect())
            .collect();
        let z_g = genomic[0].iter().sum::<f64>() / (cfg.genes_per_category as f64).sqrt();
        let risk = cfg.hist_weight * z_h + cfg.gen_weight * z_g + cfg.cross_weight * z_h * z_g;

        let n_patches = rng.random_range(cfg.min_patches..=cfg.max_patches);
        let mut patches = Tensor::zeros(d, n_patches);
        let mut has_signal = false;
        for j in 0..n_patches {
            // Guarantee at least one signal patch per bag.
            let signal = rng.random::<f64>() < cfg.signal_fraction || (j + 1 == n_patches && !has_signal);
            has_signal |= signal;
            let (cluster, shift) = if signal {
                (0, cfg.signal_scale * z_h)
            } else {
                (rng.random_range(1..cfg.clusters), cfg.nuisance_scale * nuisance)
            };
            for k in 0..d {
                let v = centres[cluster][k] + shift * direction[k] + cfg.patch_noise * normal(&mut rng);
                patches.set(k, j, round_f32(v));
            }
        }

        let unit_exp: f64 = Exp1.sample(&mut rng);
        let latent_t = cfg.base_months * unit_exp / risk.exp();
        let censored = rng.random::<f64>() < cfg.censor_rate;
        let t = if censored { latent_t * rng.random_range(0.05..1.0) } else { latent_t };
        samples.push(Sample {
            id: format!("syn{i:04}"),
            patches,
            genomic,
            t: t.max(1e-3),
            event: !censored,
            truth_risk: Some(risk),
        });
    }

    let (risk, neg_t): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.event)
        .map(|s| (s.truth_risk.unwrap(), -s.t))
        .unzip();
    let summary = SynthSummary {
        n: cfg.n,
        events: risk.len(),
        censored: cfg.n - risk.len(),
        spearman_risk_vs_neg_time: spearman(&risk, &neg_t),
    };
    Ok((Dataset { samples, categories: map }, summary))
}
