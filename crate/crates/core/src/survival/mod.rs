//! Discrete-time survival modelling and evaluation.
//!
//! Follow-up is cut into `bins` intervals at quantiles of the uncensored
//! training times. The model emits one conditional hazard per interval;
//! survival is the running product of `1 - hazard`.

mod km;
mod logrank;
mod loss;
mod metrics;

pub use km::{kaplan_meier, KaplanMeier, KmPoint};
pub use logrank::{chi2_sf, logrank_test, LogRank};
pub use loss::{nll_loss, nll_loss_var, LossConfig, HAZARD_EPS};
pub use metrics::{binary_auc, concordance_index, ranks, spearman, stratify, RiskGroups};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::sigmoid;

/// Observed outcome of one patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalLabel {
    /// Months to death or censoring.
    pub t: f64,
    /// `true` when death was observed.
    pub event: bool,
    /// Discrete time interval containing `t`.
    pub bin: usize,
}

impl SurvivalLabel {
    pub fn new(t: f64, event: bool, bin: usize) -> Self {
        SurvivalLabel { t, event, bin }
    }
}

/// Interior cut points splitting time into `bins` intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBins {
    /// Ascending interior edges; `bins - 1` of them.
    pub edges: Vec<f64>,
}

impl TimeBins {
    /// Quantile edges of the uncensored times among `(t, event)` pairs.
    /// Falls back to all times if fewer than `bins` events exist.
    pub fn from_training(outcomes: &[(f64, bool)], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Contract(format!("need at least 2 bins, got {bins}")));
        }
        let mut times: Vec<f64> = outcomes.iter().filter(|o| o.1).map(|o| o.0).collect();
        if times.len() < bins {
            times = outcomes.iter().map(|o| o.0).collect();
        }
        if times.is_empty() {
            return Err(Error::Contract("cannot bin an empty training set".into()));
        }
        times.sort_by(f64::total_cmp);
        let edges = (1..bins).map(|k| quantile_sorted(&times, k as f64 / bins as f64)).collect();
        Ok(TimeBins { edges })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Interval index of `t`; intervals are closed on the left.
    pub fn assign(&self, t: f64) -> usize {
        self.edges.iter().filter(|&&e| t >= e).count()
    }

    pub fn label(&self, t: f64, event: bool) -> SurvivalLabel {
        SurvivalLabel::new(t, event, self.assign(t))
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median of the uncensored times, used as the AUC horizon.
pub fn median_event_time(outcomes: &[(f64, bool)]) -> Option<f64> {
    let mut times: Vec<f64> = outcomes.iter().filter(|o| o.1).map(|o| o.0).collect();
    if times.is_empty() {
        return None;
    }
    times.sort_by(f64::total_cmp);
    Some(quantile_sorted(&times, 0.5))
}

/// Per-patient model output in probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPrediction {
    /// Conditional hazard per interval.
    pub hazards: Vec<f64>,
    /// `S(k) = Π_{j ≤ k} (1 - h_j)`.
    pub survival: Vec<f64>,
    /// `-Σ_k S(k)`; larger means worse prognosis.
    pub risk: f64,
}

impl SurvivalPrediction {
    pub fn from_hazards(hazards: Vec<f64>) -> Self {
        let mut s = 1.0;
        let survival: Vec<f64> = hazards
            .iter()
            .map(|h| {
                s *= 1.0 - h;
                s
            })
            .collect();
        let risk = -survival.iter().sum::<f64>();
        SurvivalPrediction { hazards, survival, risk }
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self::from_hazards(logits.iter().map(|&z| sigmoid(z)).collect())
    }
}
