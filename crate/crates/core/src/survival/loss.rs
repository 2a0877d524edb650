//! Negative log-likelihood for discrete-time survival.
//!
//! For a patient in interval `k`:
//!
//! ```text
//! uncensored:  -log S(k-1) - log h(k)
//! censored:    -log S(k)
//! ```
//!
//! with `S(-1) = 1`. Every logarithm is clamped at [`HAZARD_EPS`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Axis, Tape, Var};
use crate::survival::{SurvivalLabel, SurvivalPrediction};

pub const HAZARD_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Extra weight on the uncensored term:
    /// `(1 - alpha) · nll + alpha · uncensored_nll`.
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.0 }
    }
}

fn check(bins: usize, label: &SurvivalLabel) -> Result<()> {
    if label.bin >= bins {
        return Err(Error::Contract(format!("label bin {} outside {bins} bins", label.bin)));
    }
    Ok(())
}

/// Loss on already-computed hazards.
pub fn nll_loss(pred: &SurvivalPrediction, label: &SurvivalLabel, cfg: LossConfig) -> Result<f64> {
    let h = &pred.hazards;
    check(h.len(), label)?;
    let log_surv = |upto: usize| -> f64 { h[..upto].iter().map(|&x| (1.0 - x).max(HAZARD_EPS).ln()).sum() };
    let k = label.bin;
    let uncensored = if label.event { -(log_surv(k) + h[k].max(HAZARD_EPS).ln()) } else { 0.0 };
    let censored = if label.event { 0.0 } else { -log_surv(k + 1) };
    Ok((1.0 - cfg.alpha) * (uncensored + censored) + cfg.alpha * uncensored)
}

/// Loss recorded on a tape from a `bins × 1` (or `1 × bins`) hazard node.
pub fn nll_loss_var(tape: &Tape, hazards: Var, label: &SurvivalLabel, cfg: LossConfig) -> Result<Var> {
    let (r, c) = tape.shape(hazards);
    let (bins, axis) = if c == 1 { (r, Axis::Rows) } else { (c, Axis::Cols) };
    check(bins, label)?;
    let log_h = tape.log_clamped(hazards, HAZARD_EPS);
    let log_s = tape.log_clamped(tape.affine(hazards, -1.0, 1.0), HAZARD_EPS);
    let k = label.bin;

    // -Σ_{j<upto} log(1 - h_j), or None when upto == 0.
    let neg_log_surv = |upto: usize| -> Result<Option<Var>> {
        if upto == 0 {
            return Ok(None);
        }
        Ok(Some(tape.scale(tape.sum(tape.slice(log_s, 0, upto, axis)?), -1.0)))
    };
    let plus = |a: Option<Var>, b: Var| -> Result<Var> {
        match a {
            Some(a) => tape.add(a, b),
            None => Ok(b),
        }
    };

    let loss = if label.event {
        let term_h = tape.scale(tape.sum(tape.slice(log_h, k, k + 1, axis)?), -1.0);
        // Weighting (1 - alpha) · u + alpha · u collapses to u.
        plus(neg_log_surv(k)?, term_h)?
    } else {
        let s = neg_log_surv(k + 1)?.expect("k + 1 >= 1");
        tape.scale(s, 1.0 - cfg.alpha)
    };
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{check_gradients, GradCheckConfig, Tensor};

    #[test]
    fn half_hazard_first_bin_event() {
        let pred = SurvivalPrediction::from_hazards(vec![0.5; 4]);
        let l = nll_loss(&pred, &SurvivalLabel::new(1.0, true, 0), LossConfig::default()).unwrap();
        assert!((l - 0.5f64.ln().abs()).abs() < 1e-15);
    }

    #[test]
    fn censored_last_bin_vanishes_as_hazards_vanish() {
        let label = SurvivalLabel::new(50.0, false, 3);
        let mut prev = f64::INFINITY;
        for h in [1e-1, 1e-3, 1e-6, 0.0] {
            let l = nll_loss(&SurvivalPrediction::from_hazards(vec![h; 4]), &label, LossConfig::default()).unwrap();
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn saturated_hazards_stay_finite() {
        for h in [0.0, 1.0] {
            let pred = SurvivalPrediction::from_hazards(vec![h; 4]);
            for (event, bin) in [(true, 0), (true, 3), (false, 2)] {
                let l = nll_loss(&pred, &SurvivalLabel::new(1.0, event, bin), LossConfig::default()).unwrap();
                assert!(l.is_finite());
            }
        }
    }

    #[test]
    fn tape_matches_eager() {
        let hazards = vec![0.1, 0.35, 0.6, 0.8];
        let pred = SurvivalPrediction::from_hazards(hazards.clone());
        for alpha in [0.0, 0.4] {
            for (event, bin) in [(true, 0), (true, 2), (false, 0), (false, 3)] {
                let label = SurvivalLabel::new(1.0, event, bin);
                let cfg = LossConfig { alpha };
                let tape = Tape::new();
                let h = tape.leaf(Tensor::column(&hazards));
                let l = nll_loss_var(&tape, h, &label, cfg).unwrap();
                let expect = nll_loss(&pred, &label, cfg).unwrap();
                assert!((tape.scalar(l) - expect).abs() < 1e-14, "{event} {bin} {alpha}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = Tensor::column(&[-0.7, 0.2, 1.1, -0.3]);
        for (event, bin) in [(true, 0), (true, 3), (false, 1), (false, 3)] {
            let label = SurvivalLabel::new(1.0, event, bin);
            let report = check_gradients(
                std::slice::from_ref(&logits),
                |tape, v| nll_loss_var(tape, tape.sigmoid(v[0]), &label, LossConfig { alpha: 0.25 }),
                GradCheckConfig { tolerance: 1e-5, ..Default::default() },
            )
            .unwrap();
            assert!(report.passed(), "{report:?}");
        }
    }

    #[test]
    fn out_of_range_bin() {
        let pred = SurvivalPrediction::from_hazards(vec![0.5; 4]);
        assert!(nll_loss(&pred, &SurvivalLabel::new(1.0, true, 4), LossConfig::default()).is_err());
    }
}
