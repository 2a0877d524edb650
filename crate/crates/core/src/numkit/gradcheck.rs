//! Central finite-difference checks of tape gradients.
//!
//! The numeric side only ever reads forward values, so it stays independent
//! of every backward rule it validates.

use crate::error::{Error, Result};
use crate::numkit::{Fault, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator; gradients smaller
    /// than this are compared on an absolute scale.
    pub floor: f64,
    /// Fault injected into the analytic tape (numeric side is unaffected).
    pub fault: Option<Fault>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, tolerance: 1e-4, floor: 1e-4, fault: None }
    }
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Number of scalar entries compared.
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(input index, flat entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    if tape.shape(out) != (1, 1) {
        return Err(Error::Contract("gradient check needs a scalar function".into()));
    }
    Ok(tape.scalar(out))
}

/// Compares tape gradients of the scalar `f` against central differences
/// for every entry of every input.
pub fn check_gradients<F>(inputs: &[Tensor], f: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::with_fault(cfg.fault);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        tolerance: cfg.tolerance,
    };
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let orig = input.data()[j];
            probe[i].data_mut()[j] = orig + cfg.step;
            let plus = evaluate(&probe, &f)?;
            probe[i].data_mut()[j] = orig - cfg.step;
            let minus = evaluate(&probe, &f)?;
            probe[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[i].data()[j];
            let err = relative_error(a, numeric, cfg.floor);
            if !err.is_finite() || err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
                report.worst = Some((i, j));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        let x = Tensor::from_fn(2, 2, |r, c| r as f64 - c as f64 + 0.3);
        let report = check_gradients(
            &[x],
            |tape, v| Ok(tape.sum(tape.mul(v[0], v[0])?)),
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn injected_fault_is_caught() {
        let x = Tensor::from_fn(1, 3, |_, c| c as f64 * 0.4 - 0.5);
        let cfg = GradCheckConfig { fault: Some(Fault::TanhGradSign), ..Default::default() };
        let report = check_gradients(&[x], |tape, v| Ok(tape.sum(tape.tanh(v[0]))), cfg).unwrap();
        assert!(!report.passed());
    }
}
