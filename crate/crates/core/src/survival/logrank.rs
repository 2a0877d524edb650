use serde::Serialize;

use crate::survival::SurvivalLabel;

/// Two-group log-rank test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRank {
    /// `(O_a - E_a)² / V`, chi-square with one degree of freedom.
    pub statistic: f64,
    pub p_value: f64,
    pub observed_a: f64,
    pub expected_a: f64,
    pub variance: f64,
}

/// Compares the event distributions of two groups. Returns `None` when the
/// pooled data hold no events (or the variance is zero).
pub fn logrank_test(group_a: &[SurvivalLabel], group_b: &[SurvivalLabel]) -> Option<LogRank> {
    let mut all: Vec<(f64, bool, bool)> = group_a
        .iter()
        .map(|l| (l.t, l.event, true))
        .chain(group_b.iter().map(|l| (l.t, l.event, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (mut n_a, mut n_b) = (group_a.len() as f64, group_b.len() as f64);
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let (mut d_a, mut d, mut leave_a, mut leave_b) = (0.0, 0.0, 0.0, 0.0);
        while i < all.len() && all[i].0 == t {
            let (_, event, in_a) = all[i];
            if event {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            if in_a {
                leave_a += 1.0;
            } else {
                leave_b += 1.0;
            }
            i += 1;
        }
        if d > 0.0 {
            let n = n_a + n_b;
            observed += d_a;
            expected += d * n_a / n;
            if n > 1.0 {
                variance += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1.0);
            }
        }
        n_a -= leave_a;
        n_b -= leave_b;
    }
    if variance <= 0.0 {
        return None;
    }
    let statistic = (observed - expected).powi(2) / variance;
    Some(LogRank { statistic, p_value: chi2_sf(statistic, 1.0), observed_a: observed, expected_a: expected, variance })
}

/// Upper tail `P(X > x)` of a chi-square variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof / 2.0, x / 2.0)
}

/// Lanczos approximation (g = 7, n = 9) of `ln Γ(x)` for `x > 0`.
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = COEF[0];
    for (k, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`: power series below
/// `a + 1`, Lentz continued fraction above.
fn gamma_q(a: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 10_000;
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let (mut term, mut sum, mut ap) = (1.0 / a, 1.0 / a, a);
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        1.0 - sum * log_prefix.exp()
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        log_prefix.exp() * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(t: f64, e: bool) -> SurvivalLabel {
        SurvivalLabel::new(t, e, 0)
    }

    #[test]
    fn identical_groups() {
        let g = vec![l(1.0, true), l(2.0, false), l(3.0, true), l(5.0, true)];
        let r = logrank_test(&g, &g).unwrap();
        assert!(r.statistic.abs() < 1e-15);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swap_is_symmetric() {
        let a = vec![l(1.0, true), l(2.0, true), l(4.0, false)];
        let b = vec![l(3.0, true), l(6.0, true), l(7.0, true), l(2.0, false)];
        let ab = logrank_test(&a, &b).unwrap();
        let ba = logrank_test(&b, &a).unwrap();
        assert!((ab.statistic - ba.statistic).abs() < 1e-12);
    }

    #[test]
    fn no_events_is_undefined() {
        assert!(logrank_test(&[l(1.0, false)], &[l(2.0, false)]).is_none());
    }

    #[test]
    fn chi2_reference_values() {
        // P(X > 3.841458820694124) = 0.05 for one degree of freedom.
        assert!((chi2_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-12);
        assert_eq!(chi2_sf(0.0, 1.0), 1.0);
        // Two dof: closed form exp(-x/2).
        for x in [0.1, 1.0, 4.0, 30.0] {
            assert!((chi2_sf(x, 2.0) - (-x / 2.0f64).exp()).abs() < 1e-14);
        }
    }
}
