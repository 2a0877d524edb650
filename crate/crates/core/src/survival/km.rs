use serde::{Deserialize, Serialize};

use crate::survival::SurvivalLabel;

/// One step of a product-limit curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmPoint {
    pub time: f64,
    /// Number at risk just before `time`.
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    /// Survival estimate just after `time`.
    pub survival: f64,
}

/// Kaplan-Meier estimate, one point per distinct observed time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaplanMeier {
    pub points: Vec<KmPoint>,
}

impl KaplanMeier {
    /// Right-continuous survival at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.points.iter().take_while(|p| p.time <= t).last().map_or(1.0, |p| p.survival)
    }
}

pub fn kaplan_meier(labels: &[SurvivalLabel]) -> KaplanMeier {
    let mut sorted: Vec<&SurvivalLabel> = labels.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut at_risk = sorted.len();
    let mut survival = 1.0;
    let mut points = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let time = sorted[i].t;
        let (mut events, mut censored) = (0, 0);
        while i < sorted.len() && sorted[i].t == time {
            if sorted[i].event {
                events += 1;
            } else {
                censored += 1;
            }
            i += 1;
        }
        if events > 0 {
            survival *= 1.0 - events as f64 / at_risk as f64;
        }
        points.push(KmPoint { time, at_risk, events, censored, survival });
        at_risk -= events + censored;
    }
    KaplanMeier { points }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(t: f64, e: bool) -> SurvivalLabel {
        SurvivalLabel::new(t, e, 0)
    }

    #[test]
    fn uncensored_quarters() {
        let km = kaplan_meier(&[l(4.0, true), l(1.0, true), l(3.0, true), l(2.0, true)]);
        let s: Vec<f64> = km.points.iter().map(|p| p.survival).collect();
        assert_eq!(s, vec![0.75, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn all_censored_is_flat() {
        let km = kaplan_meier(&[l(1.0, false), l(2.0, false), l(2.0, false)]);
        assert!(km.points.iter().all(|p| p.survival == 1.0));
        assert_eq!(km.survival_at(100.0), 1.0);
    }

    #[test]
    fn step_lookup() {
        let km = kaplan_meier(&[l(1.0, true), l(2.0, true)]);
        assert_eq!(km.survival_at(0.5), 1.0);
        assert_eq!(km.survival_at(1.0), 0.5);
        assert_eq!(km.survival_at(1.5), 0.5);
        assert_eq!(km.survival_at(2.0), 0.0);
    }
}
