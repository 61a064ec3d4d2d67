use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::inference::Draws;
use crate::math::{mean, quantile};

/// `100·(exp(x) − 1)`: a log-scale coefficient as a percentage change.
pub fn percent_change(x: f64) -> f64 {
    100.0 * x.exp_m1()
}

/// Pooled draws of `which` on the percentage scale.
pub fn transform_effects(draws: &Draws, which: &str) -> Result<Vec<f64>, ModelError> {
    let v = draws
        .pooled(which)
        .ok_or_else(|| ModelError::UnknownParameter(which.to_string()))?;
    Ok(v.into_iter().map(percent_change).collect())
}

/// Posterior mean with central 80% and 95% credible intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub mean: f64,
    pub cri80: (f64, f64),
    pub cri95: (f64, f64),
}

pub fn summarize_effect(values: &[f64]) -> EffectSummary {
    EffectSummary {
        mean: mean(values),
        cri80: (quantile(values, 0.10), quantile(values, 0.90)),
        cri95: (quantile(values, 0.025), quantile(values, 0.975)),
    }
}

/// `"-24.9% (95% CrI: -27.6–-22.1%)"`, one decimal throughout.
pub fn format_effect(s: &EffectSummary) -> String {
    format!("{:.1}% (95% CrI: {:.1}–{:.1}%)", s.mean, s.cri95.0, s.cri95.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentage_scale() {
        assert_eq!(percent_change(0.0), 0.0);
        assert!((percent_change(std::f64::consts::LN_2) - 100.0).abs() < 1e-12);
        assert!((percent_change(-0.2863) + 24.9).abs() < 0.01);
    }

    #[test]
    fn intervals_nest() {
        let xs: Vec<f64> = (0..1001).map(|i| i as f64 / 10.0).collect();
        let s = summarize_effect(&xs);
        assert!((s.mean - 50.0).abs() < 1e-12);
        assert!(s.cri95.0 < s.cri80.0 && s.cri80.1 < s.cri95.1);
        assert!((s.cri95.0 - 2.5).abs() < 1e-9);
    }

    #[test]
    fn format_layout() {
        let s = EffectSummary { mean: 24.94, cri80: (23.0, 27.0), cri95: (22.1, 27.6) };
        assert_eq!(format_effect(&s), "24.9% (95% CrI: 22.1–27.6%)");
    }
}
