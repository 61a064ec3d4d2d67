//! Generalized Pareto tail fits for importance-ratio influence screening.

use serde::{Deserialize, Serialize};

use super::DiagnosticsError;

/// Minimum number of ratios accepted by [`pareto_khat`].
pub const MIN_RATIOS: usize = 25;

/// Fits `(k, σ)` of a generalized Pareto distribution to positive
/// exceedances with the profile-likelihood grid estimator of Zhang and
/// Stephens, including the weak prior that shrinks `k` towards 0.5.
pub fn gpd_fit(exceedances: &[f64]) -> (f64, f64) {
    let mut x = exceedances.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let xstar = x[((n as f64 / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let x_max = x[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let profile = |t: f64| {
        let a = -t;
        let k = x.iter().map(|v| (a * v).ln_1p()).sum::<f64>() / n as f64;
        n as f64 * ((a / k).ln() - k - 1.0)
    };
    let l: Vec<f64> = theta.iter().map(|&t| profile(t)).collect();
    let lmax = l.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = l.iter().map(|v| if v.is_finite() { (v - lmax).exp() } else { 0.0 }).collect();
    let wsum: f64 = w.iter().sum();
    let theta_hat: f64 = theta.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / wsum;
    let k = x.iter().map(|v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let a = 10.0;
    let k = k * n as f64 / (n as f64 + a) + a * 0.5 / (n as f64 + a);
    (k, sigma)
}

/// Tail shape of the importance ratios `exp(log_ratios)`: a generalized
/// Pareto fit to the largest 20% (at least 5) of them, above the next
/// largest ratio.
pub fn pareto_khat(log_ratios: &[f64]) -> Result<f64, DiagnosticsError> {
    let s = log_ratios.len();
    if s < MIN_RATIOS {
        return Err(DiagnosticsError::TooFewSamples { needed: MIN_RATIOS, got: s });
    }
    let mut lr = log_ratios.to_vec();
    lr.sort_by(f64::total_cmp);
    let tail = ((0.2 * s as f64).ceil() as usize).max(5).min(s - 1);
    let top = lr[s - 1];
    let cut = (lr[s - tail - 1] - top).exp();
    let exceed: Vec<f64> = lr[s - tail..].iter().map(|v| (v - top).exp() - cut).collect();
    if exceed.iter().all(|&e| e <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let positive: Vec<f64> = exceed.into_iter().map(|e| e.max(f64::MIN_POSITIVE)).collect();
    Ok(gpd_fit(&positive).0)
}

/// Per-observation tail shapes with the conventional good/ok/bad bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoKReport {
    pub khat: Vec<f64>,
    /// Counts below 0.5, in [0.5, 0.7], above 0.7.
    pub bands: [usize; 3],
}

pub fn khat_band(k: f64) -> &'static str {
    if k < 0.5 {
        "good"
    } else if k <= 0.7 {
        "ok"
    } else {
        "bad"
    }
}

impl ParetoKReport {
    pub fn new(khat: Vec<f64>) -> Self {
        let mut bands = [0; 3];
        for &k in &khat {
            bands[match khat_band(k) {
                "good" => 0,
                "ok" => 1,
                _ => 2,
            }] += 1;
        }
        Self { khat, bands }
    }
}
