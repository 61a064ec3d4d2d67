//! Split-R̂, effective sample size and Monte Carlo standard error.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use super::DiagnosticsError;
use crate::math::{mean, variance};

fn check(chains: &[Vec<f64>]) -> Result<usize, DiagnosticsError> {
    let n = chains.first().map_or(0, |c| c.len());
    if chains.is_empty() || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticsError::TooFewDraws);
    }
    Ok(n)
}

/// Halves every chain (dropping a middle draw when odd).
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let h = c.len() / 2;
        out.push(c[..h].to_vec());
        out.push(c[c.len() - h..].to_vec());
    }
    out
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&v| v == first)
}

/// Pooled ranks (ties averaged) mapped through the normal quantile
/// function with the Blom offset.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut idx: Vec<(usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| (0..v.len()).map(move |i| (c, i)))
        .collect();
    idx.sort_by(|a, b| chains[a.0][a.1].total_cmp(&chains[b.0][b.1]));
    let s = idx.len() as f64;
    let std = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < idx.len() {
        let v = chains[idx[i].0][idx[i].1];
        let mut j = i;
        while j + 1 < idx.len() && chains[idx[j + 1].0][idx[j + 1].1] == v {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = std.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(c, k) in &idx[i..=j] {
            out[c][k] = z;
        }
        i = j + 1;
    }
    out
}

/// Classic potential scale reduction of already split chains.
fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let b = variance(&means);
    let var_hat = (n - 1.0) / n * w + b;
    (var_hat / w).sqrt()
}

/// Split-R̂: the largest of the rank-normalized bulk and tail (folded)
/// statistics and the classic statistic on the raw draws.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    check(chains)?;
    if is_constant(chains) {
        return Err(DiagnosticsError::ConstantChains);
    }
    let split = split_chains(chains);
    let bulk = rhat_basic(&rank_normalize(&split));
    let all: Vec<f64> = split.iter().flatten().copied().collect();
    let med = crate::math::quantile(&all, 0.5);
    let folded: Vec<Vec<f64>> = split.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = rhat_basic(&rank_normalize(&folded));
    let raw = rhat_basic(&split);
    Ok([bulk, tail, raw].into_iter().filter(|v| v.is_finite()).fold(f64::NAN, f64::max))
}

/// Biased autocovariance at every lag, via zero-padded FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(size).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

/// Autocorrelation of one chain.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let ac = autocovariance(x);
    let v0 = ac[0];
    ac.iter().map(|a| a / v0).collect()
}

/// Effective sample size of the given chains (not split here), with
/// Geyer's initial monotone sequence truncation.
fn ess_chains(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let chain_var: Vec<f64> = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).collect();
    let mean_var = mean(&chain_var);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += variance(&means);
    }
    let mean_acov = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 && max_t + 1 < n {
        rho[max_t + 1] = rho_even;
    }
    // initial monotone sequence
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tail = if max_t + 1 < n { rho[max_t + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + tail).max(1.0 / total.log10());
    total / tau
}

/// Effective sample size on split chains.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    check(chains)?;
    if is_constant(chains) {
        return Err(DiagnosticsError::ConstantChains);
    }
    Ok(ess_chains(&split_chains(chains)))
}

/// Effective sample size of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    check(chains)?;
    if is_constant(chains) {
        return Err(DiagnosticsError::ConstantChains);
    }
    Ok(ess_chains(&rank_normalize(&split_chains(chains))))
}

/// Monte Carlo standard error of the posterior mean.
pub fn mcse_mean(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    let e = ess(chains)?;
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    Ok(crate::math::sd(&all) / e.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, chains: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..chains).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let x = &normals(1, 1, 50)[0];
        let m = mean(x);
        let ac = autocovariance(x);
        for lag in [0, 1, 7, 49] {
            let direct: f64 = (0..50 - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / 50.0;
            assert!((ac[lag] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_draws() {
        let c = normals(2, 4, 2000);
        assert!(rhat(&c).unwrap() < 1.01);
        let r = ess(&c).unwrap() / 8000.0;
        assert!((0.8..=1.2).contains(&r), "{r}");
    }

    #[test]
    fn separated_chains() {
        let mut c = normals(3, 2, 1000);
        for v in &mut c[1] {
            *v += 5.0;
        }
        assert!(rhat(&c).unwrap() > 2.0);
    }

    #[test]
    fn constant_chains_error() {
        let c = vec![vec![1.0; 10]; 3];
        assert!(matches!(rhat(&c), Err(DiagnosticsError::ConstantChains)));
        assert!(matches!(ess(&c), Err(DiagnosticsError::ConstantChains)));
    }

    #[test]
    fn ar1_ess() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rho: f64 = 0.9;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..20000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = rho * x + (1.0 - rho * rho).sqrt() * e;
                        x
                    })
                    .collect()
            })
            .collect();
        let r = ess(&chains).unwrap() / 80000.0;
        let expect = (1.0 - rho) / (1.0 + rho);
        assert!((r / expect - 1.0).abs() < 0.3, "{r} vs {expect}");
    }

    #[test]
    fn permutation_invariant() {
        let mut c = normals(5, 4, 300);
        let a = (rhat(&c).unwrap(), ess(&c).unwrap());
        c.reverse();
        let b = (rhat(&c).unwrap(), ess(&c).unwrap());
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-9);
    }
}
