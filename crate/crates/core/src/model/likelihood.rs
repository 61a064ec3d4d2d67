use super::{ln_factorial, Design, ModelError};
use crate::ad::{Tape, Var};
use crate::math::{digamma, ln_gamma};

/// Log-pmf of the negative binomial with mean `mu` and shape `zeta`
/// (variance `mu (1 + mu / zeta)`).
pub fn nb_log_pmf(y: u64, mu: f64, zeta: f64) -> Result<f64, ModelError> {
    if !(mu > 0.0) || !(zeta > 0.0) || !mu.is_finite() || !zeta.is_finite() {
        return Err(ModelError::Domain(format!(
            "negative binomial needs mu > 0 and zeta > 0 (mu = {mu}, zeta = {zeta})"
        )));
    }
    let log_mu = mu.ln();
    let (lp, _, _) = nb_terms(y, ln_factorial(y), log_mu, &Shape::new(zeta));
    Ok(lp)
}

/// Draws from the negative binomial as a gamma-Poisson mixture.
pub fn nb_sample<R: rand::Rng + ?Sized>(rng: &mut R, mu: f64, zeta: f64) -> u64 {
    use rand_distr::{Distribution, Gamma, Poisson};
    let rate = Gamma::new(zeta, mu / zeta).expect("positive shape and scale").sample(rng);
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u64
}

/// Stirling series remainder of `log Γ(x)`.
#[inline]
fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))))
}

/// `log Γ(x + d) − log Γ(x)` for `x, x + d ≥ 10`, without forming the two
/// large terms.
#[inline]
fn lgamma_diff(x: f64, d: f64) -> f64 {
    (x - 0.5) * (d / x).ln_1p() + d * (x + d).ln() - d + stirling_tail(x + d) - stirling_tail(x)
}

/// `ψ(x)` for `x ≥ 16` from its asymptotic series.
#[inline]
fn digamma_large(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    x.ln() - 0.5 * r
        - r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 * (1.0 / 240.0 - r2 / 132.0))))
}

/// Quantities of the dispersion shared by every row.
#[derive(Clone, Copy, Debug)]
struct Shape {
    zeta: f64,
    log_zeta: f64,
    lgamma: f64,
    digamma: f64,
}

impl Shape {
    fn new(zeta: f64) -> Self {
        Self { zeta, log_zeta: zeta.ln(), lgamma: ln_gamma(zeta), digamma: digamma(zeta) }
    }
}

/// Returns the log-pmf, its derivative in `log mu` and in `zeta`.
#[inline]
fn nb_terms(y: u64, ln_fact_y: f64, log_mu: f64, sh: &Shape) -> (f64, f64, f64) {
    let zeta = sh.zeta;
    let yf = y as f64;
    // log ζ/(ζ+μ) and log μ/(ζ+μ) from one exp and one log1p
    let r = log_mu - sh.log_zeta;
    let e = (-r.abs()).exp();
    let l = e.ln_1p();
    let (log_pz, log_pm, mu, inv) = if r > 0.0 {
        (-(r + l), -l, zeta / e, e / (zeta * (1.0 + e)))
    } else {
        (-l, r - l, zeta * e, 1.0 / (zeta * (1.0 + e)))
    };
    let (choose, dig) = if y < 16 {
        let mut c = -ln_fact_y;
        let mut d = 0.0;
        for k in 0..y {
            let v = zeta + k as f64;
            c += v.ln();
            d += 1.0 / v;
        }
        (c, d)
    } else {
        // y + 1 ≥ 17 and y + ζ ≥ 16 keep both series accurate
        (lgamma_diff(yf + 1.0, zeta - 1.0) - sh.lgamma, digamma_large(yf + zeta) - sh.digamma)
    };
    let lp = choose + zeta * log_pz + yf * log_pm;
    let d_eta = zeta * (yf - mu) * inv;
    let d_zeta = dig + log_pz + (mu - yf) * inv;
    (lp, d_eta, d_zeta)
}

/// Linear predictor `η` of every row of `d` (without the offset).
pub(crate) fn etas(d: &Design, alpha: f64, coefs: &[f64], delta: &[f64], units: &[f64]) -> Vec<f64> {
    let p = d.p();
    (0..d.n())
        .map(|r| {
            let w = d.weekday[r] as usize;
            let mut eta = alpha + units[d.unit[r] as usize];
            if w > 0 {
                eta += delta[w - 1];
            }
            let xr = &d.x[r * p..(r + 1) * p];
            for j in 0..p {
                eta += coefs[j] * xr[j];
            }
            eta
        })
        .collect()
}

/// Summed NB log-likelihood of one equation, recorded as a single node.
pub(crate) fn nb_glm<'t>(
    tape: &'t Tape,
    d: &Design,
    alpha: Var<'t>,
    coefs: &[Var<'t>],
    delta: &[Var<'t>],
    units: &[Var<'t>],
    zeta: Var<'t>,
) -> Var<'t> {
    let p = d.p();
    let c: Vec<f64> = coefs.iter().map(|v| v.val()).collect();
    let dl: Vec<f64> = delta.iter().map(|v| v.val()).collect();
    let u: Vec<f64> = units.iter().map(|v| v.val()).collect();
    let sh = Shape::new(zeta.val());

    let mut g_alpha = 0.0;
    let mut g_coef = vec![0.0; p];
    let mut g_delta = vec![0.0; delta.len()];
    let mut g_unit = vec![0.0; units.len()];
    let mut g_zeta = 0.0;
    let mut total = 0.0;
    for r in 0..d.n() {
        let w = d.weekday[r] as usize;
        let ui = d.unit[r] as usize;
        let xr = &d.x[r * p..(r + 1) * p];
        let mut eta = alpha.val() + u[ui];
        if w > 0 {
            eta += dl[w - 1];
        }
        for j in 0..p {
            eta += c[j] * xr[j];
        }
        let (lp, de, dz) = nb_terms(d.y[r], d.ln_fact_y[r], d.offset[r] + eta, &sh);
        total += lp;
        g_alpha += de;
        g_unit[ui] += de;
        if w > 0 {
            g_delta[w - 1] += de;
        }
        for j in 0..p {
            g_coef[j] += de * xr[j];
        }
        g_zeta += dz;
    }
    let parents = std::iter::once((alpha, g_alpha))
        .chain(coefs.iter().copied().zip(g_coef))
        .chain(delta.iter().copied().zip(g_delta))
        .chain(units.iter().copied().zip(g_unit))
        .chain(std::iter::once((zeta, g_zeta)));
    tape.custom_iter(total, parents)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(y: u64, mu: f64, zeta: f64) -> f64 {
        // direct Γ-ratio form, independent of the stable rewrite above
        let y = y as f64;
        ln_gamma(y + zeta) - ln_gamma(zeta) - ln_gamma(y + 1.0)
            + zeta * (zeta / (zeta + mu)).ln()
            + y * (mu / (zeta + mu)).ln()
    }

    #[test]
    fn poisson_limit() {
        let lp = nb_log_pmf(0, 1.0, 1e12).unwrap();
        assert!((lp + 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_gamma_ratio_form() {
        let lp = nb_log_pmf(3, 2.0, 5.0).unwrap();
        assert!((lp - oracle(3, 2.0, 5.0)).abs() < 1e-12);
        for (y, mu, z) in [(0, 0.3, 0.7), (17, 40.0, 2.5), (250, 180.0, 12.0), (5000, 4800.0, 80.0)] {
            let a = nb_log_pmf(y, mu, z).unwrap();
            let b = oracle(y, mu, z);
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{y}: {a} vs {b}");
        }
    }

    #[test]
    fn lgamma_difference_matches_direct_form() {
        for (x, d) in [(17.0, 0.3), (17.0, -0.9), (250.0, 11.0), (1e5, 49.0), (31.0, 2.5)] {
            let direct = ln_gamma(x + d) - ln_gamma(x);
            assert!((lgamma_diff(x, d) - direct).abs() < 1e-9 * direct.abs().max(1.0), "{x} {d}");
        }
    }

    #[test]
    fn digamma_series_matches_reference() {
        for x in [16.0, 16.5, 40.0, 1234.5, 1e6] {
            assert!((digamma_large(x) - digamma(x)).abs() < 1e-13 * digamma(x).abs().max(1.0));
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        let total: f64 = (0..400).map(|y| nb_log_pmf(y, 10.0, 2.0).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn simulated_variance_matches() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..1_000_000).map(|_| nb_sample(&mut rng, 10.0, 2.0) as f64).collect();
        let v = crate::math::variance(&xs);
        assert!((v / 60.0 - 1.0).abs() < 0.02, "variance {v}");
        assert!((crate::math::mean(&xs) / 10.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn domain_errors() {
        assert!(nb_log_pmf(1, 0.0, 1.0).is_err());
        assert!(nb_log_pmf(1, 1.0, -1.0).is_err());
        assert!(nb_log_pmf(1, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn term_derivatives() {
        for (y, lm, z) in [(0u64, 0.2, 1.3), (7, 1.9, 0.4), (40, 3.5, 20.0)] {
            let lf = ln_factorial(y);
            let (_, de, dz) = nb_terms(y, lf, lm, &Shape::new(z));
            let h = 1e-6;
            let f = |lm: f64, z: f64| nb_terms(y, lf, lm, &Shape::new(z)).0;
            let ne = (f(lm + h, z) - f(lm - h, z)) / (2.0 * h);
            let nz = (f(lm, z + h) - f(lm, z - h)) / (2.0 * h);
            assert!((de - ne).abs() < 1e-6 * ne.abs().max(1.0));
            assert!((dz - nz).abs() < 1e-6 * nz.abs().max(1.0));
        }
    }
}
