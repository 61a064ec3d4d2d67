//! Special functions, log densities on the tape, and small sample statistics.

use std::f64::consts::{LN_2, PI};

use crate::ad::{Tape, Var};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn normal_lpdf<'t>(x: Var<'t>, mu: f64, sd: f64) -> Var<'t> {
    let z = (x.val() - mu) / sd;
    x.tape()
        .custom(-0.5 * z * z - sd.ln() - LN_SQRT_2PI, &[(x, -z / sd)])
}

/// Normal density with a parameter-valued scale.
pub fn normal_lpdf_scale<'t>(x: Var<'t>, mu: f64, sd: Var<'t>) -> Var<'t> {
    let s = sd.val();
    let z = (x.val() - mu) / s;
    x.tape().custom(
        -0.5 * z * z - s.ln() - LN_SQRT_2PI,
        &[(x, -z / s), (sd, (z * z - 1.0) / s)],
    )
}

/// Sum of independent `N(mu, sd)` terms over a slice.
pub fn normal_lpdf_sum<'t>(tape: &'t Tape, xs: &[Var<'t>], mu: f64, sd: f64) -> Var<'t> {
    let mut val = -(xs.len() as f64) * (sd.ln() + LN_SQRT_2PI);
    let parents: Vec<(Var<'t>, f64)> = xs
        .iter()
        .map(|&x| {
            let z = (x.val() - mu) / sd;
            val -= 0.5 * z * z;
            (x, -z / sd)
        })
        .collect();
    tape.custom(val, &parents)
}

pub fn student_t_lpdf<'t>(x: Var<'t>, nu: f64, mu: f64, s: f64) -> Var<'t> {
    let z = (x.val() - mu) / s;
    let c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI).ln() - s.ln();
    let val = c - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p();
    let d = -(nu + 1.0) * z / (s * (nu + z * z));
    x.tape().custom(val, &[(x, d)])
}

/// Half-t on `(0, ∞)` with location 0.
pub fn half_t_lpdf<'t>(x: Var<'t>, nu: f64, s: f64) -> Var<'t> {
    student_t_lpdf(x, nu, 0.0, s) + LN_2
}

/// Gamma with shape-rate parameterization.
pub fn gamma_lpdf<'t>(x: Var<'t>, shape: f64, rate: f64) -> Var<'t> {
    let v = x.val();
    let val = shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * v.ln() - rate * v;
    x.tape().custom(val, &[(x, (shape - 1.0) / v - rate)])
}

pub fn beta_lpdf<'t>(x: Var<'t>, a: f64, b: f64) -> Var<'t> {
    let v = x.val();
    let val = (a - 1.0) * v.ln() + (b - 1.0) * (1.0 - v).ln() + ln_gamma(a + b)
        - ln_gamma(a)
        - ln_gamma(b);
    x.tape()
        .custom(val, &[(x, (a - 1.0) / v - (b - 1.0) / (1.0 - v))])
}

/// Cholesky factor of a correlation matrix from `K(K-1)/2` unconstrained
/// values (canonical partial correlations through `tanh`). Returns the
/// row-major lower-triangular factor and the log Jacobian.
pub fn cholesky_corr<'t>(tape: &'t Tape, y: &[Var<'t>], k: usize) -> (Vec<Var<'t>>, Var<'t>) {
    assert_eq!(y.len(), k * (k - 1) / 2, "wrong number of free correlations");
    let zero = tape.var(0.0);
    let one = tape.var(1.0);
    let mut l = vec![zero; k * k];
    l[0] = one;
    let mut lj = zero;
    let mut next = 0;
    for i in 1..k {
        let z = y[next].tanh();
        next += 1;
        lj = lj + (1.0 - z.square()).ln();
        l[i * k] = z;
        let mut sum_sqs = z.square();
        for j in 1..i {
            let z = y[next].tanh();
            next += 1;
            lj = lj + (1.0 - z.square()).ln();
            let rest = 1.0 - sum_sqs;
            lj = lj + rest.ln() * 0.5;
            l[i * k + j] = z * rest.sqrt();
            sum_sqs = sum_sqs + l[i * k + j].square();
        }
        l[i * k + i] = (1.0 - sum_sqs).sqrt();
    }
    (l, lj)
}

/// LKJ density on a correlation Cholesky factor, without its normalizing
/// constant (zero at the identity).
pub fn lkj_corr_cholesky_lpdf<'t>(tape: &'t Tape, l: &[Var<'t>], k: usize, eta: f64) -> Var<'t> {
    let mut acc = tape.var(0.0);
    for j in 1..k {
        let coef = (k - j - 1) as f64 + 2.0 * eta - 2.0;
        if coef != 0.0 {
            acc = acc + l[j * k + j].ln() * coef;
        }
    }
    acc
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Linear-interpolation quantile of a sorted slice (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&s, p)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
