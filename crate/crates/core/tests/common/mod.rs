#![allow(dead_code)]

pub mod segment;

use rand::Rng;
use swissmob::{LogDensity, PanelModel};

/// Per-coordinate scale: `1 / (1 + sd)` of the covariate column for
/// regression coefficients, 1 elsewhere.
pub fn coordinate_scales(model: &PanelModel) -> Vec<f64> {
    let names = model.unconstrained_names();
    let mut s = vec![1.0; model.dim()];
    for d in model.equations() {
        let p = d.p();
        for (j, c) in d.covariates.iter().enumerate() {
            let col: Vec<f64> = (0..d.n()).map(|r| d.x[r * p + j]).collect();
            let i = names.iter().position(|n| *n == c.name).unwrap();
            s[i] = 1.0 / (1.0 + swissmob::math::sd(&col));
        }
    }
    s
}

/// A random interior point on the scale of the data: the intercept sits
/// near the mean rate and each coefficient moves its linear predictor by
/// at most about one unit.
pub fn random_point<R: Rng>(model: &PanelModel, rng: &mut R) -> Vec<f64> {
    let names = model.unconstrained_names();
    let scales = coordinate_scales(model);
    let mut x: Vec<f64> = scales.iter().map(|s| s * rng.random_range(-1.0..1.0)).collect();
    for d in model.equations() {
        let rate = d.y.iter().sum::<u64>() as f64 / d.offset.iter().map(|o| o.exp()).sum::<f64>();
        let i = names.iter().position(|n| *n == d.naming.name("alpha_c", None)).unwrap();
        x[i] += rate.max(1e-12).ln();
    }
    x
}

/// Largest relative discrepancy between the tape gradient and central
/// differences with step `1e-5` (in units of each coordinate's scale),
/// over `points` random points.
pub fn max_gradient_error<R: Rng>(model: &PanelModel, points: usize, rng: &mut R) -> f64 {
    let d = model.dim();
    let scales = coordinate_scales(model);
    let mut worst: f64 = 0.0;
    let mut scratch = vec![0.0; d];
    for _ in 0..points {
        let x = random_point(model, rng);
        let (_, g) = model.log_posterior(&x).unwrap();
        for i in 0..d {
            let h = 1e-5 * scales[i];
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (model.log_density_grad(&a, &mut scratch) - model.log_density_grad(&b, &mut scratch)) / (2.0 * h);
            // compare directional derivatives along the scaled axis
            let (gs, fs) = (g[i] * scales[i], fd * scales[i]);
            worst = worst.max((gs - fs).abs() / gs.abs().max(fs.abs()).max(1.0));
        }
    }
    worst
}
