//! Multinomial NUTS with a diagonal Euclidean metric.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Energy error beyond which a trajectory is flagged divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

/// Phase-space point.
#[derive(Clone, Debug)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub lp: f64,
}

impl PhasePoint {
    pub fn new<D: LogDensity + ?Sized>(density: &D, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let lp = density.log_density_grad(&q, &mut grad);
        let n = q.len();
        Self { q, p: vec![0.0; n], grad, lp }
    }

    pub fn kinetic(&self, inv_metric: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    pub fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        let h = self.kinetic(inv_metric) - self.lp;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn velocity(&self, inv_metric: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_metric).map(|(p, m)| p * m).collect()
    }

    fn resample_momentum<R: Rng + ?Sized>(&mut self, rng: &mut R, inv_metric: &[f64]) {
        for (p, m) in self.p.iter_mut().zip(inv_metric) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
    }
}

/// One leapfrog step of size `eps` (negative to integrate backwards).
pub fn leapfrog<D: LogDensity + ?Sized>(density: &D, inv_metric: &[f64], z: &mut PhasePoint, eps: f64) {
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(inv_metric) {
        *q += eps * p * m;
    }
    z.lp = density.log_density_grad(&z.q, &mut z.grad);
    if !z.lp.is_finite() || z.grad.iter().any(|g| !g.is_finite()) {
        z.lp = f64::NEG_INFINITY;
        return;
    }
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
}

/// Per-iteration sampler statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Transition {
    pub divergent: bool,
    pub tree_depth: u32,
    pub n_leapfrog: u32,
    pub accept_stat: f64,
    pub step_size: f64,
    pub energy: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

struct Tree<'a, D: LogDensity + ?Sized> {
    density: &'a D,
    inv_metric: &'a [f64],
    eps: f64,
    h0: f64,
    n_leapfrog: u32,
    sum_metro: f64,
    divergent: bool,
}

/// Endpoint bookkeeping of a subtree.
struct Ends {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
}

impl<D: LogDensity + ?Sized> Tree<'_, D> {
    #[allow(clippy::too_many_arguments)]
    fn build<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        depth: u32,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        rho: &mut Vec<f64>,
        log_sum_weight: &mut f64,
        sign: f64,
    ) -> Option<Ends> {
        if depth == 0 {
            leapfrog(self.density, self.inv_metric, z, sign * self.eps);
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_metric);
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            let w = self.h0 - h;
            *log_sum_weight = log_sum_exp(*log_sum_weight, w);
            self.sum_metro += if w > 0.0 { 1.0 } else { w.exp() };
            *z_propose = z.clone();
            let ps = z.velocity(self.inv_metric);
            *rho = add(rho, &z.p);
            if self.divergent {
                return None;
            }
            return Some(Ends {
                p_sharp_beg: ps.clone(),
                p_sharp_end: ps,
                p_beg: z.p.clone(),
                p_end: z.p.clone(),
            });
        }
        let dim = z.q.len();
        let mut rho_left = vec![0.0; dim];
        let mut lsw_left = f64::NEG_INFINITY;
        let left = self.build(rng, depth - 1, z, z_propose, &mut rho_left, &mut lsw_left, sign)?;
        let mut z_propose_right = z.clone();
        let mut rho_right = vec![0.0; dim];
        let mut lsw_right = f64::NEG_INFINITY;
        let right = self.build(rng, depth - 1, z, &mut z_propose_right, &mut rho_right, &mut lsw_right, sign)?;

        let lsw_sub = log_sum_exp(lsw_left, lsw_right);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_sub);
        if lsw_right > lsw_sub || rng.random::<f64>() < (lsw_right - lsw_sub).exp() {
            *z_propose = z_propose_right;
        }
        let rho_sub = add(&rho_left, &rho_right);
        *rho = add(rho, &rho_sub);
        let mut persist = criterion(&left.p_sharp_beg, &right.p_sharp_end, &rho_sub);
        persist &= criterion(&left.p_sharp_beg, &right.p_sharp_beg, &add(&rho_left, &right.p_beg));
        persist &= criterion(&left.p_sharp_end, &right.p_sharp_end, &add(&rho_right, &left.p_end));
        if !persist {
            return None;
        }
        Some(Ends {
            p_sharp_beg: left.p_sharp_beg,
            p_sharp_end: right.p_sharp_end,
            p_beg: left.p_beg,
            p_end: right.p_end,
        })
    }
}

/// One NUTS transition from `current`, which is replaced by the new state.
pub fn transition<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    density: &D,
    inv_metric: &[f64],
    eps: f64,
    max_depth: u32,
    current: &mut PhasePoint,
    rng: &mut R,
) -> Transition {
    current.resample_momentum(rng, inv_metric);
    let h0 = current.hamiltonian(inv_metric);
    let dim = current.q.len();

    let mut z_fwd = current.clone();
    let mut z_bwd = current.clone();
    let mut z_sample = current.clone();
    let mut z_propose = current.clone();

    let p0 = current.velocity(inv_metric);
    let (mut ps_fwd_bwd, mut ps_fwd_fwd) = (p0.clone(), p0.clone());
    let (mut ps_bwd_bwd, mut ps_bwd_fwd) = (p0.clone(), p0);
    let (mut p_fwd_bwd, mut p_fwd_fwd) = (current.p.clone(), current.p.clone());
    let (mut p_bwd_bwd, mut p_bwd_fwd) = (current.p.clone(), current.p.clone());
    let mut rho = current.p.clone();
    let mut log_sum_weight = 0.0;

    let mut tree = Tree { density, inv_metric, eps, h0, n_leapfrog: 0, sum_metro: 0.0, divergent: false };
    let mut depth = 0;
    while depth < max_depth {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bwd = vec![0.0; dim];
        let mut lsw_sub = f64::NEG_INFINITY;
        let valid;
        if rng.random::<f64>() > 0.5 {
            rho_bwd.clone_from(&rho);
            p_bwd_fwd.clone_from(&p_bwd_bwd);
            ps_bwd_fwd.clone_from(&ps_bwd_bwd);
            let ends = tree.build(rng, depth, &mut z_fwd, &mut z_propose, &mut rho_fwd, &mut lsw_sub, 1.0);
            valid = match ends {
                Some(e) => {
                    ps_fwd_bwd = e.p_sharp_beg;
                    ps_fwd_fwd = e.p_sharp_end;
                    p_fwd_bwd = e.p_beg;
                    p_fwd_fwd = e.p_end;
                    true
                }
                None => false,
            };
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bwd.clone_from(&p_fwd_fwd);
            ps_fwd_bwd.clone_from(&ps_fwd_fwd);
            let ends = tree.build(rng, depth, &mut z_bwd, &mut z_propose, &mut rho_bwd, &mut lsw_sub, -1.0);
            valid = match ends {
                Some(e) => {
                    ps_bwd_fwd = e.p_sharp_beg;
                    ps_bwd_bwd = e.p_sharp_end;
                    p_bwd_fwd = e.p_beg;
                    p_bwd_bwd = e.p_end;
                    true
                }
                None => false,
            };
        }
        if !valid {
            break;
        }
        depth += 1;
        if lsw_sub > log_sum_weight || rng.random::<f64>() < (lsw_sub - log_sum_weight).exp() {
            z_sample = z_propose.clone();
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_sub);
        rho = add(&rho_bwd, &rho_fwd);
        let mut persist = criterion(&ps_bwd_bwd, &ps_fwd_fwd, &rho);
        persist &= criterion(&ps_bwd_bwd, &ps_fwd_bwd, &add(&rho_bwd, &p_fwd_bwd));
        persist &= criterion(&ps_bwd_fwd, &ps_fwd_fwd, &add(&rho_fwd, &p_bwd_fwd));
        if !persist {
            break;
        }
    }
    let n = tree.n_leapfrog.max(1);
    *current = z_sample;
    Transition {
        divergent: tree.divergent,
        tree_depth: depth,
        n_leapfrog: tree.n_leapfrog,
        accept_stat: tree.sum_metro / n as f64,
        step_size: eps,
        energy: current.hamiltonian(inv_metric),
    }
}

/// Doubles or halves `eps` until one leapfrog step crosses an acceptance
/// of 0.8.
pub fn init_step_size<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    density: &D,
    inv_metric: &[f64],
    mut eps: f64,
    start: &PhasePoint,
    rng: &mut R,
) -> f64 {
    let threshold = 0.8f64.ln();
    let mut z = start.clone();
    z.resample_momentum(rng, inv_metric);
    let h0 = z.hamiltonian(inv_metric);
    leapfrog(density, inv_metric, &mut z, eps);
    let dh = h0 - z.hamiltonian(inv_metric);
    let up = dh > threshold;
    for _ in 0..100 {
        let mut z = start.clone();
        z.resample_momentum(rng, inv_metric);
        let h0 = z.hamiltonian(inv_metric);
        leapfrog(density, inv_metric, &mut z, eps);
        let dh = h0 - z.hamiltonian(inv_metric);
        if up && !(dh > threshold) || !up && !(dh < threshold) {
            break;
        }
        eps = if up { 2.0 * eps } else { 0.5 * eps };
        if !(1e-12..=1e7).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-12, 1e7)
}
