//! Hamiltonian Monte Carlo with No-U-Turn trajectories, staged warm-up
//! adaptation and parallel chains.

pub mod adapt;
pub mod nuts;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nuts::{leapfrog, PhasePoint, Transition, MAX_DELTA_H};

use adapt::{DualAveraging, WindowedAdaptation};

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density; a
    /// non-finite value marks the point as outside the support.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Names of the constrained outputs of [`LogDensity::constrain`].
    fn param_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("chain {chain}: no finite initial point after {attempts} attempts")]
    InitializationFailure { chain: usize, attempts: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub target_accept: f64,
    pub max_tree_depth: u32,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { chains: 4, warmup: 2000, samples: 2000, target_accept: 0.8, max_tree_depth: 10, seed: 1 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.chains < 1 || self.warmup < 1 || self.samples < 1 {
            return Err(InferenceError::InvalidConfig("chains, warmup and samples must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(InferenceError::InvalidConfig("target_accept must lie in (0, 1)".into()));
        }
        if self.max_tree_depth < 1 {
            return Err(InferenceError::InvalidConfig("max_tree_depth must be at least 1".into()));
        }
        Ok(())
    }
}

const INIT_RADIUS: f64 = 2.0;
const INIT_ATTEMPTS: usize = 100;

/// Post-warm-up draws on the constrained scale, `chains × iterations ×
/// parameters`, with per-iteration sampler telemetry.
#[derive(Clone, Debug, PartialEq)]
pub struct Draws {
    names: Vec<String>,
    chains: usize,
    iterations: usize,
    values: Vec<f64>,
    telemetry: Vec<Transition>,
    warmup_divergences: Vec<usize>,
}

impl Draws {
    /// `values[chain][iteration]` rows of equal length; telemetry may be
    /// empty.
    pub fn new(names: Vec<String>, values: Vec<Vec<Vec<f64>>>, telemetry: Vec<Vec<Transition>>) -> Self {
        let chains = values.len();
        let iterations = values.first().map_or(0, |c| c.len());
        let p = names.len();
        let mut flat = Vec::with_capacity(chains * iterations * p);
        for c in &values {
            assert_eq!(c.len(), iterations, "ragged chains");
            for row in c {
                assert_eq!(row.len(), p, "row length differs from names");
                flat.extend_from_slice(row);
            }
        }
        let telemetry: Vec<Transition> = telemetry.into_iter().flatten().collect();
        Self { names, chains, iterations, values: flat, telemetry, warmup_divergences: vec![0; chains] }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, chain: usize, iter: usize, param: usize) -> f64 {
        self.values[(chain * self.iterations + iter) * self.names.len() + param]
    }

    /// Full parameter vector of one draw.
    pub fn row(&self, chain: usize, iter: usize) -> &[f64] {
        let p = self.names.len();
        let s = (chain * self.iterations + iter) * p;
        &self.values[s..s + p]
    }

    /// Per-chain series of parameter `param`.
    pub fn series(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| (0..self.iterations).map(|i| self.get(c, i, param)).collect())
            .collect()
    }

    pub fn chain_values(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        self.index_of(name).map(|j| self.series(j))
    }

    /// All draws of `name`, chains concatenated.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|j| self.pooled_index(j))
    }

    pub fn pooled_index(&self, param: usize) -> Vec<f64> {
        self.series(param).into_iter().flatten().collect()
    }

    pub fn telemetry(&self) -> &[Transition] {
        &self.telemetry
    }

    pub fn chain_telemetry(&self, chain: usize) -> &[Transition] {
        if self.telemetry.is_empty() {
            return &[];
        }
        &self.telemetry[chain * self.iterations..(chain + 1) * self.iterations]
    }

    pub fn divergences(&self) -> usize {
        self.telemetry.iter().filter(|t| t.divergent).count()
    }

    pub fn warmup_divergences(&self) -> &[usize] {
        &self.warmup_divergences
    }

    /// Replaces the per-chain warm-up divergence counts; an empty list
    /// keeps the current ones.
    pub fn with_warmup_divergences(mut self, counts: Vec<usize>) -> Self {
        if !counts.is_empty() {
            assert_eq!(counts.len(), self.chains, "one count per chain");
            self.warmup_divergences = counts;
        }
        self
    }

    /// Every post-warm-up transition diverged.
    pub fn all_divergent(&self) -> bool {
        !self.telemetry.is_empty() && self.telemetry.iter().all(|t| t.divergent)
    }

    /// Appends derived quantities computed per draw.
    pub fn with_derived(&self, names: &[String], f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(self.chains);
        for c in 0..self.chains {
            let mut chain = Vec::with_capacity(self.iterations);
            for i in 0..self.iterations {
                let row = self.row(c, i);
                let mut r = row.to_vec();
                let extra = f(row);
                assert_eq!(extra.len(), names.len());
                r.extend(extra);
                chain.push(r);
            }
            values.push(chain);
        }
        let mut all = self.names.clone();
        all.extend_from_slice(names);
        let mut out = Self::new(all, values, Vec::new());
        out.telemetry = self.telemetry.clone();
        out.warmup_divergences = self.warmup_divergences.clone();
        out
    }
}

/// Output of one chain before assembly.
struct ChainRun {
    draws: Vec<Vec<f64>>,
    telemetry: Vec<Transition>,
    warmup_divergences: usize,
}

/// Per-chain RNG stream derived from the master seed.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

fn initialize<D: LogDensity + ?Sized>(density: &D, rng: &mut ChaCha8Rng, chain: usize) -> Result<PhasePoint, InferenceError> {
    let dim = density.dim();
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-INIT_RADIUS..INIT_RADIUS)).collect();
        let z = PhasePoint::new(density, q);
        if z.lp.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
    }
    Err(InferenceError::InitializationFailure { chain, attempts: INIT_ATTEMPTS })
}

fn run_chain<D: LogDensity + ?Sized>(density: &D, config: &SamplerConfig, chain: usize) -> Result<ChainRun, InferenceError> {
    let mut rng = chain_rng(config.seed, chain);
    let mut z = initialize(density, &mut rng, chain)?;
    let dim = density.dim();
    let mut inv_metric = vec![1.0; dim];
    let mut eps = nuts::init_step_size(density, &inv_metric, 1.0, &z, &mut rng);
    let mut da = DualAveraging::new(config.target_accept, eps);
    let mut windows = WindowedAdaptation::new(dim, config.warmup);
    let mut warmup_divergences = 0;
    for _ in 0..config.warmup {
        let t = nuts::transition(density, &inv_metric, eps, config.max_tree_depth, &mut z, &mut rng);
        warmup_divergences += t.divergent as usize;
        eps = da.update(t.accept_stat);
        if windows.observe(&z.q, &mut inv_metric) {
            eps = nuts::init_step_size(density, &inv_metric, eps, &z, &mut rng);
            da.restart(eps);
        }
    }
    eps = da.final_step();
    let mut draws = Vec::with_capacity(config.samples);
    let mut telemetry = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let t = nuts::transition(density, &inv_metric, eps, config.max_tree_depth, &mut z, &mut rng);
        draws.push(density.constrain(&z.q));
        telemetry.push(t);
    }
    Ok(ChainRun { draws, telemetry, warmup_divergences })
}

/// Runs `config.chains` chains in parallel. Results depend only on the
/// seed and the chain index.
pub fn sample<D: LogDensity + ?Sized>(density: &D, config: &SamplerConfig) -> Result<Draws, InferenceError> {
    config.validate()?;
    let runs: Vec<ChainRun> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(density, config, c))
        .collect::<Result<_, _>>()?;
    let mut values = Vec::with_capacity(runs.len());
    let mut telemetry = Vec::with_capacity(runs.len());
    let mut wd = Vec::with_capacity(runs.len());
    for r in runs {
        values.push(r.draws);
        telemetry.push(r.telemetry);
        wd.push(r.warmup_divergences);
    }
    let mut d = Draws::new(density.param_names(), values, telemetry);
    d.warmup_divergences = wd;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Gauss(usize);

    impl LogDensity for Gauss {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = -xi;
            }
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }

    #[test]
    fn determinism() {
        let cfg = SamplerConfig { chains: 2, warmup: 100, samples: 50, seed: 9, ..Default::default() };
        let a = sample(&Gauss(3), &cfg).unwrap();
        let b = sample(&Gauss(3), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_conserved_for_small_steps() {
        let d = Gauss(4);
        let mut z = PhasePoint::new(&d, vec![0.3, -1.0, 0.7, 2.0]);
        z.p = vec![0.5, 0.1, -0.4, 1.2];
        let m = vec![1.0; 4];
        let h0 = z.hamiltonian(&m);
        for _ in 0..100 {
            leapfrog(&d, &m, &mut z, 1e-4);
        }
        assert!((z.hamiltonian(&m) - h0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SamplerConfig { chains: 0, ..Default::default() };
        assert!(sample(&Gauss(1), &cfg).is_err());
    }

    #[test]
    fn uncovers_standard_normal_moments() {
        let cfg = SamplerConfig { chains: 2, warmup: 500, samples: 1000, seed: 3, ..Default::default() };
        let d = sample(&Gauss(2), &cfg).unwrap();
        let x = d.pooled("x[1]").unwrap();
        assert!(crate::math::mean(&x).abs() < 0.15);
        assert!((crate::math::variance(&x) - 1.0).abs() < 0.15);
    }
}
