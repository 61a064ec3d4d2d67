//! Warm-up adaptation: dual averaging of the step size and windowed
//! estimation of a diagonal inverse metric.

/// Nesterov dual averaging towards a target acceptance statistic.
#[derive(Clone, Debug)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(target: f64, step: f64) -> Self {
        let mut d = Self { target, mu: 0.0, counter: 0.0, s_bar: 0.0, x_bar: 0.0 };
        d.restart(step);
        d
    }

    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Updates the running statistics and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = if accept_stat.is_nan() { 0.0 } else { accept_stat.min(1.0) };
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// The averaged step size used after warm-up.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Clone, Debug)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.n as f64;
            *s += d * (v - *m);
        }
    }
}

/// Staged warm-up schedule: an initial fast buffer, doubling slow windows
/// for the metric, and a terminal fast buffer.
#[derive(Clone, Debug)]
pub struct WindowedAdaptation {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    estimator: Welford,
}

impl WindowedAdaptation {
    pub fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75, 50, 25);
        if num_warmup < 20 {
            // too short for metric adaptation; step size only
            init = num_warmup;
            term = 0;
            base = 0;
        } else if init + term + base > num_warmup {
            init = (0.15 * num_warmup as f64) as usize;
            term = (0.1 * num_warmup as f64) as usize;
            base = num_warmup - (init + term);
        }
        Self {
            num_warmup,
            init_buffer: init,
            term_buffer: term,
            window_size: base,
            next_window: (init + base).saturating_sub(1),
            counter: 0,
            estimator: Welford::new(dim),
        }
    }

    fn in_window(&self) -> bool {
        self.window_size > 0
            && self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn window_end(&self) -> bool {
        self.window_size > 0 && self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.num_warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Feeds one warm-up position; returns `true` when `inv_metric` was
    /// updated at the end of a slow window.
    pub fn observe(&mut self, q: &[f64], inv_metric: &mut [f64]) -> bool {
        if self.in_window() {
            self.estimator.add(q);
        }
        if self.window_end() {
            self.compute_next_window();
            let n = self.estimator.n as f64;
            for (m, s) in inv_metric.iter_mut().zip(&self.estimator.m2) {
                let var = if n > 1.0 { s / (n - 1.0) } else { 1.0 };
                // shrink towards unit scale, as in Stan
                *m = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
            }
            self.estimator = Welford::new(inv_metric.len());
            self.counter += 1;
            return true;
        }
        self.counter += 1;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_fit_inside_warmup() {
        let dim = 1;
        let mut w = WindowedAdaptation::new(dim, 1000);
        let mut m = vec![1.0];
        let mut ends = Vec::new();
        for i in 0..1000 {
            if w.observe(&[i as f64], &mut m) {
                ends.push(i);
            }
        }
        // 75 + 25, 50, 100, 200, then stretched to warmup − 50
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut d = DualAveraging::new(0.8, 1.0);
        let up = d.update(1.0);
        let mut d2 = DualAveraging::new(0.8, 1.0);
        let down = d2.update(0.0);
        assert!(up > down);
    }
}
