//! Canton adjacency, the ICAR prior and the BYM2 scaling factor.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use super::ExtensionError;
use crate::ad::{Tape, Var};
use crate::math::normal_lpdf;
use crate::reference::{ADJACENCY_EDGES, CANTON_CODES};

/// Default scale of the soft sum-to-zero constraint (a variance).
pub const SOFT_CONSTRAINT_VARIANCE: f64 = 0.001;

/// Undirected neighbourhood graph over labelled units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    labels: Vec<String>,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Adjacency {
    /// Builds a graph on `n` unlabelled nodes. Self-loops are rejected,
    /// repeated edges collapse.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, ExtensionError> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::with_labels(labels, edges)
    }

    pub fn with_labels(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self, ExtensionError> {
        let n = labels.len();
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(ExtensionError::InvalidAdjacency(format!("bad edge ({a}, {b})")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        Ok(Self {
            labels,
            neighbors,
            edges: set.into_iter().collect(),
        })
    }

    /// The bundled canton adjacency, nodes in canonical code order.
    pub fn swiss() -> Self {
        let labels: Vec<String> = CANTON_CODES.iter().map(|s| s.to_string()).collect();
        Self::from_named_edges(labels, ADJACENCY_EDGES.iter().map(|(a, b)| (*a, *b)))
            .expect("bundled adjacency is valid")
    }

    pub fn from_named_edges<'a>(
        labels: Vec<String>,
        edges: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ExtensionError> {
        let pos = |s: &str| {
            labels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| ExtensionError::InvalidAdjacency(format!("unknown node `{s}`")))
        };
        let idx: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(a, b)| Ok((pos(a)?, pos(b)?)))
            .collect::<Result<_, ExtensionError>>()?;
        Self::with_labels(labels, &idx)
    }

    /// Reads a `canton_a,canton_b` edge list; nodes are the 26 cantons.
    pub fn from_csv(path: &Path) -> Result<Self, ExtensionError> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| ExtensionError::InvalidAdjacency(format!("{}: {e}", path.display())))?;
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ExtensionError::InvalidAdjacency(e.to_string()))?;
            if rec.len() != 2 {
                return Err(ExtensionError::InvalidAdjacency("expected two columns".into()));
            }
            pairs.push((rec[0].trim().to_string(), rec[1].trim().to_string()));
        }
        let labels: Vec<String> = CANTON_CODES.iter().map(|s| s.to_string()).collect();
        Self::from_named_edges(labels, pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())))
    }

    /// Induced subgraph on the given labels, in that order.
    pub fn subset(&self, keep: &[&str]) -> Result<Self, ExtensionError> {
        let map: Vec<usize> = keep
            .iter()
            .map(|k| {
                self.labels
                    .iter()
                    .position(|l| l == k)
                    .ok_or_else(|| ExtensionError::InvalidAdjacency(format!("unknown node `{k}`")))
            })
            .collect::<Result<_, _>>()?;
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                let ia = map.iter().position(|&m| m == a)?;
                let ib = map.iter().position(|&m| m == b)?;
                Some((ia, ib))
            })
            .collect();
        Self::with_labels(keep.iter().map(|s| s.to_string()).collect(), &edges)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Each undirected edge once, as `(low, high)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_connected(&self) -> bool {
        if self.n() == 0 {
            return false;
        }
        let mut seen = vec![false; self.n()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Symmetric 0/1 matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), self.n());
        for &(a, b) in &self.edges {
            m[(a, b)] = 1.0;
            m[(b, a)] = 1.0;
        }
        m
    }

    /// ICAR precision `Q`: degrees on the diagonal, −1 for neighbours.
    pub fn precision(&self) -> DMatrix<f64> {
        let mut q = -self.matrix();
        for i in 0..self.n() {
            q[(i, i)] = self.neighbors[i].len() as f64;
        }
        q
    }
}

/// Geometric mean of the diagonal of the generalized inverse of `Q`, found
/// from its eigendecomposition with the constant eigenvector dropped.
pub fn icar_scaling_factor(adj: &Adjacency) -> Result<f64, ExtensionError> {
    if adj.n() < 2 || !adj.is_connected() {
        return Err(ExtensionError::DisconnectedGraph);
    }
    let n = adj.n();
    let eig = SymmetricEigen::new(adj.precision());
    // the single zero eigenvalue belongs to the constant vector
    let zero = (0..n)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("non-empty");
    let mut log_sum = 0.0;
    for i in 0..n {
        let mut d = 0.0;
        for k in 0..n {
            if k == zero {
                continue;
            }
            let v = eig.eigenvectors[(i, k)];
            d += v * v / eig.eigenvalues[k];
        }
        log_sum += d.ln();
    }
    Ok((log_sum / n as f64).exp())
}

/// Draws a sum-to-zero field from the unit-precision ICAR prior.
pub fn sample_icar<R: rand::Rng + ?Sized>(adj: &Adjacency, rng: &mut R) -> Result<Vec<f64>, ExtensionError> {
    if adj.n() < 2 || !adj.is_connected() {
        return Err(ExtensionError::DisconnectedGraph);
    }
    let n = adj.n();
    let eig = SymmetricEigen::new(adj.precision());
    let zero = (0..n)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("non-empty");
    let mut phi = vec![0.0; n];
    for k in (0..n).filter(|&k| k != zero) {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let s = z / eig.eigenvalues[k].sqrt();
        for (i, p) in phi.iter_mut().enumerate() {
            *p += s * eig.eigenvectors[(i, k)];
        }
    }
    Ok(phi)
}

/// `−½ Σ_{i~j} (φ_i − φ_j)²` plus a `N(0, scale)` penalty on the mean of `φ`,
/// where `scale` is a variance.
pub fn icar_log_density(phi: &[f64], adj: &Adjacency, scale: f64) -> Result<f64, ExtensionError> {
    if phi.len() != adj.n() {
        return Err(ExtensionError::LengthMismatch {
            expected: adj.n(),
            got: phi.len(),
        });
    }
    let tape = Tape::new();
    let v = tape.vars(phi);
    Ok(icar_lpdf(&tape, &v, adj, 1.0, scale).val())
}

/// ICAR density of `φ = c·x` on the tape, with `x` the sampled vector.
pub(crate) fn icar_lpdf<'t>(
    tape: &'t Tape,
    x: &[Var<'t>],
    adj: &Adjacency,
    c: f64,
    scale: f64,
) -> Var<'t> {
    let n = x.len();
    let phi: Vec<f64> = x.iter().map(|v| c * v.val()).collect();
    let mut val = 0.0;
    let mut grad = vec![0.0; n];
    for &(a, b) in adj.edges() {
        let d = phi[a] - phi[b];
        val -= 0.5 * d * d;
        grad[a] -= d * c;
        grad[b] += d * c;
    }
    let pair = tape.custom_iter(val, x.iter().copied().zip(grad));
    let mean = tape.sum(x) * (c / n as f64);
    pair + normal_lpdf(mean, 0.0, scale.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_term_on_one_edge() {
        let adj = Adjacency::new(2, &[(0, 1)]).unwrap();
        let lp = icar_log_density(&[1.0, -1.0], &adj, SOFT_CONSTRAINT_VARIANCE).unwrap();
        let soft = -0.5 * (2.0 * std::f64::consts::PI * SOFT_CONSTRAINT_VARIANCE).ln();
        assert!((lp - (-2.0 + soft)).abs() < 1e-12);
    }

    #[test]
    fn constant_field_is_governed_by_the_constraint() {
        let adj = Adjacency::swiss();
        let c = 0.03;
        let lp = icar_log_density(&[c; 26], &adj, SOFT_CONSTRAINT_VARIANCE).unwrap();
        let soft = -0.5 * c * c / SOFT_CONSTRAINT_VARIANCE
            - 0.5 * (2.0 * std::f64::consts::PI * SOFT_CONSTRAINT_VARIANCE).ln();
        assert!((lp - soft).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let adj = Adjacency::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(matches!(
            icar_log_density(&[0.0; 2], &adj, 0.001),
            Err(ExtensionError::LengthMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let adj = Adjacency::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(icar_scaling_factor(&adj), Err(ExtensionError::DisconnectedGraph)));
    }

    #[test]
    fn gradient_matches_differences() {
        let adj = Adjacency::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
        let x = [0.3, -0.8, 1.1, 0.05];
        let f = |x: &[f64]| {
            let t = Tape::new();
            let v = t.vars(x);
            icar_lpdf(&t, &v, &adj, 0.7, 0.001).val()
        };
        let t = Tape::new();
        let v = t.vars(&x);
        let out = icar_lpdf(&t, &v, &adj, 0.7, 0.001);
        let g = t.gradient(out, &v);
        for i in 0..4 {
            let h = 1e-6;
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let n = (f(&a) - f(&b)) / (2.0 * h);
            assert!((g[i] - n).abs() / n.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn subset_keeps_induced_edges() {
        let adj = Adjacency::swiss().subset(&["AI", "AR", "SG", "ZH"]).unwrap();
        assert_eq!(adj.edges(), &[(0, 1), (0, 2), (1, 2), (2, 3)]);
    }
}
