//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Every node stores its value-independent local partials against its
//! parents; a single backward sweep in reverse creation order yields the
//! adjoints. Heavy likelihood terms are computed in plain `f64` and recorded
//! as one fused node via [`Tape::custom`].

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[derive(Default)]
struct Inner {
    ends: Vec<u32>,
    to: Vec<u32>,
    w: Vec<f64>,
}

#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.val)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self {
            inner: RefCell::new(Inner {
                ends: Vec::with_capacity(nodes),
                to: Vec::with_capacity(edges),
                w: Vec::with_capacity(edges),
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        inner.ends.clear();
        inner.to.clear();
        inner.w.clear();
    }

    fn push<I: IntoIterator<Item = (u32, f64)>>(&self, val: f64, edges: I) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        for (t, w) in edges {
            inner.to.push(t);
            inner.w.push(w);
        }
        let end = inner.to.len() as u32;
        inner.ends.push(end);
        Var {
            tape: self,
            idx: (inner.ends.len() - 1) as u32,
            val,
        }
    }

    /// A leaf node: an independent input or a constant.
    pub fn var(&self, val: f64) -> Var<'_> {
        self.push(val, [])
    }

    pub fn vars(&self, vals: &[f64]) -> Vec<Var<'_>> {
        vals.iter().map(|&v| self.var(v)).collect()
    }

    /// Records a node with caller-supplied partial derivatives.
    pub fn custom<'t>(&'t self, val: f64, parents: &[(Var<'t>, f64)]) -> Var<'t> {
        self.push(val, parents.iter().map(|(v, d)| (v.idx, *d)))
    }

    pub fn custom_iter<'t, I>(&'t self, val: f64, parents: I) -> Var<'t>
    where
        I: IntoIterator<Item = (Var<'t>, f64)>,
    {
        self.push(val, parents.into_iter().map(|(v, d)| (v.idx, d)))
    }

    pub fn sum<'t>(&'t self, xs: &[Var<'t>]) -> Var<'t> {
        let val = xs.iter().map(|x| x.val).sum();
        self.push(val, xs.iter().map(|x| (x.idx, 1.0)))
    }

    pub fn dot<'t>(&'t self, xs: &[Var<'t>], c: &[f64]) -> Var<'t> {
        debug_assert_eq!(xs.len(), c.len());
        let val = xs.iter().zip(c).map(|(x, c)| x.val * c).sum();
        self.push(val, xs.iter().zip(c).map(|(x, c)| (x.idx, *c)))
    }

    /// Adjoints of every node with respect to `out`.
    pub fn adjoints(&self, out: Var<'_>) -> Vec<f64> {
        let inner = self.inner.borrow();
        let n = out.idx as usize + 1;
        let mut adj = vec![0.0; n];
        adj[out.idx as usize] = 1.0;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { inner.ends[i - 1] as usize };
            let end = inner.ends[i] as usize;
            for e in start..end {
                adj[inner.to[e] as usize] += inner.w[e] * a;
            }
        }
        adj
    }

    /// Gradient of `out` with respect to the given inputs.
    pub fn gradient(&self, out: Var<'_>, inputs: &[Var<'_>]) -> Vec<f64> {
        let adj = self.adjoints(out);
        inputs
            .iter()
            .map(|v| adj.get(v.idx as usize).copied().unwrap_or(0.0))
            .collect()
    }
}

impl<'t> Var<'t> {
    pub fn val(&self) -> f64 {
        self.val
    }

    pub fn idx(&self) -> usize {
        self.idx as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, val: f64, d: f64) -> Var<'t> {
        self.tape.push(val, [(self.idx, d)])
    }

    fn binary(self, other: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        self.tape.push(val, [(self.idx, da), (other.idx, db)])
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    pub fn sqrt(self) -> Var<'t> {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(self.val * self.val, 2.0 * self.val)
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        self.unary(self.val.powf(p), p * self.val.powf(p - 1.0))
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn ln_1p(self) -> Var<'t> {
        self.unary(self.val.ln_1p(), 1.0 / (1.0 + self.val))
    }

    /// `log(1 + exp(x))`, stable for large `|x|`.
    pub fn log1p_exp(self) -> Var<'t> {
        self.unary(crate::math::log1p_exp(self.val), crate::math::inv_logit(self.val))
    }

    pub fn inv_logit(self) -> Var<'t> {
        let s = crate::math::inv_logit(self.val);
        self.unary(s, s * (1.0 - s))
    }

    pub fn ln_gamma(self) -> Var<'t> {
        self.unary(
            crate::math::ln_gamma(self.val),
            crate::math::digamma(self.val),
        )
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.val + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.val - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.val * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.val / c, 1.0 / c)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        v.unary(self - v.val, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, v: Var<'t>) -> Var<'t> {
        let q = self / v.val;
        v.unary(q, -q / v.val)
    }
}

impl<'t> AddAssign for Var<'t> {
    fn add_assign(&mut self, o: Var<'t>) {
        *self = *self + o;
    }
}

impl<'t> AddAssign<f64> for Var<'t> {
    fn add_assign(&mut self, c: f64) {
        *self = *self + c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize) -> f64 {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    #[test]
    fn product_rule() {
        let t = Tape::new();
        let x = t.var(3.0);
        let y = t.var(-2.0);
        let z = x * y + x.exp() / y;
        let g = t.gradient(z, &[x, y]);
        assert!((g[0] - (-2.0 + 3f64.exp() / -2.0)).abs() < 1e-12);
        assert!((g[1] - (3.0 - 3f64.exp() / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn reused_node_accumulates() {
        let t = Tape::new();
        let x = t.var(1.5);
        let y = x * x * x;
        assert!((t.gradient(y, &[x])[0] - 3.0 * 2.25).abs() < 1e-12);
    }

    #[test]
    fn custom_node_chains() {
        let t = Tape::new();
        let x = t.var(2.0);
        let s = x.square();
        let c = t.custom(5.0 * s.val(), &[(s, 5.0)]);
        assert!((t.gradient(c, &[x])[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn special_functions_match_differences() {
        let f = |x: &[f64]| {
            let t = Tape::new();
            let v = t.var(x[0]);
            let out = v.ln_gamma() + v.tanh() * v.sqrt() - v.log1p_exp() + v.inv_logit().ln()
                + v.powf(1.7)
                + v.ln_1p();
            out.val()
        };
        for x0 in [0.3, 1.0, 4.5, 17.0] {
            let t = Tape::new();
            let v = t.var(x0);
            let out = v.ln_gamma() + v.tanh() * v.sqrt() - v.log1p_exp() + v.inv_logit().ln()
                + v.powf(1.7)
                + v.ln_1p();
            let g = t.gradient(out, &[v])[0];
            let n = fd(f, &[x0], 0);
            assert!((g - n).abs() / n.abs().max(1.0) < 1e-7, "{x0}: {g} vs {n}");
        }
    }

    proptest! {
        #[test]
        fn rational_expression_gradient(a in -3.0f64..3.0, b in 0.5f64..4.0, c in -2.0f64..2.0) {
            let f = |x: &[f64]| (x[0] * x[1] - x[2]) / x[1] + 2.0 * x[0] - 1.0 / x[1] + (x[2] - 0.5) * x[0];
            let t = Tape::new();
            let v = t.vars(&[a, b, c]);
            let out = (v[0] * v[1] - v[2]) / v[1] + 2.0 * v[0] - 1.0 / v[1] + (v[2] - 0.5) * v[0];
            prop_assert!((out.val() - f(&[a, b, c])).abs() < 1e-12);
            let g = t.gradient(out, &v);
            for i in 0..3 {
                let n = fd(f, &[a, b, c], i);
                prop_assert!((g[i] - n).abs() < 1e-6 * n.abs().max(1.0));
            }
        }

        #[test]
        fn sum_and_dot_are_linear(xs in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
            let t = Tape::new();
            let v = t.vars(&xs);
            let c: Vec<f64> = (0..xs.len()).map(|i| i as f64 - 2.0).collect();
            let out = t.sum(&v) + t.dot(&v, &c);
            let g = t.gradient(out, &v);
            for (gi, ci) in g.iter().zip(&c) {
                prop_assert_eq!(*gi, 1.0 + ci);
            }
        }
    }
}
