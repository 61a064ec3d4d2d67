use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::design::{ALPHA_PRIOR, DELTA_SD};
use super::likelihood::{etas, nb_glm};
use super::{Design, ModelError, ModelKind, ModelSpec, Naming};
use crate::ad::{Tape, Var};
use crate::extensions::icar::{icar_lpdf, icar_scaling_factor, Adjacency, SOFT_CONSTRAINT_VARIANCE};
use crate::inference::LogDensity;
use crate::math::{
    beta_lpdf, cholesky_corr, gamma_lpdf, half_t_lpdf, lkj_corr_cholesky_lpdf, normal_lpdf_scale,
    normal_lpdf_sum,
};
use crate::panel::{CantonId, PanelDataset, WEEKDAY_LABELS};

const ZETA_SHAPE: f64 = 0.01;
const ZETA_RATE: f64 = 0.01;
const HALF_T_NU: f64 = 3.0;
const HALF_T_SCALE: f64 = 2.5;
const VARPHI_A: f64 = 0.5;
const LKJ_ETA: f64 = 2.0;

/// Map from an unconstrained coordinate to its natural scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Log,
    Logit,
    /// `tanh`-based canonical partial correlation.
    PartialCorrelation,
}

/// Canton-effect structure shared by the equations of a model.
#[derive(Clone, Debug)]
pub enum EffectStructure {
    /// `θ_i ~ N(0, σ_θ)` per equation.
    Independent { centered: bool },
    /// BYM2 combined effect on a single equation.
    Bym2(Adjacency),
    /// Effects correlated across equations through an LKJ(2) correlation.
    Correlated,
}

#[derive(Clone, Copy, Debug)]
struct EqSlots {
    alpha: usize,
    coefs: usize,
    delta: usize,
    zeta: usize,
}

#[derive(Clone, Debug)]
enum Effects {
    Independent { centered: bool, slots: Vec<(usize, usize)> },
    Bym2 { theta: usize, phi: usize, varphi: usize, tau: usize, adj: Adjacency, kappa: f64 },
    Correlated { sigma: usize, z: usize, corr: usize },
}

/// Positions of one equation's blocks in the constrained output vector.
#[derive(Clone, Copy, Debug)]
struct OutPos {
    alpha: usize,
    coefs: usize,
    delta: usize,
    zeta: usize,
    units: usize,
}

/// Compiled log posterior of a panel model.
#[derive(Clone, Debug)]
pub struct PanelModel {
    spec: ModelSpec,
    equations: Vec<Design>,
    slots: Vec<EqSlots>,
    effects: Effects,
    n_units: usize,
    dim: usize,
    transforms: Vec<Transform>,
    unconstrained_names: Vec<String>,
    names: Vec<String>,
    out_pos: Vec<OutPos>,
}

struct Forward<'t> {
    lp: Var<'t>,
    eqs: Vec<EqVals<'t>>,
    extra: Vec<Var<'t>>,
}

struct EqVals<'t> {
    alpha: Var<'t>,
    coefs: Vec<Var<'t>>,
    delta: Vec<Var<'t>>,
    zeta: Var<'t>,
    sigma: Option<Var<'t>>,
    units: Vec<Var<'t>>,
}

impl PanelModel {
    /// Compiles `spec` against `panel`.
    pub fn new(spec: &ModelSpec, panel: &PanelDataset) -> Result<Self, ModelError> {
        spec.validate()?;
        let k = spec.variable();
        let time = spec.time_spec;
        let ext = spec.extensions;
        let (designs, structure) = match spec.kind {
            ModelKind::Mobility if ext.joint_multivariate => {
                let d = spec
                    .variables
                    .iter()
                    .map(|&v| Design::mobility(panel, v, time, Naming::Label(v.name().into())))
                    .collect::<Result<Vec<_>, _>>()?;
                (d, EffectStructure::Correlated)
            }
            ModelKind::Mobility => {
                let d = Design::mobility(panel, k, time, Naming::Plain)?;
                let s = if ext.spatial_bym2 {
                    let codes: Vec<&str> = panel.cantons().iter().map(|c| c.code()).collect();
                    let adj = Adjacency::swiss()
                        .subset(&codes)
                        .map_err(|e| ModelError::Spatial(e.to_string()))?;
                    EffectStructure::Bym2(adj)
                } else {
                    EffectStructure::Independent { centered: spec.centered }
                };
                (vec![d], s)
            }
            ModelKind::Cases => {
                let s = spec.lag.expect("validated");
                let d = Design::cases(panel, k, s, time, ext.tests_control, Naming::Plain)?;
                (vec![d], EffectStructure::Independent { centered: spec.centered })
            }
            ModelKind::MediationMediator => {
                let d = Design::mediator(panel, k, spec.lag.expect("validated"), Naming::Plain)?;
                (vec![d], EffectStructure::Independent { centered: spec.centered })
            }
            ModelKind::MediationOutcome => {
                let s = spec.lag.expect("validated");
                let d = Design::outcome(panel, k, s, ext.interaction, Naming::Plain)?;
                (vec![d], EffectStructure::Independent { centered: spec.centered })
            }
            ModelKind::Mediation => {
                let s = spec.lag.expect("validated");
                let m = Design::mediator(panel, k, s, Naming::Suffix("_m"))?;
                let y = Design::outcome(panel, k, s, false, Naming::Suffix("_y"))?;
                (vec![m, y], EffectStructure::Correlated)
            }
        };
        Self::from_designs(spec.clone(), designs, structure)
    }

    /// Assembles a model from prepared designs.
    pub fn from_designs(
        spec: ModelSpec,
        equations: Vec<Design>,
        structure: EffectStructure,
    ) -> Result<Self, ModelError> {
        if equations.is_empty() {
            return Err(ModelError::InvalidSpec("no equations".into()));
        }
        let units = equations[0].units.clone();
        if equations.iter().any(|d| d.units != units) {
            return Err(ModelError::InvalidSpec("equations disagree on canton units".into()));
        }
        let n_units = units.len();
        let unit_codes: Vec<&str> = units.iter().map(|c| c.code()).collect();
        let mut t = Vec::new();
        let mut un = Vec::new();
        let mut slots = Vec::new();
        let push = |t: &mut Vec<Transform>, un: &mut Vec<String>, tr: Transform, name: String| {
            t.push(tr);
            un.push(name);
            t.len() - 1
        };
        for d in &equations {
            let nm = &d.naming;
            let alpha = push(&mut t, &mut un, Transform::Identity, nm.name("alpha_c", None));
            let coefs = t.len();
            for c in &d.covariates {
                push(&mut t, &mut un, Transform::Identity, c.name.clone());
            }
            let delta = t.len();
            for w in &WEEKDAY_LABELS[1..] {
                push(&mut t, &mut un, Transform::Identity, nm.name("delta", Some(w)));
            }
            let zeta = push(&mut t, &mut un, Transform::Log, nm.name("log_zeta", None));
            slots.push(EqSlots { alpha, coefs, delta, zeta });
        }
        let effects = match structure {
            EffectStructure::Independent { centered } => {
                let mut s = Vec::new();
                for d in &equations {
                    let nm = &d.naming;
                    let sigma = push(&mut t, &mut un, Transform::Log, nm.name("log_sigma_theta", None));
                    let re = t.len();
                    let base = if centered { "theta" } else { "theta_raw" };
                    for c in &unit_codes {
                        push(&mut t, &mut un, Transform::Identity, nm.name(base, Some(c)));
                    }
                    s.push((sigma, re));
                }
                Effects::Independent { centered, slots: s }
            }
            EffectStructure::Bym2(adj) => {
                if equations.len() != 1 {
                    return Err(ModelError::InvalidSpec("BYM2 needs a single equation".into()));
                }
                if adj.n() != n_units || adj.labels().iter().zip(&unit_codes).any(|(a, b)| a != b) {
                    return Err(ModelError::Spatial("adjacency nodes differ from panel cantons".into()));
                }
                let kappa = icar_scaling_factor(&adj).map_err(|e| ModelError::Spatial(e.to_string()))?;
                let theta = t.len();
                for c in &unit_codes {
                    push(&mut t, &mut un, Transform::Identity, format!("theta[{c}]"));
                }
                let phi = t.len();
                for c in &unit_codes {
                    push(&mut t, &mut un, Transform::Identity, format!("phi_star[{c}]"));
                }
                let varphi = push(&mut t, &mut un, Transform::Logit, "logit_varphi".into());
                let tau = push(&mut t, &mut un, Transform::Log, "log_tau".into());
                Effects::Bym2 { theta, phi, varphi, tau, adj, kappa }
            }
            EffectStructure::Correlated => {
                let k = equations.len();
                if k < 2 {
                    return Err(ModelError::InvalidSpec("correlated effects need two equations".into()));
                }
                let sigma = t.len();
                for d in &equations {
                    push(&mut t, &mut un, Transform::Log, d.naming.name("log_sigma_theta", None));
                }
                let z = t.len();
                for d in &equations {
                    for c in &unit_codes {
                        push(&mut t, &mut un, Transform::Identity, d.naming.name("z", Some(c)));
                    }
                }
                let corr = t.len();
                for i in 0..k * (k - 1) / 2 {
                    push(&mut t, &mut un, Transform::PartialCorrelation, format!("corr_free[{}]", i + 1));
                }
                Effects::Correlated { sigma, z, corr }
            }
        };

        let mut model = Self {
            spec,
            equations,
            slots,
            effects,
            n_units,
            dim: t.len(),
            transforms: t,
            unconstrained_names: un,
            names: Vec::new(),
            out_pos: Vec::new(),
        };
        model.build_output_names(&unit_codes);
        Ok(model)
    }

    fn build_output_names(&mut self, codes: &[&str]) {
        let mut names = Vec::new();
        let mut pos = Vec::new();
        let bym2 = matches!(self.effects, Effects::Bym2 { .. });
        for d in &self.equations {
            let nm = &d.naming;
            let alpha = names.len();
            names.push(nm.name("alpha", None));
            let coefs = names.len();
            names.extend(d.covariates.iter().map(|c| c.name.clone()));
            let delta = names.len();
            for w in &WEEKDAY_LABELS[1..] {
                names.push(nm.name("delta", Some(w)));
            }
            let zeta = names.len();
            names.push(nm.name("zeta", None));
            if !bym2 {
                names.push(nm.name("sigma_theta", None));
            }
            let units = names.len();
            let base = if bym2 { "upsilon" } else { "theta" };
            for c in codes {
                names.push(nm.name(base, Some(c)));
            }
            pos.push(OutPos { alpha, coefs, delta, zeta, units });
        }
        match &self.effects {
            Effects::Independent { .. } => {}
            Effects::Bym2 { .. } => {
                names.push("varphi".into());
                names.push("tau".into());
                for c in codes {
                    names.push(format!("theta[{c}]"));
                }
                for c in codes {
                    names.push(format!("phi_star[{c}]"));
                }
            }
            Effects::Correlated { .. } => {
                if self.spec.kind == ModelKind::Mediation {
                    names.push("rho".into());
                } else {
                    let labels: Vec<String> =
                        self.spec.variables.iter().map(|v| v.name().to_string()).collect();
                    for i in 0..labels.len() {
                        for j in i + 1..labels.len() {
                            names.push(format!("corr[{},{}]", labels[i], labels[j]));
                        }
                    }
                }
            }
        }
        self.names = names;
        self.out_pos = pos;
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn equations(&self) -> &[Design] {
        &self.equations
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn unconstrained_names(&self) -> &[String] {
        &self.unconstrained_names
    }

    /// The BYM2 scaling factor, when the spatial extension is active.
    pub fn kappa(&self) -> Option<f64> {
        match &self.effects {
            Effects::Bym2 { kappa, .. } => Some(*kappa),
            _ => None,
        }
    }

    fn forward<'t>(&self, tape: &'t Tape, x: &[Var<'t>]) -> Forward<'t> {
        let mut terms = Vec::new();
        let mut eqs = Vec::new();
        for (d, s) in self.equations.iter().zip(&self.slots) {
            let p = d.p();
            let coefs = x[s.coefs..s.coefs + p].to_vec();
            let alpha = x[s.alpha] - tape.dot(&coefs, &d.xbar);
            terms.push(ALPHA_PRIOR.lpdf(alpha));
            for (c, v) in d.covariates.iter().zip(&coefs) {
                terms.push(c.prior.lpdf(*v));
            }
            let delta = x[s.delta..s.delta + 6].to_vec();
            terms.push(normal_lpdf_sum(tape, &delta, 0.0, DELTA_SD));
            let zeta = x[s.zeta].exp();
            terms.push(gamma_lpdf(zeta, ZETA_SHAPE, ZETA_RATE));
            terms.push(x[s.zeta]);
            eqs.push(EqVals { alpha, coefs, delta, zeta, sigma: None, units: Vec::new() });
        }

        let n = self.n_units;
        let mut extra = Vec::new();
        match &self.effects {
            Effects::Independent { centered, slots } => {
                for (eq, &(ls, re)) in eqs.iter_mut().zip(slots) {
                    let sigma = x[ls].exp();
                    terms.push(half_t_lpdf(sigma, HALF_T_NU, HALF_T_SCALE));
                    terms.push(x[ls]);
                    let raw = &x[re..re + n];
                    if *centered {
                        for &th in raw {
                            terms.push(normal_lpdf_scale(th, 0.0, sigma));
                        }
                        eq.units = raw.to_vec();
                    } else {
                        terms.push(normal_lpdf_sum(tape, raw, 0.0, 1.0));
                        eq.units = raw.iter().map(|&r| sigma * r).collect();
                    }
                    eq.sigma = Some(sigma);
                }
            }
            Effects::Bym2 { theta, phi, varphi, tau, adj, kappa } => {
                let th = &x[*theta..*theta + n];
                let ph = &x[*phi..*phi + n];
                terms.push(normal_lpdf_sum(tape, th, 0.0, 1.0));
                terms.push(icar_lpdf(tape, ph, adj, kappa.sqrt(), SOFT_CONSTRAINT_VARIANCE));
                let v = x[*varphi].inv_logit();
                terms.push(beta_lpdf(v, VARPHI_A, VARPHI_A));
                terms.push(v.ln() + (1.0 - v).ln());
                let tau_v = x[*tau].exp();
                // prior on s = τ^{-1/2}; |ds/du| = s / 2 for u = log τ
                let sd = (x[*tau] * -0.5).exp();
                terms.push(half_t_lpdf(sd, HALF_T_NU, HALF_T_SCALE));
                terms.push(sd.ln() - std::f64::consts::LN_2);
                let a = (1.0 - v).sqrt();
                let b = v.sqrt();
                eqs[0].units = th
                    .iter()
                    .zip(ph)
                    .map(|(&t_i, &p_i)| sd * (a * t_i + b * p_i))
                    .collect();
                extra.push(v);
                extra.push(tau_v);
                extra.extend_from_slice(th);
                extra.extend_from_slice(ph);
            }
            Effects::Correlated { sigma, z, corr } => {
                let k = eqs.len();
                let sig: Vec<Var<'t>> = (0..k).map(|j| x[sigma + j].exp()).collect();
                for j in 0..k {
                    terms.push(half_t_lpdf(sig[j], HALF_T_NU, HALF_T_SCALE));
                    terms.push(x[sigma + j]);
                }
                let zs = &x[*z..*z + k * n];
                terms.push(normal_lpdf_sum(tape, zs, 0.0, 1.0));
                let (l, jac) = cholesky_corr(tape, &x[*corr..*corr + k * (k - 1) / 2], k);
                terms.push(jac);
                terms.push(lkj_corr_cholesky_lpdf(tape, &l, k, LKJ_ETA));
                for (j, eq) in eqs.iter_mut().enumerate() {
                    eq.units = (0..n)
                        .map(|i| {
                            let mut acc = l[j * k] * zs[i];
                            for m in 1..=j {
                                acc = acc + l[j * k + m] * zs[m * n + i];
                            }
                            sig[j] * acc
                        })
                        .collect();
                    eq.sigma = Some(sig[j]);
                }
                for a in 0..k {
                    for b in a + 1..k {
                        // (L Lᵀ)_{ab}
                        let mut r = l[a * k] * l[b * k];
                        for m in 1..=a {
                            r = r + l[a * k + m] * l[b * k + m];
                        }
                        extra.push(r);
                    }
                }
            }
        }

        for (d, eq) in self.equations.iter().zip(&eqs) {
            terms.push(nb_glm(tape, d, eq.alpha, &eq.coefs, &eq.delta, &eq.units, eq.zeta));
        }
        Forward { lp: tape.sum(&terms), eqs, extra }
    }

    /// Log density and gradient with a finiteness check.
    pub fn log_posterior(&self, x: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
        let mut g = vec![0.0; self.dim];
        let lp = self.log_density_grad(x, &mut g);
        if !lp.is_finite() {
            return Err(ModelError::NonFiniteDensity(format!("log density is {lp}")));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteDensity(format!(
                "gradient of `{}` is {}",
                self.unconstrained_names[i], g[i]
            )));
        }
        Ok((lp, g))
    }

    /// Expected counts and dispersion of every equation at a constrained
    /// parameter vector (in [`LogDensity::param_names`] order).
    pub fn means(&self, constrained: &[f64]) -> Vec<(Vec<f64>, f64)> {
        self.equations
            .iter()
            .zip(&self.out_pos)
            .map(|(d, o)| {
                let p = d.p();
                let eta = etas(
                    d,
                    constrained[o.alpha],
                    &constrained[o.coefs..o.coefs + p],
                    &constrained[o.delta..o.delta + 6],
                    &constrained[o.units..o.units + self.n_units],
                );
                let mu = eta.iter().zip(&d.offset).map(|(e, off)| (e + off).exp()).collect();
                (mu, constrained[o.zeta])
            })
            .collect()
    }

    /// Unconstrained point whose constrained image has the given named
    /// values for the regression coefficients, intercept, weekday effects
    /// and dispersion; everything else is zero.
    pub fn unconstrained_from_named(&self, values: &BTreeMap<String, f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (d, s) in self.equations.iter().zip(&self.slots) {
            let nm = &d.naming;
            let mut shift = 0.0;
            for (j, c) in d.covariates.iter().enumerate() {
                if let Some(v) = values.get(&c.name) {
                    x[s.coefs + j] = *v;
                    shift += v * d.xbar[j];
                }
            }
            if let Some(a) = values.get(&nm.name("alpha", None)) {
                x[s.alpha] = a + shift;
            }
            for (w, lab) in WEEKDAY_LABELS[1..].iter().enumerate() {
                if let Some(v) = values.get(&nm.name("delta", Some(lab))) {
                    x[s.delta + w] = *v;
                }
            }
            if let Some(z) = values.get(&nm.name("zeta", None)) {
                x[s.zeta] = z.ln();
            }
        }
        x
    }
}

impl LogDensity for PanelModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let tape = Tape::with_capacity(64 + 8 * self.dim, 128 + 16 * self.dim);
        let xs = tape.vars(x);
        let f = self.forward(&tape, &xs);
        let adj = tape.adjoints(f.lp);
        for (g, v) in grad.iter_mut().zip(&xs) {
            *g = adj[v.idx()];
        }
        f.lp.val()
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let tape = Tape::new();
        let xs = tape.vars(x);
        let f = self.forward(&tape, &xs);
        let bym2 = matches!(self.effects, Effects::Bym2 { .. });
        let mut out = Vec::with_capacity(self.names.len());
        for eq in &f.eqs {
            out.push(eq.alpha.val());
            out.extend(eq.coefs.iter().map(|v| v.val()));
            out.extend(eq.delta.iter().map(|v| v.val()));
            out.push(eq.zeta.val());
            if !bym2 {
                out.push(eq.sigma.map_or(f64::NAN, |s| s.val()));
            }
            out.extend(eq.units.iter().map(|v| v.val()));
        }
        out.extend(f.extra.iter().map(|v| v.val()));
        out
    }
}

/// Restricts a density to a subset of coordinates, holding the rest fixed.
pub struct FixedSubset<'a, D: LogDensity> {
    inner: &'a D,
    free: Vec<usize>,
    base: Vec<f64>,
}

impl<'a, D: LogDensity> FixedSubset<'a, D> {
    pub fn new(inner: &'a D, free: Vec<usize>, base: Vec<f64>) -> Self {
        assert_eq!(base.len(), inner.dim());
        Self { inner, free, base }
    }

    pub fn embed(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (&i, &v) in self.free.iter().zip(z) {
            x[i] = v;
        }
        x
    }
}

impl<D: LogDensity> LogDensity for FixedSubset<'_, D> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_density_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let x = self.embed(z);
        let mut g = vec![0.0; x.len()];
        let lp = self.inner.log_density_grad(&x, &mut g);
        for (o, &i) in grad.iter_mut().zip(&self.free) {
            *o = g[i];
        }
        lp
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.free.len()).map(|i| format!("x[{}]", i + 1)).collect()
    }
}

/// `η` of one canton-day from named constrained parameters; the offset
/// `log E_i` is not included.
pub fn linear_predictor(
    spec: &ModelSpec,
    params: &BTreeMap<String, f64>,
    panel: &PanelDataset,
    canton: CantonId,
    date: NaiveDate,
) -> Result<f64, ModelError> {
    let model = PanelModel::new(spec, panel)?;
    let d = &model.equations[0];
    let r = d
        .rows
        .iter()
        .position(|&(c, t)| c == canton && t == date)
        .ok_or_else(|| ModelError::MissingField(format!("row {canton} {date}")))?;
    let get = |name: &str| {
        params
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))
    };
    let nm = &d.naming;
    let mut eta = get(&nm.name("alpha", None))?;
    let unit_base = if model.kappa().is_some() { "upsilon" } else { "theta" };
    eta += get(&nm.name(unit_base, Some(canton.code())))?;
    let w = d.weekday[r] as usize;
    if w > 0 {
        eta += get(&nm.name("delta", Some(WEEKDAY_LABELS[w])))?;
    }
    for (c, xv) in d.covariates.iter().zip(d.row_x(r)) {
        eta += get(&c.name)? * xv;
    }
    Ok(eta)
}
