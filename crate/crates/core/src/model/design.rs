use chrono::{Datelike, Duration, NaiveDate};

use super::{ln_factorial, ModelError, TimeSpec};
use crate::ad::Var;
use crate::math::{normal_lpdf, student_t_lpdf};
use crate::panel::{
    days_since_first_case, weekday_index, CantonId, Measure, MobilityVar, PanelDataset, PanelError,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    Normal { mu: f64, sd: f64 },
    StudentT { nu: f64, mu: f64, scale: f64 },
}

impl Prior {
    pub const fn normal(mu: f64, sd: f64) -> Self {
        Prior::Normal { mu, sd }
    }

    pub const fn student_t(nu: f64, mu: f64, scale: f64) -> Self {
        Prior::StudentT { nu, mu, scale }
    }

    pub fn lpdf<'t>(&self, x: Var<'t>) -> Var<'t> {
        match *self {
            Prior::Normal { mu, sd } => normal_lpdf(x, mu, sd),
            Prior::StudentT { nu, mu, scale } => student_t_lpdf(x, nu, mu, scale),
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Prior::Normal { sd, .. } => sd,
            Prior::StudentT { nu, scale, .. } if nu > 2.0 => scale * (nu / (nu - 2.0)).sqrt(),
            Prior::StudentT { scale, .. } => scale,
        }
    }
}

pub(crate) const BETA_PRIOR: Prior = Prior::normal(-0.25, 0.25);
pub(crate) const LAMBDA_PRIOR: Prior = Prior::normal(-0.25, 0.125);
pub(crate) const PSI_PRIOR: Prior = Prior::normal(0.5, 0.125);
pub(crate) const XI_PRIOR: Prior = Prior::normal(1.0, 1.0);
pub(crate) const GAMMA_PRIOR: Prior = Prior::normal(1.0, 1.0);
pub(crate) const BETWEEN_PRIOR: Prior = Prior::normal(0.0, 5.0);
pub(crate) const TESTS_PRIOR: Prior = Prior::normal(1.0, 1.0);
pub(crate) const TREND_PRIOR: Prior = Prior::normal(0.0, 1.0);
pub(crate) const WEEK_PRIOR: Prior = Prior::student_t(3.0, 0.0, 2.5);
pub(crate) const INTERACTION_PRIOR: Prior = Prior::normal(0.0, 1.0);
pub(crate) const ALPHA_PRIOR: Prior = Prior::student_t(3.0, 1.8, 2.5);
pub(crate) const DELTA_SD: f64 = 0.5;

/// How parameter names of one equation are decorated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Naming {
    /// `beta[2]`
    Plain,
    /// `beta_m[2]`
    Suffix(&'static str),
    /// `beta[total,2]`
    Label(String),
}

impl Naming {
    pub fn name(&self, base: &str, idx: Option<&str>) -> String {
        match (self, idx) {
            (Naming::Plain, None) => base.to_string(),
            (Naming::Plain, Some(i)) => format!("{base}[{i}]"),
            (Naming::Suffix(s), None) => format!("{base}{s}"),
            (Naming::Suffix(s), Some(i)) => format!("{base}{s}[{i}]"),
            (Naming::Label(l), None) => format!("{base}[{l}]"),
            (Naming::Label(l), Some(i)) => format!("{base}[{l},{i}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub prior: Prior,
}

/// Data of one NB regression equation in row-major form.
#[derive(Clone, Debug)]
pub struct Design {
    pub naming: Naming,
    pub y: Vec<u64>,
    pub ln_fact_y: Vec<f64>,
    /// `log E_i` per row.
    pub offset: Vec<f64>,
    pub unit: Vec<u32>,
    /// Monday = 0.
    pub weekday: Vec<u8>,
    /// Row-major `n × p` covariates.
    pub x: Vec<f64>,
    pub covariates: Vec<Covariate>,
    pub xbar: Vec<f64>,
    pub rows: Vec<(CantonId, NaiveDate)>,
    pub units: Vec<CantonId>,
}

struct Builder {
    naming: Naming,
    y: Vec<u64>,
    offset: Vec<f64>,
    unit: Vec<u32>,
    weekday: Vec<u8>,
    rows: Vec<(CantonId, NaiveDate)>,
    cols: Vec<(Covariate, Vec<f64>)>,
}

impl Builder {
    fn new(naming: Naming) -> Self {
        Self {
            naming,
            y: Vec::new(),
            offset: Vec::new(),
            unit: Vec::new(),
            weekday: Vec::new(),
            rows: Vec::new(),
            cols: Vec::new(),
        }
    }

    fn col(&mut self, base: &str, idx: Option<&str>, prior: Prior, values: Vec<f64>) {
        let name = self.naming.name(base, idx);
        self.cols.push((Covariate { name, prior }, values));
    }

    fn policy_cols(&mut self, base: &str, prior: Prior, dummies: &[[bool; 5]]) {
        for m in Measure::ALL {
            let v = dummies
                .iter()
                .map(|d| if d[m.index()] { 1.0 } else { 0.0 })
                .collect();
            self.col(base, Some(&(m.index() + 1).to_string()), prior, v);
        }
    }

    /// Time effects given `q` per row and the date indexing the time effect.
    fn time_cols(&mut self, spec: TimeSpec, q: &[u32], dates: &[NaiveDate]) {
        match spec {
            TimeSpec::LogTrend | TimeSpec::LogTrendPlusWeekFE => {
                let v = q.iter().map(|&q| ((q + 1) as f64).ln()).collect();
                self.col("gamma", None, GAMMA_PRIOR, v);
            }
            TimeSpec::LinearQuadratic => {
                self.col("trend", Some("1"), TREND_PRIOR, q.iter().map(|&q| q as f64).collect());
                let sq = q.iter().map(|&q| (q as f64) * (q as f64)).collect();
                self.col("trend", Some("2"), TREND_PRIOR, sq);
            }
        }
        if spec == TimeSpec::LogTrendPlusWeekFE {
            let mut weeks: Vec<(i32, u32)> = dates
                .iter()
                .map(|d| (d.iso_week().year(), d.iso_week().week()))
                .collect();
            weeks.sort();
            weeks.dedup();
            for (yr, wk) in weeks {
                let v = dates
                    .iter()
                    .map(|d| {
                        let w = d.iso_week();
                        if (w.year(), w.week()) == (yr, wk) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.col("week", Some(&format!("{yr}-W{wk:02}")), WEEK_PRIOR, v);
            }
        }
    }

    /// Per-unit mean of a column, broadcast back to rows.
    fn unit_means(&self, values: &[f64]) -> Vec<f64> {
        let n_units = self.unit.iter().copied().max().map_or(0, |m| m as usize + 1);
        let mut sum = vec![0.0; n_units];
        let mut cnt = vec![0usize; n_units];
        for (&u, v) in self.unit.iter().zip(values) {
            sum[u as usize] += v;
            cnt[u as usize] += 1;
        }
        self.unit
            .iter()
            .map(|&u| sum[u as usize] / cnt[u as usize] as f64)
            .collect()
    }

    fn finish(self, units: Vec<CantonId>) -> Result<Design, ModelError> {
        let n = self.y.len();
        if n == 0 {
            return Err(ModelError::InvalidSpec("the model window contains no rows".into()));
        }
        let p = self.cols.len();
        let mut x = vec![0.0; n * p];
        let mut xbar = vec![0.0; p];
        for (j, (_, col)) in self.cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                x[r * p + j] = *v;
            }
            xbar[j] = col.iter().sum::<f64>() / n as f64;
        }
        Ok(Design {
            naming: self.naming,
            ln_fact_y: self.y.iter().map(|&y| ln_factorial(y)).collect(),
            y: self.y,
            offset: self.offset,
            unit: self.unit,
            weekday: self.weekday,
            x,
            covariates: self.cols.into_iter().map(|(c, _)| c).collect(),
            xbar,
            rows: self.rows,
            units,
        })
    }
}

fn unit_of(panel: &PanelDataset, c: CantonId) -> u32 {
    panel.canton_position(c).expect("row canton belongs to the panel") as u32
}

fn lag_date(d: NaiveDate, s: u32) -> NaiveDate {
    d - Duration::days(s as i64)
}

impl Design {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn row_x(&self, r: usize) -> &[f64] {
        let p = self.p();
        &self.x[r * p..(r + 1) * p]
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    /// Mobility model: trips on the balanced mobility window.
    pub fn mobility(
        panel: &PanelDataset,
        k: MobilityVar,
        time: TimeSpec,
        naming: Naming,
    ) -> Result<Design, ModelError> {
        let mut b = Builder::new(naming);
        let mut dummies = Vec::new();
        let mut q = Vec::new();
        let mut dates = Vec::new();
        for r in panel.mobility_rows() {
            b.y.push(r.trips(k));
            b.offset.push(r.log_population);
            b.unit.push(unit_of(panel, r.canton));
            b.weekday.push(r.weekday_index() as u8);
            b.rows.push((r.canton, r.date));
            dummies.push(r.policy);
            q.push(r.q);
            dates.push(r.date);
        }
        b.policy_cols("beta", BETA_PRIOR, &dummies);
        b.time_cols(time, &q, &dates);
        let mz = panel.mundlak_z_mobility();
        let between = b.rows.iter().map(|(c, _)| mz[c]).collect();
        b.col("gamma_B", None, BETWEEN_PRIOR, between);
        b.finish(panel.cantons().to_vec())
    }

    /// Cases model: new cases on mobility lagged by `s` days.
    pub fn cases(
        panel: &PanelDataset,
        k: MobilityVar,
        s: u32,
        time: TimeSpec,
        tests_control: bool,
        naming: Naming,
    ) -> Result<Design, ModelError> {
        let lagged = panel.lagged_mobility(k, s)?;
        let mut b = Builder::new(naming);
        let mut q = Vec::new();
        let mut dates = Vec::new();
        let mut tests = Vec::new();
        for r in panel.cases_rows() {
            b.y.push(r.new_cases);
            b.offset.push(r.log_population);
            b.unit.push(unit_of(panel, r.canton));
            b.weekday.push(r.weekday_index() as u8);
            b.rows.push((r.canton, r.date));
            q.push(r.q);
            dates.push(r.date);
            if tests_control {
                let u = r
                    .est_tests
                    .ok_or_else(|| ModelError::MissingField(format!("est_tests ({} {})", r.canton, r.date)))?;
                tests.push(u.ln());
            }
        }
        b.col("xi", None, XI_PRIOR, lagged.values.clone());
        let xi_b = b.rows.iter().map(|(c, _)| lagged.canton_means[c]).collect();
        b.col("xi_B", None, BETWEEN_PRIOR, xi_b);
        b.time_cols(time, &q, &dates);
        let mz = panel.mundlak_z_cases();
        let between = b.rows.iter().map(|(c, _)| mz[c]).collect();
        b.col("gamma_B", None, BETWEEN_PRIOR, between);
        if tests_control {
            b.col("tests", None, TESTS_PRIOR, tests);
        }
        b.finish(panel.cantons().to_vec())
    }

    /// Mediator equation: trips on day `t − s` for every cases row `(i, t)`,
    /// with every time-varying regressor lagged.
    pub fn mediator(
        panel: &PanelDataset,
        k: MobilityVar,
        s: u32,
        naming: Naming,
    ) -> Result<Design, ModelError> {
        let mut b = Builder::new(naming);
        let mut dummies = Vec::new();
        let mut q = Vec::new();
        let mut dates = Vec::new();
        for r in panel.cases_rows() {
            let d = lag_date(r.date, s);
            let lagged = panel.row(r.canton, d).ok_or(PanelError::InsufficientHistory {
                canton: r.canton,
                date: r.date,
                lag: s,
            })?;
            b.y.push(lagged.trips(k));
            b.offset.push(r.log_population);
            b.unit.push(unit_of(panel, r.canton));
            b.weekday.push(weekday_index(d.weekday()) as u8);
            b.rows.push((r.canton, r.date));
            dummies.push(panel.schedule().dummies(r.canton, d));
            q.push(days_since_first_case(panel.first_case(r.canton), d).0);
            dates.push(d);
        }
        b.policy_cols("beta", BETA_PRIOR, &dummies);
        b.time_cols(TimeSpec::LogTrend, &q, &dates);
        let log_z: Vec<f64> = q.iter().map(|&q| ((q + 1) as f64).ln()).collect();
        let between = b.unit_means(&log_z);
        b.col("gamma_B", None, BETWEEN_PRIOR, between);
        b.finish(panel.cantons().to_vec())
    }

    /// Outcome equation: new cases on lagged mobility and lagged policies.
    pub fn outcome(
        panel: &PanelDataset,
        k: MobilityVar,
        s: u32,
        interaction: bool,
        naming: Naming,
    ) -> Result<Design, ModelError> {
        let lagged = panel.lagged_mobility(k, s)?;
        let mut b = Builder::new(naming);
        let mut dummies = Vec::new();
        let mut q = Vec::new();
        let mut dates = Vec::new();
        for r in panel.cases_rows() {
            b.y.push(r.new_cases);
            b.offset.push(r.log_population);
            b.unit.push(unit_of(panel, r.canton));
            b.weekday.push(r.weekday_index() as u8);
            b.rows.push((r.canton, r.date));
            dummies.push(panel.schedule().dummies(r.canton, lag_date(r.date, s)));
            q.push(r.q);
            dates.push(r.date);
        }
        b.policy_cols("lambda", LAMBDA_PRIOR, &dummies);
        b.col("psi", None, PSI_PRIOR, lagged.values.clone());
        let psi_b = b.rows.iter().map(|(c, _)| lagged.canton_means[c]).collect();
        b.col("psi_B", None, BETWEEN_PRIOR, psi_b);
        b.time_cols(TimeSpec::LogTrend, &q, &dates);
        let mz = panel.mundlak_z_cases();
        let between = b.rows.iter().map(|(c, _)| mz[c]).collect();
        b.col("gamma_B", None, BETWEEN_PRIOR, between);
        if interaction {
            let centre = crate::math::mean(&lagged.values);
            for m in Measure::ALL {
                let v = dummies
                    .iter()
                    .zip(&lagged.values)
                    .map(|(d, lm)| if d[m.index()] { lm - centre } else { 0.0 })
                    .collect();
                b.col("interaction", Some(&(m.index() + 1).to_string()), INTERACTION_PRIOR, v);
            }
        }
        b.finish(panel.cantons().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming_styles() {
        assert_eq!(Naming::Plain.name("beta", Some("2")), "beta[2]");
        assert_eq!(Naming::Suffix("_m").name("theta", Some("AG")), "theta_m[AG]");
        assert_eq!(Naming::Suffix("_y").name("zeta", None), "zeta_y");
        assert_eq!(Naming::Label("total".into()).name("beta", Some("1")), "beta[total,1]");
        assert_eq!(Naming::Label("train".into()).name("alpha", None), "alpha[train]");
    }

    #[test]
    fn student_t_prior_sd() {
        assert!((Prior::student_t(3.0, 0.0, 2.5).sd() - 2.5 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(Prior::normal(0.0, 0.5).sd(), 0.5);
    }
}
