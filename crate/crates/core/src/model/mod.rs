//! Negative-binomial panel regressions compiled to differentiable log
//! posteriors: the mobility model, the cases model on lagged mobility, the
//! mediation structural equations, and their spatial and multivariate
//! extensions.

mod design;
mod effects;
mod likelihood;
mod posterior;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::ln_gamma;
use crate::panel::{MobilityVar, PanelError};

pub use design::{Covariate, Design, Naming, Prior};
pub use effects::{EffectSummary, format_effect, percent_change, summarize_effect, transform_effects};
pub use likelihood::{nb_log_pmf, nb_sample};
pub use posterior::{linear_predictor, EffectStructure, FixedSubset, PanelModel, Transform};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("missing field `{0}` for this row")]
    MissingField(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite log density: {0}")]
    NonFiniteDensity(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("draws do not match the model: {0}")]
    SpecMismatch(String),
    #[error("spatial structure: {0}")]
    Spatial(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mobility,
    Cases,
    MediationMediator,
    MediationOutcome,
    /// Mediator and outcome estimated jointly with correlated canton effects.
    Mediation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSpec {
    /// Weekday effects and `log z`.
    #[default]
    LogTrend,
    /// Weekday effects, `q` and `q²`.
    LinearQuadratic,
    /// Weekday effects, `log z`, and one fixed effect per ISO week.
    LogTrendPlusWeekFE,
}

impl TimeSpec {
    pub fn name(self) -> &'static str {
        match self {
            TimeSpec::LogTrend => "log_trend",
            TimeSpec::LinearQuadratic => "linear_quadratic",
            TimeSpec::LogTrendPlusWeekFE => "log_trend_week_fe",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Extensions {
    pub spatial_bym2: bool,
    pub joint_multivariate: bool,
    pub tests_control: bool,
    /// Policy × mobility interaction terms in the outcome equation.
    pub interaction: bool,
}

/// Declarative description of one regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// One variable, or several for the joint multivariate model.
    pub variables: Vec<MobilityVar>,
    pub lag: Option<u32>,
    #[serde(default)]
    pub time_spec: TimeSpec,
    #[serde(default)]
    pub extensions: Extensions,
    /// Centered canton effects instead of the default non-centered form.
    #[serde(default)]
    pub centered: bool,
}

impl ModelSpec {
    pub fn mobility(k: MobilityVar) -> Self {
        Self {
            kind: ModelKind::Mobility,
            variables: vec![k],
            lag: None,
            time_spec: TimeSpec::LogTrend,
            extensions: Extensions::default(),
            centered: false,
        }
    }

    pub fn cases(k: MobilityVar, lag: u32) -> Self {
        Self {
            kind: ModelKind::Cases,
            lag: Some(lag),
            ..Self::mobility(k)
        }
    }

    pub fn mediation(k: MobilityVar, lag: u32) -> Self {
        Self {
            kind: ModelKind::Mediation,
            lag: Some(lag),
            ..Self::mobility(k)
        }
    }

    pub fn spatial(k: MobilityVar) -> Self {
        let mut s = Self::mobility(k);
        s.extensions.spatial_bym2 = true;
        s
    }

    pub fn joint(vars: &[MobilityVar]) -> Self {
        let mut s = Self::mobility(vars[0]);
        s.variables = vars.to_vec();
        s.extensions.joint_multivariate = true;
        s
    }

    pub fn with_time_spec(mut self, t: TimeSpec) -> Self {
        self.time_spec = t;
        self
    }

    pub fn variable(&self) -> MobilityVar {
        self.variables[0]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        let needs_lag = !matches!(self.kind, ModelKind::Mobility);
        match (needs_lag, self.lag) {
            (true, None) => return bad("this model kind requires a lag"),
            (true, Some(s)) if !crate::reference::LAGS.contains(&s) => {
                return bad("lag must lie in 7..=13")
            }
            (false, Some(_)) => return bad("the mobility model takes no lag"),
            _ => {}
        }
        if self.variables.is_empty() {
            return bad("no mobility variable given");
        }
        let mut seen = self.variables.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variables.len() {
            return bad("duplicate mobility variable");
        }
        let ext = self.extensions;
        if ext.joint_multivariate {
            if self.kind != ModelKind::Mobility {
                return bad("the joint multivariate extension applies to the mobility model");
            }
            if self.variables.len() < 2 {
                return bad("the joint model needs at least two mobility variables");
            }
        } else if self.variables.len() != 1 {
            return bad("only a single mobility variable may enter one regression");
        }
        if ext.spatial_bym2 && (self.kind != ModelKind::Mobility || ext.joint_multivariate) {
            return bad("the BYM2 extension applies to the single-equation mobility model");
        }
        if ext.tests_control && self.kind != ModelKind::Cases {
            return bad("the tests control applies to the cases model only");
        }
        if ext.interaction && self.kind != ModelKind::MediationOutcome {
            return bad("interaction terms apply to the outcome equation only");
        }
        if self.centered && (ext.spatial_bym2 || ext.joint_multivariate || self.kind == ModelKind::Mediation) {
            return bad("the centered form is available for independent canton effects only");
        }
        Ok(())
    }

    /// Warm-up and sampling iterations the model needs by default.
    pub fn default_iterations(&self) -> (usize, usize) {
        match self.time_spec {
            TimeSpec::LinearQuadratic => (3000, 3000),
            _ => (2000, 2000),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ModelKind::Mobility => "mobility",
            ModelKind::Cases => "cases",
            ModelKind::MediationMediator => "mediator",
            ModelKind::MediationOutcome => "outcome",
            ModelKind::Mediation => "mediation",
        };
        let vars: Vec<&str> = self.variables.iter().map(|v| v.name()).collect();
        write!(f, "{kind}[{}]", vars.join("+"))?;
        if let Some(s) = self.lag {
            write!(f, " lag {s}")?;
        }
        write!(f, " {}", self.time_spec.name())?;
        let e = self.extensions;
        for (on, name) in [
            (e.spatial_bym2, "bym2"),
            (e.joint_multivariate, "joint"),
            (e.tests_control, "tests"),
            (e.interaction, "interaction"),
            (self.centered, "centered"),
        ] {
            if on {
                write!(f, " +{name}")?;
            }
        }
        Ok(())
    }
}

/// `log Γ(y + 1)` for a count.
pub(crate) fn ln_factorial(y: u64) -> f64 {
    ln_gamma(y as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_and_variable_rules() {
        assert!(ModelSpec::mobility(MobilityVar::Total).validate().is_ok());
        assert!(ModelSpec::cases(MobilityVar::Total, 7).validate().is_ok());
        assert!(ModelSpec::cases(MobilityVar::Total, 14).validate().is_err());
        let mut two = ModelSpec::cases(MobilityVar::Total, 9);
        two.variables.push(MobilityVar::Train);
        assert!(matches!(two.validate(), Err(ModelError::InvalidSpec(_))));
        let mut tests = ModelSpec::mobility(MobilityVar::Total);
        tests.extensions.tests_control = true;
        assert!(tests.validate().is_err());
        assert!(ModelSpec::joint(&[MobilityVar::Total]).validate().is_err());
        assert!(ModelSpec::joint(&[MobilityVar::Commuter, MobilityVar::NonCommuter])
            .validate()
            .is_ok());
    }

    #[test]
    fn linear_quadratic_needs_longer_runs() {
        let s = ModelSpec::mobility(MobilityVar::Total).with_time_spec(TimeSpec::LinearQuadratic);
        assert_eq!(s.default_iterations(), (3000, 3000));
        assert_eq!(ModelSpec::mobility(MobilityVar::Total).default_iterations(), (2000, 2000));
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let mut s = ModelSpec::cases(MobilityVar::Road, 11);
        s.extensions.tests_control = true;
        let text = toml::to_string(&s).unwrap();
        let back: ModelSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
