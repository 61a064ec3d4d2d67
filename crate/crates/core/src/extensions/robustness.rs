//! Alternative time-effect specifications and the tests control, fitted
//! side by side with the main specifications.

use rayon::prelude::*;

use crate::fit::{run_model_with, FitError, FitOptions, FitReport};
use crate::inference::SamplerConfig;
use crate::model::{ModelSpec, TimeSpec};
use crate::panel::{MobilityVar, PanelDataset};

#[derive(Clone, Debug)]
pub struct RobustnessVariant {
    pub name: &'static str,
    pub report: FitReport,
}

/// The variant specs: main mobility, linear + quadratic trend, weekly fixed
/// effects, main cases at lag `s`, and the cases model with estimated tests.
pub fn robustness_specs(k: MobilityVar, s: u32) -> Vec<(&'static str, ModelSpec)> {
    let mut tests = ModelSpec::cases(k, s);
    tests.extensions.tests_control = true;
    vec![
        ("mobility", ModelSpec::mobility(k)),
        ("mobility_linear_quadratic", ModelSpec::mobility(k).with_time_spec(TimeSpec::LinearQuadratic)),
        ("mobility_week_fe", ModelSpec::mobility(k).with_time_spec(TimeSpec::LogTrendPlusWeekFE)),
        ("cases", ModelSpec::cases(k, s)),
        ("cases_tests_control", tests),
    ]
}

/// Fits every variant concurrently. `config` applies to all of them; the
/// longer default runs of the quadratic trend are the caller's choice.
pub fn robustness_suite(
    panel: &PanelDataset,
    k: MobilityVar,
    s: u32,
    config: &SamplerConfig,
) -> Result<Vec<RobustnessVariant>, FitError> {
    robustness_specs(k, s)
        .into_par_iter()
        .map(|(name, spec)| {
            let fit = run_model_with(&spec, panel, config, FitOptions { pareto: false })?;
            Ok(RobustnessVariant { name, report: fit.report })
        })
        .collect()
}
