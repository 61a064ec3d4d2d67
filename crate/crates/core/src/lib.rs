//! Policy effects on mobility and case growth, estimated with Bayesian
//! negative-binomial panel regressions on trip counts derived from
//! simulated telecom pings.

pub mod ad;
pub mod diagnostics;
pub mod extensions;
pub mod fit;
pub mod inference;
pub mod io;
pub mod math;
pub mod model;
pub mod panel;
pub mod reference;
pub mod synth;
pub mod telecom;

pub use inference::{sample, Draws, InferenceError, LogDensity, SamplerConfig};
pub use model::{ModelError, ModelKind, ModelSpec, PanelModel, TimeSpec};
pub use panel::{CantonId, Measure, MobilityVar, PanelDataset, PanelError, PanelRow, PolicySchedule};
