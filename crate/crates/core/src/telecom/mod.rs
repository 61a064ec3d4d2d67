//! From antenna pings to canton-day trip counts: ping simulation,
//! probabilistic positioning, trip segmentation, mode and purpose labels,
//! and aggregation.

pub mod geometry;
pub mod labels;
pub mod pipeline;
pub mod positioning;
pub mod scenario;
pub mod simulate;
pub mod trips;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{Point, Polygon, Polyline};
pub use labels::{classify_mode, classify_purpose, derive_home_work, label_trips, HomeWorkProfile, LabeledTrip};
pub use pipeline::{aggregate, comparison_weeks, policy_reduction, run_pipeline, weekly_reduction, PipelineOutput, PipelineSummary};
pub use positioning::{estimate_position, suppress_bouncing, AngleModel, PositioningMode, RadiusModel};
pub use scenario::{Scenario, ScenarioConfig};
pub use simulate::{simulate_device, simulate_pings, DeviceSimulation, PingLog, TrueTrip};
pub use trips::{extract_trips, postcode_day_counts, Trip};

/// Seconds in a day; timestamps count seconds from midnight of the
/// scenario's first day.
pub const DAY: i64 = 86_400;

/// Minimum dwell that makes a stay static.
pub const STATIC_SECONDS: i64 = 20 * 60;

#[derive(Debug, Error)]
pub enum TelecomError {
    #[error("scenario has no devices")]
    EmptyScenario,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown antenna {0}")]
    UnknownAntenna(u32),
    #[error("trace is not time-ordered at position {index}")]
    UnorderedTrace { index: usize },
    #[error("trace mixes devices {0} and {1}")]
    MixedTrace(u32, u32),
    #[error("need {needed} days of history, got {got}")]
    InsufficientHistory { needed: u32, got: u32 },
    #[error("postcode {0} maps to no canton")]
    UnmappedPostcode(String),
    #[error("no antenna covers ({x:.0}, {y:.0})")]
    NoCoverage { x: f64, y: f64 },
    #[error("scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AntennaKind {
    Gsm,
    Umts,
    Lte,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Antenna {
    pub id: u32,
    pub location: Point,
    /// Radians, counter-clockwise from the x axis.
    pub azimuth: f64,
    /// Radians in (0, 2π].
    pub beam_width: f64,
    pub kind: AntennaKind,
}

impl Antenna {
    /// Whether the beam covers the bearing towards `p`.
    pub fn covers(&self, p: Point) -> bool {
        if self.beam_width >= std::f64::consts::TAU - 1e-12 || p == self.location {
            return true;
        }
        geometry::angle_diff(self.location.bearing(p), self.azimuth).abs() <= 0.5 * self.beam_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ping {
    pub device: u32,
    pub timestamp: i64,
    pub antenna: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub device: u32,
    pub timestamp: i64,
    pub location: Point,
    /// Index into the scenario's postcode list.
    pub postcode: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Highway,
    Road,
}

impl Mode {
    /// Tie-break order: train before highway before road.
    pub const ALL: [Mode; 3] = [Mode::Train, Mode::Highway, Mode::Road];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Highway => "highway",
            Mode::Road => "road",
        }
    }

    /// Travel speed in m/s.
    pub fn speed(self) -> f64 {
        match self {
            Mode::Train => 30.0,
            Mode::Highway => 28.0,
            Mode::Road => 10.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = TelecomError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| TelecomError::InvalidScenario(format!("unknown mode `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Commuting,
    NonCommuting,
}

impl Purpose {
    pub fn name(self) -> &'static str {
        match self {
            Purpose::Commuting => "commuting",
            Purpose::NonCommuting => "non_commuting",
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
