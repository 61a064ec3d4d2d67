//! Position of a ping within its antenna's coverage: a delay-marginalized
//! Gaussian radius and a multinomial angle around the azimuth.

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::geometry::Point;
use super::{Antenna, Ping};

/// Radius given a signal delay is Gaussian around `base + delay`; the
/// delay follows an empirical distribution of `(extra metres, weight)`.
/// Negative radii are excluded (the Gaussian is truncated at 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusModel {
    pub base: f64,
    pub sd: f64,
    pub delays: Vec<(f64, f64)>,
}

impl Default for RadiusModel {
    fn default() -> Self {
        Self { base: 90.0, sd: 40.0, delays: vec![(0.0, 0.5), (40.0, 0.3), (80.0, 0.2)] }
    }
}

impl RadiusModel {
    fn weights(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let total: f64 = self.delays.iter().map(|d| d.1).sum();
        self.delays.iter().map(move |&(d, w)| (self.base + d, w / total))
    }

    /// `E[R]`, marginal over delays.
    pub fn mean(&self) -> f64 {
        if self.sd == 0.0 {
            return self.weights().map(|(m, w)| w * m.max(0.0)).sum();
        }
        let z = Normal::standard();
        self.weights()
            .map(|(m, w)| {
                let a = m / self.sd;
                w * (m + self.sd * z.pdf(a) / z.cdf(a))
            })
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut mu = self.base;
        for (m, w) in self.weights() {
            mu = m;
            acc += w;
            if u < acc {
                break;
            }
        }
        if self.sd == 0.0 {
            return mu.max(0.0);
        }
        let n = NormalDist::new(mu, self.sd).expect("positive sd");
        loop {
            let r = n.sample(rng);
            if r >= 0.0 {
                return r;
            }
        }
    }
}

/// Angle offsets from the azimuth: `weights.len()` equal bins across the
/// beam, each represented by its centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleModel {
    pub weights: Vec<f64>,
}

impl Default for AngleModel {
    fn default() -> Self {
        Self { weights: vec![1.0, 2.0, 3.0, 2.0, 1.0] }
    }
}

impl AngleModel {
    /// `(offset, probability)` per bin for a beam of the given width.
    pub fn bins(&self, beam_width: f64) -> Vec<(f64, f64)> {
        let k = self.weights.len() as f64;
        let total: f64 = self.weights.iter().sum();
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| (((i as f64 + 0.5) / k - 0.5) * beam_width, w / total))
            .collect()
    }

    /// `E[(cos Θ, sin Θ)]` relative to the azimuth.
    pub fn mean_direction(&self, beam_width: f64) -> (f64, f64) {
        self.bins(beam_width).iter().fold((0.0, 0.0), |(c, s), (a, p)| (c + p * a.cos(), s + p * a.sin()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, beam_width: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let bins = self.bins(beam_width);
        let mut acc = 0.0;
        for &(a, p) in &bins {
            acc += p;
            if u < acc {
                return a;
            }
        }
        bins.last().expect("at least one bin").0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositioningMode {
    /// Posterior mean location (deterministic).
    #[default]
    Point,
    /// One draw from the location distribution.
    Sample,
}

/// Planar location of a ping at `antenna`.
pub fn estimate_position<R: Rng + ?Sized>(
    antenna: &Antenna,
    radius: &RadiusModel,
    angle: &AngleModel,
    mode: PositioningMode,
    rng: &mut R,
) -> Point {
    let o = antenna.location;
    match mode {
        PositioningMode::Point => {
            let r = radius.mean();
            let (c, s) = angle.mean_direction(antenna.beam_width);
            let (ca, sa) = (antenna.azimuth.cos(), antenna.azimuth.sin());
            Point::new(o.x + r * (c * ca - s * sa), o.y + r * (c * sa + s * ca))
        }
        PositioningMode::Sample => {
            let a = antenna.azimuth + angle.sample(antenna.beam_width, rng);
            let r = radius.sample(rng);
            Point::new(o.x + r * a.cos(), o.y + r * a.sin())
        }
    }
}

/// Bouncing suppression by hysteresis: the serving antenna only changes
/// once a device is seen at the new antenna on two consecutive pings.
/// Suppressed pings are reassigned to the current antenna.
pub fn suppress_bouncing(pings: &[Ping]) -> Vec<Ping> {
    let mut out = Vec::with_capacity(pings.len());
    let Some(first) = pings.first() else { return out };
    let mut current = first.antenna;
    for (i, p) in pings.iter().enumerate() {
        if p.antenna != current && pings.get(i + 1).is_some_and(|n| n.antenna == p.antenna) {
            current = p.antenna;
        }
        out.push(Ping { antenna: current, ..*p });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telecom::AntennaKind;
    use rand::SeedableRng;

    fn antenna(azimuth: f64, beam: f64) -> Antenna {
        Antenna { id: 1, location: Point::new(100.0, 200.0), azimuth, beam_width: beam, kind: AntennaKind::Lte }
    }

    #[test]
    fn degenerate_model_lands_on_the_azimuth() {
        let r = RadiusModel { base: 150.0, sd: 0.0, delays: vec![(0.0, 1.0)] };
        let a = AngleModel { weights: vec![1.0] };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let az = 0.7;
        for mode in [PositioningMode::Point, PositioningMode::Sample] {
            let p = estimate_position(&antenna(az, 2.0), &r, &a, mode, &mut rng);
            assert!((p.x - (100.0 + 150.0 * az.cos())).abs() < 1e-9);
            assert!((p.y - (200.0 + 150.0 * az.sin())).abs() < 1e-9);
        }
    }

    #[test]
    fn hysteresis_drops_single_bounces() {
        let ids = [1, 1, 2, 1, 1, 3, 3, 3, 4];
        let pings: Vec<Ping> =
            ids.iter().enumerate().map(|(i, &a)| Ping { device: 0, timestamp: i as i64, antenna: a }).collect();
        let got: Vec<u32> = suppress_bouncing(&pings).iter().map(|p| p.antenna).collect();
        assert_eq!(got, vec![1, 1, 1, 1, 1, 3, 3, 3, 3]);
    }

    #[test]
    fn truncated_mean_exceeds_base_when_sd_is_wide() {
        let r = RadiusModel { base: 10.0, sd: 50.0, delays: vec![(0.0, 1.0)] };
        assert!(r.mean() > 10.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| r.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - r.mean()).abs() < 0.5, "{m} vs {}", r.mean());
    }
}
