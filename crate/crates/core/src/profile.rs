//! Time-indexed environment truth that the emulated sensors sample.

use serde::{Deserialize, Serialize};

use crate::medium::SimTime;

/// A piecewise-linear curve over simulated time. Outside its knots the curve
/// holds the nearest end value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Curve {
    points: Vec<(SimTime, f64)>,
}

impl Curve {
    /// Knots must be strictly increasing in time.
    pub fn new(points: Vec<(SimTime, f64)>) -> Option<Self> {
        if points.is_empty() || points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return None;
        }
        Some(Curve { points })
    }

    pub fn constant(value: f64) -> Self {
        Curve {
            points: vec![(0, value)],
        }
    }

    pub fn points(&self) -> &[(SimTime, f64)] {
        &self.points
    }

    pub fn value_at(&self, t: SimTime) -> f64 {
        let idx = self.points.partition_point(|(pt, _)| *pt <= t);
        if idx == 0 {
            return self.points[0].1;
        }
        if idx == self.points.len() {
            return self.points[idx - 1].1;
        }
        let (t0, v0) = self.points[idx - 1];
        let (t1, v1) = self.points[idx];
        let frac = (t - t0) as f64 / (t1 - t0) as f64;
        v0 + (v1 - v0) * frac
    }
}

/// Interval `[start, end)` during which a flame is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlameWindow {
    pub start: SimTime,
    pub end: SimTime,
    pub peak: u16,
}

impl FlameWindow {
    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProfile {
    pub flame_windows: Vec<FlameWindow>,
    pub soil_curve: Curve,
    pub temp_curve: Curve,
    pub humidity_curve: Curve,
    /// First instant of the sampling grid.
    pub first_sample: SimTime,
    pub sample_interval: SimTime,
    /// Inclusive `[start, end]`.
    pub run_window: (SimTime, SimTime),
    /// Soil resistance threshold for the probe's digital output, if modeled.
    pub soil_threshold: Option<u16>,
}

impl ScenarioProfile {
    pub fn in_window(&self, t: SimTime) -> bool {
        self.run_window.0 <= t && t <= self.run_window.1
    }

    pub fn is_sample_instant(&self, t: SimTime) -> bool {
        t >= self.first_sample
            && t <= self.run_window.1
            && (t - self.first_sample) % self.sample_interval == 0
    }

    /// Every grid instant in the run window, ascending.
    pub fn sample_instants(&self) -> Vec<SimTime> {
        let mut out = Vec::new();
        let mut t = self.first_sample;
        while t <= self.run_window.1 {
            out.push(t);
            t += self.sample_interval;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_hits_knots_and_midpoints() {
        let c = Curve::new(vec![(0, 10.0), (100, 20.0), (200, 0.0)]).unwrap();
        assert_eq!(c.value_at(0), 10.0);
        assert_eq!(c.value_at(50), 15.0);
        assert_eq!(c.value_at(100), 20.0);
        assert_eq!(c.value_at(150), 10.0);
        assert_eq!(c.value_at(500), 0.0);
    }

    #[test]
    fn unsorted_knots_rejected() {
        assert!(Curve::new(vec![(10, 1.0), (10, 2.0)]).is_none());
        assert!(Curve::new(vec![]).is_none());
    }

    #[test]
    fn grid() {
        let p = ScenarioProfile {
            flame_windows: vec![],
            soil_curve: Curve::constant(0.0),
            temp_curve: Curve::constant(0.0),
            humidity_curve: Curve::constant(0.0),
            first_sample: 30,
            sample_interval: 30,
            run_window: (0, 270),
            soil_threshold: None,
        };
        assert_eq!(p.sample_instants().len(), 9);
        assert!(p.is_sample_instant(60));
        assert!(!p.is_sample_instant(0));
        assert!(!p.is_sample_instant(61));
        assert!(!p.is_sample_instant(300));
    }
}
