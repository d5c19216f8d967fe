//! Suction curves and the quantities derived from them.

use serde::{Deserialize, Serialize};

use crate::math::Vec3;

/// Remaining fluid over time, normalized by the amount present when
/// suction starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuctionCurve {
    /// Step at which suction starts.
    pub t0: usize,
    /// `(step, fraction)`, steps strictly increasing from `t0`.
    pub samples: Vec<(usize, f64)>,
}

impl SuctionCurve {
    /// Curve from raw fractions, one per step starting at `t0`.
    pub fn from_fractions(t0: usize, fractions: &[f64]) -> Self {
        Self { t0, samples: fractions.iter().enumerate().map(|(k, &f)| (t0 + k, f)).collect() }
    }

    /// Last sampled step.
    pub fn tf(&self) -> usize {
        self.samples.last().map_or(self.t0, |s| s.0)
    }

    /// Fraction at the last sample.
    pub fn residual(&self) -> f64 {
        self.samples.last().map_or(1.0, |s| s.1)
    }

    pub fn fraction_at(&self, step: usize) -> Option<f64> {
        self.samples.iter().find(|s| s.0 == step).map(|s| s.1)
    }

    /// `step,fraction` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,fraction\n");
        for (s, f) in &self.samples {
            out.push_str(&format!("{s},{f}\n"));
        }
        out
    }
}

/// Builds the curve from per-step counts of particles below the goal,
/// `counts[k]` taken at step `t0 + k`. The reference volume is `counts[0]`;
/// with nothing to remove at `t0` every fraction is 0.
pub fn record_curve(t0: usize, counts: &[usize]) -> SuctionCurve {
    let reference = counts.first().copied().unwrap_or(0);
    let fractions: Vec<f64> =
        counts.iter().map(|&n| if reference == 0 { 0.0 } else { n as f64 / reference as f64 }).collect();
    SuctionCurve::from_fractions(t0, &fractions)
}

/// Steps after `t0` until the curve first drops to `(100 − p)%` of its
/// value at `t0`, or `None` if it never does.
pub fn convergence_time(curve: &SuctionCurve, percent: f64) -> Option<usize> {
    assert!(percent > 0.0 && percent < 100.0, "percent must lie in (0, 100)");
    let start = curve.samples.iter().find(|s| s.0 == curve.t0)?.1;
    let threshold = (100.0 - percent) / 100.0 * start;
    curve.samples.iter().find(|s| s.0 >= curve.t0 && s.1 <= threshold).map(|s| s.0 - curve.t0)
}

/// Summed length of the moves between consecutive nozzle positions (cm).
pub fn trajectory_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Outcome of one simulated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: String,
    pub seed: u64,
    /// SHA-256 of the resolved experiment configuration.
    pub config_hash: String,
    /// Fraction left at the last step.
    pub residual: f64,
    pub tau50: Option<usize>,
    pub tau60: Option<usize>,
    pub tau90: Option<usize>,
    /// Length of the executed nozzle path (cm).
    pub trajectory_length: f64,
    /// Particles below the goal at `t0`.
    pub reference_volume: usize,
    /// The emitter was still adding fluid after `t0`, so fractions may
    /// exceed 1 (bounded by 2 in practice).
    pub emission_ongoing: bool,
    /// Initial suction point chosen for the optimizer, if any.
    pub initial_point: Option<Vec3>,
    /// Largest move between consecutive executed nozzle positions (cm).
    pub max_step: f64,
    pub curve: SuctionCurve,
}

impl RunResult {
    pub fn new(
        policy: &str,
        seed: u64,
        config_hash: String,
        curve: SuctionCurve,
        reference_volume: usize,
        trajectory: &[Vec3],
        emission_ongoing: bool,
    ) -> Self {
        let max_step = trajectory.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
        Self {
            policy: policy.to_string(),
            seed,
            config_hash,
            residual: curve.residual(),
            tau50: convergence_time(&curve, 50.0),
            tau60: convergence_time(&curve, 60.0),
            tau90: convergence_time(&curve, 90.0),
            trajectory_length: trajectory_length(trajectory),
            reference_volume,
            emission_ongoing,
            initial_point: None,
            max_step,
            curve,
        }
    }
}

/// `step,x,y,z` CSV of executed nozzle positions.
pub fn trajectory_csv(t0: usize, points: &[Vec3]) -> String {
    let mut out = String::from("step,x,y,z\n");
    for (k, p) in points.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", t0 + k, p.x, p.y, p.z));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_examples() {
        let c = SuctionCurve::from_fractions(0, &[1.0, 0.9, 0.6, 0.45, 0.2]);
        assert_eq!(convergence_time(&c, 50.0), Some(3));
        let flat = SuctionCurve::from_fractions(0, &[1.0, 0.9, 0.8]);
        assert_eq!(convergence_time(&flat, 50.0), None);
        let late = SuctionCurve::from_fractions(200, &[0.4, 0.3, 0.25, 0.2]);
        assert_eq!(convergence_time(&late, 50.0), Some(3));
    }

    #[test]
    fn curve_from_counts() {
        let c = record_curve(10, &[4, 4, 2, 0, 0]);
        assert_eq!(c.samples[0], (10, 1.0));
        assert_eq!(c.residual(), 0.0);
        assert_eq!(c.tf(), 14);
        assert_eq!(c.fraction_at(12), Some(0.5));
        let constant = record_curve(0, &[7; 6]);
        assert!(constant.samples.iter().all(|s| s.1 == 1.0));
        assert_eq!(c.to_csv().lines().next(), Some("step,fraction"));
    }

    #[test]
    fn lengths() {
        assert_eq!(trajectory_length(&[Vec3::new(1.0, 1.0, 1.0); 4]), 0.0);
        let line: Vec<Vec3> = [0.0, 0.1, 0.5, 0.5, 1.0].iter().map(|t| Vec3::new(3.0, 0.0, 4.0) * *t).collect();
        assert!((trajectory_length(&line) - 5.0).abs() < 1e-12);
        assert_eq!(trajectory_length(&[Vec3::zeros()]), 0.0);
    }
}
