use serde::{Deserialize, Serialize};

use crate::math::Vec3;

/// Nozzle positions over a planning horizon, one per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTrajectory(pub Vec<Vec3>);

impl ControlTrajectory {
    pub fn constant(point: Vec3, horizon: usize) -> Self {
        Self(vec![point; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.0
    }

    /// Drops the first point and repeats the last, keeping the length.
    pub fn shifted(&self) -> Self {
        let mut v: Vec<Vec3> = self.0.iter().skip(1).copied().collect();
        if let Some(last) = self.0.last() {
            v.push(*last);
        }
        Self(v)
    }
}

/// Box the nozzle is confined to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NozzleBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl NozzleBounds {
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }
}

/// Limits the move from `current` to `proposed` to length `max_step`.
pub fn clamp_step(current: &Vec3, proposed: &Vec3, max_step: f64) -> Vec3 {
    let d = proposed - current;
    let n = d.norm();
    if n <= max_step {
        *proposed
    } else {
        current + d * (max_step / n)
    }
}

/// Divides every component by the largest absolute component over the
/// whole trajectory gradient. An all-zero gradient is returned unchanged.
pub fn normalize_gradient(gradient: &[Vec3]) -> Vec<Vec3> {
    let max = gradient.iter().flat_map(|g| g.iter()).fold(0.0f64, |m, c| m.max(c.abs()));
    if max == 0.0 {
        return gradient.to_vec();
    }
    gradient.iter().map(|g| g / max).collect()
}

/// Makes a trajectory feasible: every point inside `bounds` and every move,
/// starting from `current`, no longer than `max_step`.
pub fn project_trajectory(points: &mut [Vec3], current: &Vec3, max_step: f64, bounds: &NozzleBounds) {
    let mut prev = *current;
    for p in points.iter_mut() {
        *p = clamp_step(&prev, &bounds.clamp(p), max_step);
        prev = *p;
    }
}
