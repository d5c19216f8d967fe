//! Cavity walls as an axis-aligned container minus axis-aligned obstacles.
//!
//! The container has a floor and four side walls; its top is open so that
//! lifted fluid can leave through it. Projection moves a point to the
//! nearest location that keeps `margin` clearance from every wall.

use serde::{Deserialize, Serialize};

use crate::math::Vec3;

/// Axis-aligned box given by its min and max corners (cm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Strict interior test.
    pub fn contains_strict(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min[a] < self.max[a])
    }
}

/// Which coordinates a projection overwrote.
pub type ClampMask = [bool; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub container: Aabb,
    pub obstacles: Vec<Aabb>,
    pub margin: f64,
}

impl Boundary {
    /// Nearest admissible point to `q`.
    pub fn project(&self, q: &Vec3) -> Vec3 {
        self.project_masked(q).0
    }

    /// Nearest admissible point together with the coordinates that were
    /// clamped. The projection is the identity on unclamped coordinates and
    /// constant on clamped ones, which is what the adjoint pass relies on.
    pub fn project_masked(&self, q: &Vec3) -> (Vec3, ClampMask) {
        let m = self.margin;
        let lo = self.container.min.add_scalar(m);
        let hi = self.container.max.add_scalar(-m);
        let mut p = *q;
        let mut mask = [false; 3];
        for a in 0..3 {
            if p[a] < lo[a] {
                p[a] = lo[a];
                mask[a] = true;
            } else if a != 1 && p[a] > hi[a] {
                p[a] = hi[a];
                mask[a] = true;
            }
        }
        for ob in &self.obstacles {
            let omin = ob.min.add_scalar(-m);
            let omax = ob.max.add_scalar(m);
            if !(0..3).all(|a| p[a] > omin[a] && p[a] < omax[a]) {
                continue;
            }
            let mut best: Option<(f64, usize, f64)> = None;
            for a in 0..3 {
                for target in [omin[a], omax[a]] {
                    let admissible = target >= lo[a] && (a == 1 || target <= hi[a]);
                    if !admissible {
                        continue;
                    }
                    let dist = (p[a] - target).abs();
                    if best.map_or(true, |(d, _, _)| dist < d) {
                        best = Some((dist, a, target));
                    }
                }
            }
            if let Some((_, a, target)) = best {
                p[a] = target;
                mask[a] = true;
            }
        }
        (p, mask)
    }

    /// True when projection leaves `p` in place.
    pub fn is_admissible(&self, p: &Vec3) -> bool {
        self.project(p) == *p
    }

    /// Admissible and clear of every wall by more than the margin.
    pub fn is_strictly_inside(&self, p: &Vec3) -> bool {
        let m = self.margin;
        let lo = self.container.min.add_scalar(m);
        let hi = self.container.max.add_scalar(-m);
        let in_container = (0..3).all(|a| p[a] > lo[a] && (a == 1 || p[a] < hi[a]));
        in_container
            && self.obstacles.iter().all(|ob| {
                let omin = ob.min.add_scalar(-m);
                let omax = ob.max.add_scalar(m);
                !(0..3).all(|a| p[a] >= omin[a] && p[a] <= omax[a])
            })
    }
}
