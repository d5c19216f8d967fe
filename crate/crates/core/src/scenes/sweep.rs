use super::Scene;
use crate::fluid::emission::EmissionSpec;
use crate::math::Vec3;

/// Emission points generated around the cavity walls.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionSweep {
    pub emissions: Vec<EmissionSpec>,
    /// Candidate points dropped because they fell inside an obstacle.
    pub skipped: Vec<Vec3>,
}

/// Places emission points along the four side walls, each jetting along
/// the inward wall normal.
///
/// A wall of length `L` gets `n = max(1, ⌊L/spacing⌋)` points at
/// `(k + ½)·L/n`, so corners (where the normal is undefined) are never
/// used. Points sit just inside the wall at the scene's emission height;
/// rate, speed and jitter are copied from the scene's emission. Walls are
/// visited in the order z-min, x-max, z-max, x-min.
pub fn emission_sweep(scene: &Scene, spacing: f64) -> EmissionSweep {
    assert!(spacing > 0.0, "sweep spacing must be positive");
    let c = &scene.container;
    let base = &scene.emission;
    let y = base.point.y;
    let inset = base.jitter + 0.05;
    let lx = c.max.x - c.min.x;
    let lz = c.max.z - c.min.z;
    let count = |len: f64| ((len / spacing).floor() as usize).max(1);

    let mut candidates: Vec<(Vec3, Vec3)> = Vec::new();
    let nx = count(lx);
    for k in 0..nx {
        let x = c.min.x + (k as f64 + 0.5) * lx / nx as f64;
        candidates.push((Vec3::new(x, y, c.min.z + inset), Vec3::new(0.0, 0.0, 1.0)));
    }
    let nz = count(lz);
    for k in 0..nz {
        let z = c.min.z + (k as f64 + 0.5) * lz / nz as f64;
        candidates.push((Vec3::new(c.max.x - inset, y, z), Vec3::new(-1.0, 0.0, 0.0)));
    }
    for k in (0..nx).rev() {
        let x = c.min.x + (k as f64 + 0.5) * lx / nx as f64;
        candidates.push((Vec3::new(x, y, c.max.z - inset), Vec3::new(0.0, 0.0, -1.0)));
    }
    for k in (0..nz).rev() {
        let z = c.min.z + (k as f64 + 0.5) * lz / nz as f64;
        candidates.push((Vec3::new(c.min.x + inset, y, z), Vec3::new(1.0, 0.0, 0.0)));
    }

    let mut emissions = Vec::new();
    let mut skipped = Vec::new();
    for (point, direction) in candidates {
        let spec = EmissionSpec { point, direction, ..base.clone() };
        if scene.with_emission(spec.clone()).validate().is_ok() {
            emissions.push(spec);
        } else {
            skipped.push(point);
        }
    }
    EmissionSweep { emissions, skipped }
}
