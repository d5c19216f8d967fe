//! Suction field of the nozzle.
//!
//! Two displacement fields act on every active particle once per solver
//! iteration: a lift along the scene's up direction shaped like a 2D
//! Gaussian density over the horizontal offset from the nozzle, and a pull
//! toward the nozzle that decays with the squared distance. Both are smooth
//! in the nozzle position, which is what the trajectory optimizer needs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::math::{outer, Mat3, Vec3, DIST_FLOOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuctionParams {
    /// Lift magnitude `K`.
    pub strength: f64,
    pub sigma_x: f64,
    pub sigma_z: f64,
    /// Softening `d` (cm²) bounding the pull near the nozzle.
    pub softening: f64,
    /// Distance below which the pull is switched off (cm).
    pub dist_floor: f64,
}

impl Default for SuctionParams {
    fn default() -> Self {
        Self {
            strength: 100.0,
            sigma_x: 0.5f64.sqrt(),
            sigma_z: 0.5f64.sqrt(),
            softening: 0.1,
            dist_floor: DIST_FLOOR,
        }
    }
}

impl SuctionParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.strength > 0.0
            && self.sigma_x > 0.0
            && self.sigma_z > 0.0
            && self.softening > 0.0
            && self.dist_floor >= 0.0
            && [self.strength, self.sigma_x, self.sigma_z, self.softening].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid(
                "suction: strength, sigma_x, sigma_z and softening must be finite and > 0".into(),
            ))
        }
    }

    /// Peak lift, reached directly below the nozzle.
    pub fn peak_lift(&self) -> f64 {
        self.strength / (2.0 * PI * self.sigma_x * self.sigma_z)
    }
}

/// Vertical lift `Δ_u` for a particle at `x` under a nozzle at `nozzle`.
#[inline]
pub fn upward_displacement(x: &Vec3, nozzle: &Vec3, params: &SuctionParams) -> f64 {
    let dx = x.x - nozzle.x;
    let dz = x.z - nozzle.z;
    let sx2 = params.sigma_x * params.sigma_x;
    let sz2 = params.sigma_z * params.sigma_z;
    let norm = ((2.0 * PI).powi(2) * sx2 * sz2).sqrt();
    params.strength * (-(dx * dx) / (2.0 * sx2) - (dz * dz) / (2.0 * sz2)).exp() / norm
}

/// `Δ_u` and its gradient with respect to the particle position. The
/// gradient with respect to the nozzle is the negation.
#[inline]
pub fn upward_displacement_grad(x: &Vec3, nozzle: &Vec3, params: &SuctionParams) -> (f64, Vec3) {
    let lift = upward_displacement(x, nozzle, params);
    let dx = x.x - nozzle.x;
    let dz = x.z - nozzle.z;
    let grad = Vec3::new(
        -lift * dx / (params.sigma_x * params.sigma_x),
        0.0,
        -lift * dz / (params.sigma_z * params.sigma_z),
    );
    (lift, grad)
}

/// Pull `Δ_p` toward the nozzle: unit direction times `1/(|x_e − x|² + d)`.
#[inline]
pub fn attraction_displacement(x: &Vec3, nozzle: &Vec3, params: &SuctionParams) -> Vec3 {
    let u = nozzle - x;
    let s = u.norm();
    if s < params.dist_floor {
        return Vec3::zeros();
    }
    u / (s * (s * s + params.softening))
}

/// Jacobian of [`attraction_displacement`] with respect to the nozzle
/// position (symmetric; the particle Jacobian is its negation).
#[inline]
pub fn attraction_jacobian(x: &Vec3, nozzle: &Vec3, params: &SuctionParams) -> Mat3 {
    let u = nozzle - x;
    let s = u.norm();
    if s < params.dist_floor {
        return Mat3::zeros();
    }
    let d = params.softening;
    // f(u) = u φ(s), φ = 1/(s³ + d s), φ' = −(3s² + d)/(s³ + d s)²
    let denom = s * s * s + d * s;
    let phi = 1.0 / denom;
    let dphi = -(3.0 * s * s + d) / (denom * denom);
    Mat3::identity() * phi + outer(&u, &u) * (dphi / s)
}

/// Total suction displacement `ŷ Δ_u + Δ_p` for one particle.
#[inline]
pub fn suction_displacement(x: &Vec3, nozzle: &Vec3, up: &Vec3, params: &SuctionParams) -> Vec3 {
    up * upward_displacement(x, nozzle, params) + attraction_displacement(x, nozzle, params)
}

/// Suction displacement for every slot; inactive slots get zero.
pub fn apply_suction(
    positions: &[Vec3],
    active: &[bool],
    nozzle: &Vec3,
    up: &Vec3,
    params: &SuctionParams,
) -> Vec<Vec3> {
    positions
        .iter()
        .zip(active)
        .map(|(x, &a)| if a { suction_displacement(x, nozzle, up, params) } else { Vec3::zeros() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::y_axis;
    use approx::assert_relative_eq;

    #[test]
    fn lift_peak_matches_gaussian_density() {
        let p = SuctionParams::default();
        let e = Vec3::new(1.0, 5.0, 2.0);
        let lift = upward_displacement(&Vec3::new(1.0, 0.3, 2.0), &e, &p);
        assert_relative_eq!(lift, 31.830_988_618_379_07, epsilon = 1e-12);
        assert_relative_eq!(lift, p.peak_lift(), epsilon = 1e-12);
    }

    #[test]
    fn lift_tail_and_height_independence() {
        let p = SuctionParams::default();
        let e = Vec3::zeros();
        let far = Vec3::new(100.0 * p.sigma_x, 0.0, 0.0);
        assert!(upward_displacement(&far, &e, &p) < 1e-100);
        let a = upward_displacement(&Vec3::new(0.6, 0.0, 0.8), &e, &p);
        let b = upward_displacement(&Vec3::new(0.6, 7.0, 0.8), &e, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn attraction_values() {
        let p = SuctionParams::default();
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(attraction_displacement(&x, &(x + Vec3::new(1e-7, 0.0, 0.0)), &p), Vec3::zeros());

        let d = attraction_displacement(&x, &(x + Vec3::new(0.0, 1.0, 0.0)), &p);
        assert_relative_eq!(d.norm(), 1.0 / 1.1, epsilon = 1e-12);
        assert_relative_eq!(d.normalize(), Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);

        let d = attraction_displacement(&x, &(x + Vec3::new(3.0, 0.0, 4.0)), &p);
        assert_relative_eq!(d.normalize(), Vec3::new(0.6, 0.0, 0.8), epsilon = 1e-12);
        assert_relative_eq!(d.norm(), 1.0 / 25.1, epsilon = 1e-12);
    }

    #[test]
    fn combined_displacement_under_nozzle() {
        let p = SuctionParams::default();
        let x = Vec3::new(2.0, 1.0, 2.0);
        let e = Vec3::new(2.0, 3.0, 2.0);
        let s = apply_suction(&[x, x], &[true, false], &e, &y_axis(), &p);
        let pull = attraction_displacement(&x, &e, &p);
        assert_relative_eq!(s[0].y, p.peak_lift() + pull.y, epsilon = 1e-12);
        assert_eq!(s[0].x, pull.x);
        assert_eq!(s[0].z, pull.z);
        assert_eq!(s[1], Vec3::zeros());

        let tiny = SuctionParams { strength: 1e-12, ..p.clone() };
        let s = suction_displacement(&x, &e, &y_axis(), &tiny);
        assert_relative_eq!(s, pull, epsilon = 1e-11);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = SuctionParams::default();
        let x = Vec3::new(0.3, 0.2, -0.4);
        let e = Vec3::new(0.9, 1.1, 0.2);
        let j = attraction_jacobian(&x, &e, &p);
        let (_, g) = upward_displacement_grad(&x, &e, &p);
        let h = 1e-6;
        for c in 0..3 {
            let mut ep = e;
            let mut em = e;
            ep[c] += h;
            em[c] -= h;
            let col = (attraction_displacement(&x, &ep, &p) - attraction_displacement(&x, &em, &p)) / (2.0 * h);
            assert_relative_eq!(j.column(c).into_owned(), col, epsilon = 1e-7);
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (upward_displacement(&xp, &e, &p) - upward_displacement(&xm, &e, &p)) / (2.0 * h);
            assert_relative_eq!(g[c], fd, epsilon = 1e-6);
        }
    }
}
