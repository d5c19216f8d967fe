//! SPH smoothing kernels.
//!
//! Density is estimated with the Poly6 kernel and constraint gradients use
//! the gradient of the Spiky kernel. Both vanish outside the support radius
//! `h`. The adjoint pass needs one derivative more than the forward pass, so
//! the Poly6 gradient and the Spiky Hessian are provided as well.

use std::f64::consts::PI;

use crate::math::{outer, Mat3, Vec3, DIST_FLOOR};

/// Precomputed kernel coefficients for a fixed support radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    h: f64,
    h2: f64,
    poly6_coef: f64,
    spiky_coef: f64,
}

impl Kernel {
    pub fn new(h: f64) -> Self {
        assert!(h > 0.0, "kernel radius must be positive");
        Self {
            h,
            h2: h * h,
            poly6_coef: 315.0 / (64.0 * PI * h.powi(9)),
            spiky_coef: 45.0 / (PI * h.powi(6)),
        }
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.h
    }

    /// Poly6 density kernel `315/(64πh⁹)·(h²−|r|²)³`.
    #[inline]
    pub fn poly6(&self, r: &Vec3) -> f64 {
        let r2 = r.norm_squared();
        if r2 >= self.h2 {
            return 0.0;
        }
        let d = self.h2 - r2;
        self.poly6_coef * d * d * d
    }

    /// Gradient of [`Kernel::poly6`] with respect to `r`.
    #[inline]
    pub fn poly6_gradient(&self, r: &Vec3) -> Vec3 {
        let r2 = r.norm_squared();
        if r2 >= self.h2 {
            return Vec3::zeros();
        }
        let d = self.h2 - r2;
        r * (-6.0 * self.poly6_coef * d * d)
    }

    /// Gradient of the Spiky kernel, `−45/(πh⁶)·(h−|r|)²·r/|r|`.
    ///
    /// Points from `r` back toward the origin: the kernel decreases with
    /// distance. Zero outside the support and inside the distance floor.
    #[inline]
    pub fn spiky_gradient(&self, r: &Vec3) -> Vec3 {
        let s = r.norm();
        if s >= self.h || s < DIST_FLOOR {
            return Vec3::zeros();
        }
        let d = self.h - s;
        r * (-self.spiky_coef * d * d / s)
    }

    /// Jacobian of [`Kernel::spiky_gradient`] with respect to `r` (symmetric).
    pub fn spiky_hessian(&self, r: &Vec3) -> Mat3 {
        let s = r.norm();
        if s >= self.h || s < DIST_FLOOR {
            return Mat3::zeros();
        }
        let d = self.h - s;
        let n = r / s;
        // g(r) = φ(s) n with φ(s) = −c(h−s)², φ'(s) = 2c(h−s)
        let phi = -self.spiky_coef * d * d;
        let dphi = 2.0 * self.spiky_coef * d;
        let nn = outer(&n, &n);
        nn * dphi + (Mat3::identity() - nn) * (phi / s)
    }
}

/// Poly6 kernel value for a single evaluation.
pub fn poly6(r: &Vec3, h: f64) -> f64 {
    Kernel::new(h).poly6(r)
}

/// Spiky kernel gradient for a single evaluation.
pub fn spiky_gradient(r: &Vec3, h: f64) -> Vec3 {
    Kernel::new(h).spiky_gradient(r)
}
