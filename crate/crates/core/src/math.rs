//! Small vector helpers shared by the solver, the suction field and the
//! adjoint code.

use nalgebra::{Matrix3, Vector3};

/// A 3-vector in simulation units (centimeters, or cm/s for velocities).
pub type Vec3 = Vector3<f64>;

/// A 3x3 matrix, used for kernel and field Jacobians.
pub type Mat3 = Matrix3<f64>;

/// Distances below this (cm) are treated as coincident points.
///
/// Shared by the Spiky gradient and the attraction field so that both
/// singularities are removed the same way.
pub const DIST_FLOOR: f64 = 1e-6;

/// Unit vector of the vertical axis.
pub fn y_axis() -> Vec3 {
    Vec3::new(0.0, 1.0, 0.0)
}

pub(crate) fn is_finite(v: &Vec3) -> bool {
    v.x.is_finite() && v.y.is_finite() && v.z.is_finite()
}

/// Outer product `a bᵀ`.
pub(crate) fn outer(a: &Vec3, b: &Vec3) -> Mat3 {
    a * b.transpose()
}
