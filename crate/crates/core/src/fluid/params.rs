use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use crate::error::ConfigError;
use crate::math::Vec3;

/// Solver constants for one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidParams {
    /// Time step (s).
    pub dt: f64,
    /// Kernel support radius `h` (cm).
    pub kernel_radius: f64,
    /// Rest density `ρ0` with unit particle mass. Calibrated from the scene's
    /// rest spacing by [`FluidParams::calibrate_rest_density`].
    pub rest_density: f64,
    pub solver_iterations: usize,
    /// Constraint-force-mixing relaxation added to the λ denominator.
    pub cfm_epsilon: f64,
    pub scorr_k: f64,
    pub scorr_n: i32,
    /// `Δq` as a fraction of `h`.
    pub scorr_dq_ratio: f64,
    /// External acceleration (cm/s²).
    pub gravity: Vec3,
    /// Distance kept between particles and walls (cm).
    pub boundary_margin: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            kernel_radius: 1.0,
            rest_density: 1.0,
            solver_iterations: 4,
            cfm_epsilon: 100.0,
            scorr_k: 0.1,
            scorr_n: 4,
            scorr_dq_ratio: 0.3,
            gravity: Vec3::new(0.0, -981.0, 0.0),
            boundary_margin: 0.01,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks: [(bool, &str); 7] = [
            (self.dt > 0.0, "fluid.dt must be > 0"),
            (self.kernel_radius > 0.0, "fluid.kernel_radius must be > 0"),
            (self.rest_density > 0.0, "fluid.rest_density must be > 0"),
            (self.solver_iterations >= 1, "fluid.solver_iterations must be >= 1"),
            (self.cfm_epsilon > 0.0, "fluid.cfm_epsilon must be > 0"),
            (
                self.scorr_dq_ratio > 0.0 && self.scorr_dq_ratio < 1.0,
                "fluid.scorr_dq_ratio must lie in (0, 1)",
            ),
            (self.boundary_margin >= 0.0, "fluid.boundary_margin must be >= 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(ConfigError::Invalid(msg.to_string()));
            }
        }
        let finite = [self.dt, self.kernel_radius, self.rest_density, self.cfm_epsilon, self.scorr_k]
            .iter()
            .all(|v| v.is_finite())
            && crate::math::is_finite(&self.gravity);
        if !finite {
            return Err(ConfigError::Invalid("fluid parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Kernel {
        Kernel::new(self.kernel_radius)
    }

    /// Density seen by a particle sitting on an infinite cubic lattice with
    /// the given spacing, self-contribution included.
    pub fn lattice_density(kernel_radius: f64, spacing: f64) -> f64 {
        let kernel = Kernel::new(kernel_radius);
        let reach = (kernel_radius / spacing).ceil() as i64;
        let mut rho = 0.0;
        for i in -reach..=reach {
            for j in -reach..=reach {
                for k in -reach..=reach {
                    let r = Vec3::new(i as f64, j as f64, k as f64) * spacing;
                    rho += kernel.poly6(&r);
                }
            }
        }
        rho
    }

    /// Sets `rest_density` to [`FluidParams::lattice_density`] at `spacing`.
    pub fn calibrate_rest_density(&mut self, spacing: f64) {
        self.rest_density = Self::lattice_density(self.kernel_radius, spacing);
    }
}
