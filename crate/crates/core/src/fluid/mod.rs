//! Forward position-based fluid simulation.

pub mod boundary;
pub mod emission;
pub mod kernel;
pub mod neighbors;
pub mod params;
pub mod particles;
pub mod solver;
pub mod step;

pub use boundary::{Aabb, Boundary};
pub use emission::{emit_particles, EmissionSpec};
pub use kernel::{poly6, spiky_gradient, Kernel};
pub use neighbors::{build_neighbors, NeighborTable};
pub use params::FluidParams;
pub use particles::{deactivate_lifted, ParticleSystem};
pub use solver::{compute_lambda, density_pass, scorr, solve_density_constraint};
pub use step::{step, StepEnv};
