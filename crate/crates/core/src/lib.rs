//! Differentiable position-based fluids with a suction field, and a
//! gradient-based model-predictive controller that moves a suction nozzle
//! to clear a cavity.
//!
//! * [`fluid`] steps the particle simulation.
//! * [`suction`] holds the lift and attraction fields of the nozzle.
//! * [`autodiff`] records rollouts on a tape and runs them backwards to get
//!   the loss gradient with respect to every nozzle position.
//! * [`control`] turns those gradients into nozzle trajectories and holds
//!   the hand-crafted baselines.
//! * [`scenes`], [`sim`], [`metrics`] and [`experiment`] set up, run and
//!   score experiments.
//!
//! Units are centimeters, seconds and unit particle mass.
//!
//! ```
//! use suction_mpc::{scenes::preset, sim::Simulation, fluid::FluidParams, suction::SuctionParams};
//!
//! let mut scene = preset("case1").unwrap();
//! scene.warmup_steps = 10;
//! let mut sim = Simulation::new(scene, FluidParams::default(), SuctionParams::default(), 7).unwrap();
//! sim.warm_up().unwrap();
//! let nozzle = sim.scene.emission_nozzle_point();
//! let before = sim.remaining();
//! for _ in 0..20 {
//!     sim.advance(Some(nozzle)).unwrap();
//! }
//! assert!(sim.remaining() < before + 20 * sim.scene.emission.rate as usize);
//! ```

pub mod autodiff;
pub mod control;
pub mod error;
pub mod experiment;
pub mod fluid;
pub mod math;
pub mod metrics;
pub mod scenes;
pub mod sim;
pub mod suction;

pub use error::{ConfigError, Error, Result, SimError, TapeError};
pub use math::Vec3;
