//! A scene in motion: particles, emission and the step counter.

use crate::control::{sample_candidates, select_by, MpcConfig, MpcController, Selection};
use crate::fluid::boundary::Boundary;
use crate::fluid::emission::emit_particles;
use crate::fluid::params::FluidParams;
use crate::fluid::particles::ParticleSystem;
use crate::fluid::step::{step, StepEnv};
use crate::math::Vec3;
use crate::scenes::Scene;
use crate::suction::SuctionParams;

/// Running simulation of one scene.
///
/// Cloning gives an independent copy that continues identically, which is
/// how candidate suction points are evaluated.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub scene: Scene,
    /// Gravity comes from the scene and `rest_density` is calibrated from
    /// the scene's rest spacing.
    pub fluid: FluidParams,
    pub suction: SuctionParams,
    pub boundary: Boundary,
    pub seed: u64,
    /// Steps taken so far.
    pub step_index: u64,
    pub system: ParticleSystem,
}

impl Simulation {
    pub fn new(scene: Scene, mut fluid: FluidParams, suction: SuctionParams, seed: u64) -> crate::Result<Self> {
        scene.validate()?;
        fluid.gravity = scene.gravity;
        fluid.calibrate_rest_density(scene.rest_spacing);
        fluid.validate()?;
        suction.validate()?;
        let boundary = scene.boundary(fluid.boundary_margin);
        let system = ParticleSystem::with_capacity(scene.capacity);
        Ok(Self { scene, fluid, suction, boundary, seed, step_index: 0, system })
    }

    pub fn env(&self) -> StepEnv<'_> {
        StepEnv {
            fluid: &self.fluid,
            suction: &self.suction,
            boundary: &self.boundary,
            up: self.scene.up,
            y_goal: self.scene.y_goal,
        }
    }

    /// Emits this step's particles, then advances one step with the nozzle
    /// at `nozzle` (or no suction). Returns the number removed.
    pub fn advance(&mut self, nozzle: Option<Vec3>) -> crate::Result<usize> {
        emit_particles(&mut self.system, &self.scene.emission, self.seed, self.step_index);
        let env = StepEnv {
            fluid: &self.fluid,
            suction: &self.suction,
            boundary: &self.boundary,
            up: self.scene.up,
            y_goal: self.scene.y_goal,
        };
        let removed = step(&mut self.system, nozzle, &env, None)?;
        self.step_index += 1;
        Ok(removed)
    }

    /// Runs the scene's emission-only warm-up.
    pub fn warm_up(&mut self) -> crate::Result<()> {
        for _ in 0..self.scene.warmup_steps {
            self.advance(None)?;
        }
        Ok(())
    }

    /// Particles still below the removal height.
    pub fn remaining(&self) -> usize {
        self.system.count_below(self.scene.y_goal)
    }

    /// True once the emitter can add no more particles.
    pub fn emission_finished(&self) -> bool {
        self.system.len() >= self.system.capacity || self.scene.emission.rate == 0.0
    }
}

/// Chooses where suction starts.
///
/// Samples `cfg.samples` particle positions (seeded by `seed`), runs the
/// closed-loop controller from each for `cfg.lookahead` steps on a copy of
/// `sim` with `cfg.selection_grad_iterations` updates per step, and keeps
/// the start that leaves the fewest particles below the goal.
pub fn select_initial_point(sim: &Simulation, cfg: &MpcConfig, seed: u64) -> crate::Result<Selection> {
    let bounds = sim.scene.nozzle_bounds();
    let candidates = sample_candidates(&sim.system, cfg.samples, seed, &bounds);
    select_by(&candidates, |start| {
        let mut trial = sim.clone();
        let mut ctl = MpcController::new(*start, cfg.clone(), bounds);
        ctl.grad_iterations = cfg.selection_grad_iterations;
        for _ in 0..cfg.lookahead {
            let (u, _) = ctl.act(&trial.system, &trial.env())?;
            trial.advance(Some(u))?;
        }
        Ok(trial.remaining())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::preset;

    #[test]
    fn warm_up_fills_and_is_deterministic() {
        let mut scene = preset("case1").unwrap();
        scene.warmup_steps = 20;
        let mut a = Simulation::new(scene.clone(), FluidParams::default(), SuctionParams::default(), 3).unwrap();
        let mut b = a.clone();
        a.warm_up().unwrap();
        b.warm_up().unwrap();
        assert_eq!(a.system, b.system);
        assert_eq!(a.system.active_count(), 20 * scene.emission.rate as usize);
        assert_eq!(a.step_index, 20);
        for (p, _) in a.system.positions.iter().zip(&a.system.active) {
            assert!(a.boundary.is_admissible(p) || a.boundary.project(p) == *p);
        }
    }

    #[test]
    fn capacity_is_respected() {
        let mut scene = preset("case2").unwrap();
        scene.capacity = 10;
        let mut s = Simulation::new(scene, FluidParams::default(), SuctionParams::default(), 1).unwrap();
        for _ in 0..5 {
            s.advance(None).unwrap();
        }
        assert_eq!(s.system.len(), 10);
        assert!(s.emission_finished());
    }
}
