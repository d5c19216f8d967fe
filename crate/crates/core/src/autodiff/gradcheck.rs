//! Central finite differences of the rollout loss, used to verify the
//! reverse pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rollout::{backward, rollout, rollout_loss};
use crate::fluid::boundary::{Aabb, Boundary};
use crate::fluid::params::FluidParams;
use crate::fluid::particles::ParticleSystem;
use crate::fluid::step::StepEnv;
use crate::math::Vec3;
use crate::suction::SuctionParams;

/// Central-difference gradient of the summed loss with respect to every
/// control coordinate.
pub fn finite_difference_gradient(
    initial: &ParticleSystem,
    controls: &[Vec3],
    env: &StepEnv,
    delta: f64,
) -> crate::Result<Vec<Vec3>> {
    assert!(delta > 0.0, "finite-difference step must be positive");
    let mut grad = vec![Vec3::zeros(); controls.len()];
    for t in 0..controls.len() {
        for axis in 0..3 {
            grad[t][axis] = central_difference(initial, controls, env, t, axis, delta)?;
        }
    }
    Ok(grad)
}

fn perturbed(controls: &[Vec3], t: usize, axis: usize, by: f64) -> Vec<Vec3> {
    let mut c = controls.to_vec();
    c[t][axis] += by;
    c
}

fn central_difference(
    initial: &ParticleSystem,
    controls: &[Vec3],
    env: &StepEnv,
    t: usize,
    axis: usize,
    delta: f64,
) -> crate::Result<f64> {
    let (_, plus) = rollout_loss(initial, &perturbed(controls, t, axis, delta), env)?;
    let (_, minus) = rollout_loss(initial, &perturbed(controls, t, axis, -delta), env)?;
    Ok((plus - minus) / (2.0 * delta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    pub delta: f64,
    /// Each retry divides the step by 10.
    pub max_retries: usize,
    pub tolerance: f64,
    /// Floor of the relative-error denominator.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { delta: 1e-4, max_retries: 2, tolerance: 1e-3, abs_floor: 1e-8 }
    }
}

/// Error of one gradient coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateError {
    pub step: usize,
    pub axis: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    /// Step actually used after retries.
    pub delta: f64,
    /// True when every tried step crossed a non-smooth boundary; such
    /// coordinates are excluded from the maxima.
    pub crossed: bool,
}

/// Comparison of the reverse-pass gradient against finite differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub analytic: Vec<[f64; 3]>,
    pub finite_difference: Vec<[f64; 3]>,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub coordinates: Vec<CoordinateError>,
    /// `(step, axis)` of the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub loss: f64,
    pub tolerance: f64,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

/// Differentiates one rollout both ways and compares coordinate by
/// coordinate. When a perturbed rollout makes a different discrete choice
/// than the nominal one (see [`super::Recording::signature`]) the step is
/// shrunk and retried.
pub fn gradient_check(
    initial: &ParticleSystem,
    controls: &[Vec3],
    env: &StepEnv,
    opts: &GradCheckOptions,
    adjoint_fault: Option<f64>,
) -> crate::Result<GradientReport> {
    let mut nominal = rollout(initial, controls, env)?;
    if let Some(f) = adjoint_fault {
        nominal.recording.tape_mut().set_adjoint_fault(f);
    }
    let signature = nominal.recording.signature();
    let loss = nominal.loss_value();
    let analytic = backward(&mut nominal.recording, nominal.loss)?;

    let mut fd = vec![Vec3::zeros(); controls.len()];
    let mut coordinates = Vec::new();
    for t in 0..controls.len() {
        for axis in 0..3 {
            let mut delta = opts.delta;
            let mut crossed = true;
            for attempt in 0..=opts.max_retries {
                if attempt > 0 {
                    delta /= 10.0;
                }
                let same = |by: f64| -> crate::Result<bool> {
                    Ok(rollout(initial, &perturbed(controls, t, axis, by), env)?.recording.signature() == signature)
                };
                if same(delta)? && same(-delta)? {
                    crossed = false;
                    break;
                }
            }
            let value = central_difference(initial, controls, env, t, axis, delta)?;
            fd[t][axis] = value;
            let a = analytic[t][axis];
            let abs_error = (a - value).abs();
            coordinates.push(CoordinateError {
                step: t,
                axis,
                analytic: a,
                finite_difference: value,
                abs_error,
                rel_error: abs_error / a.abs().max(opts.abs_floor),
                delta,
                crossed,
            });
        }
    }

    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut worst = None;
    for c in coordinates.iter().filter(|c| !c.crossed) {
        if c.rel_error > max_rel || worst.is_none() {
            max_rel = max_rel.max(c.rel_error);
            worst = Some((c.step, c.axis));
        }
        max_abs = max_abs.max(c.abs_error);
    }
    Ok(GradientReport {
        analytic: analytic.iter().map(|g| [g.x, g.y, g.z]).collect(),
        finite_difference: fd.iter().map(|g| [g.x, g.y, g.z]).collect(),
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        coordinates,
        worst,
        loss,
        tolerance: opts.tolerance,
    })
}

/// Small randomized scene for gradient checks: a jittered block of fluid
/// resting on the floor of a 6 cm box with one pillar, and a nozzle
/// wandering above it.
#[derive(Clone, Debug)]
pub struct ToyProblem {
    pub system: ParticleSystem,
    pub controls: Vec<Vec3>,
    pub fluid: FluidParams,
    pub suction: SuctionParams,
    pub boundary: Boundary,
    pub up: Vec3,
    pub y_goal: f64,
}

impl ToyProblem {
    pub fn random(seed: u64, particles: usize, horizon: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spacing = 0.55;
        let mut fluid = FluidParams::default();
        fluid.calibrate_rest_density(spacing);
        let side = 6usize;
        let positions: Vec<Vec3> = (0..particles)
            .map(|k| {
                let (i, j, l) = (k % side, k / (side * side), (k / side) % side);
                let jitter = Vec3::new(rng.gen_range(-0.08..0.08), rng.gen_range(0.0..0.08), rng.gen_range(-0.08..0.08));
                Vec3::new(1.3 + i as f64 * spacing, 0.3 + j as f64 * spacing, 1.3 + l as f64 * spacing) + jitter
            })
            .collect();
        let mut system = ParticleSystem::from_positions(positions);
        for v in &mut system.velocities {
            *v = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        }
        let mut nozzle = Vec3::new(rng.gen_range(2.0..4.0), rng.gen_range(2.0..3.0), rng.gen_range(2.0..4.0));
        let controls = (0..horizon)
            .map(|_| {
                nozzle += Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.1..0.1), rng.gen_range(-0.3..0.3));
                nozzle
            })
            .collect();
        let boundary = Boundary {
            container: Aabb::new(Vec3::zeros(), Vec3::new(6.0, 12.0, 6.0)),
            obstacles: vec![Aabb::new(Vec3::new(4.6, 0.0, 4.6), Vec3::new(6.0, 3.0, 6.0))],
            margin: fluid.boundary_margin,
        };
        Self { system, controls, fluid, suction: SuctionParams::default(), boundary, up: Vec3::y(), y_goal: 10.0 }
    }

    pub fn env(&self) -> StepEnv<'_> {
        StepEnv { fluid: &self.fluid, suction: &self.suction, boundary: &self.boundary, up: self.up, y_goal: self.y_goal }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_problem_passes() {
        let p = ToyProblem::random(11, 24, 2);
        let r = gradient_check(&p.system, &p.controls, &p.env(), &GradCheckOptions::default(), None).unwrap();
        assert!(r.passed(), "max rel {} at {:?}", r.max_relative_error, r.worst);
        assert_eq!(r.coordinates.len(), 6);
    }

    #[test]
    fn corrupted_adjoint_is_caught() {
        let p = ToyProblem::random(11, 24, 2);
        let r = gradient_check(&p.system, &p.controls, &p.env(), &GradCheckOptions::default(), Some(1.5)).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn quadratic_toy_slope() {
        // one particle right under the nozzle, no gravity: only the lift acts
        let mut p = ToyProblem::random(0, 1, 1);
        p.fluid.gravity = Vec3::zeros();
        p.system.velocities[0] = Vec3::zeros();
        let x = p.system.positions[0];
        let e = Vec3::new(x.x + 0.3, 2.5, x.z - 0.2);
        let fd = finite_difference_gradient(&p.system, &[e], &p.env(), 1e-4).unwrap();
        let mut r = rollout(&p.system, &[e], &p.env()).unwrap();
        let g = backward(&mut r.recording, r.loss).unwrap();
        for a in 0..3 {
            assert!((g[0][a] - fd[0][a]).abs() <= 1e-6 * (1.0 + g[0][a].abs()), "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn constant_loss_gives_zero() {
        let mut p = ToyProblem::random(1, 5, 2);
        for x in &mut p.system.positions {
            x.y = 11.0;
        }
        let fd = finite_difference_gradient(&p.system, &p.controls, &p.env(), 1e-4).unwrap();
        assert!(fd.iter().all(|g| *g == Vec3::zeros()));
    }
}
