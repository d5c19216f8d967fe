//! One simulation step: external forces, prediction, constraint and suction
//! iterations with boundary projection, velocity update, then removal of
//! lifted particles.

use std::rc::Rc;

use super::boundary::{Boundary, ClampMask};
use super::neighbors::build_neighbors;
use super::params::FluidParams;
use super::particles::{deactivate_lifted, ParticleSystem};
use super::solver::density_pass;
use crate::autodiff::Recording;
use crate::error::SimError;
use crate::math::{is_finite, Vec3};
use crate::suction::{suction_displacement, SuctionParams};

/// Everything a step needs besides the particles and the nozzle.
#[derive(Clone, Copy, Debug)]
pub struct StepEnv<'a> {
    pub fluid: &'a FluidParams,
    pub suction: &'a SuctionParams,
    pub boundary: &'a Boundary,
    /// Unit direction of the suction lift.
    pub up: Vec3,
    /// Particles at or above this height are removed.
    pub y_goal: f64,
}

pub(crate) fn apply_gravity(v: &[Vec3], active: &[usize], fluid: &FluidParams) -> Vec<Vec3> {
    let mut out = v.to_vec();
    let dv = fluid.gravity * fluid.dt;
    for &i in active {
        out[i] = v[i] + dv;
    }
    out
}

pub(crate) fn predict(x: &[Vec3], v: &[Vec3], active: &[usize], dt: f64) -> Vec<Vec3> {
    let mut out = x.to_vec();
    for &i in active {
        out[i] = x[i] + v[i] * dt;
    }
    out
}

pub(crate) fn suction_pass(p: &[Vec3], active: &[usize], nozzle: &Vec3, env: &StepEnv) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); p.len()];
    for &i in active {
        out[i] = suction_displacement(&p[i], nozzle, &env.up, env.suction);
    }
    out
}

pub(crate) fn update_and_project(
    p: &[Vec3],
    dx: &[Vec3],
    s: Option<&[Vec3]>,
    active: &[usize],
    boundary: &Boundary,
) -> (Vec<Vec3>, Vec<ClampMask>) {
    let mut out = p.to_vec();
    let mut masks = vec![[false; 3]; p.len()];
    for &i in active {
        let q = match s {
            Some(s) => p[i] + dx[i] + s[i],
            None => p[i] + dx[i],
        };
        let (q, m) = boundary.project_masked(&q);
        out[i] = q;
        masks[i] = m;
    }
    (out, masks)
}

pub(crate) fn velocity_update(p: &[Vec3], x: &[Vec3], active: &[usize], dt: f64) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); p.len()];
    let inv_dt = 1.0 / dt;
    for &i in active {
        out[i] = (p[i] - x[i]) * inv_dt;
    }
    out
}

fn check_finite(
    values: &[Vec3],
    active: &[usize],
    stage: &'static str,
    iteration: Option<usize>,
) -> Result<(), SimError> {
    match active.iter().find(|&&i| !is_finite(&values[i])) {
        Some(&particle) => Err(SimError::NonFinite { particle, stage, iteration }),
        None => Ok(()),
    }
}

/// Advances `system` by one time step with the nozzle at `nozzle`, or with
/// suction off when `nozzle` is `None`.
///
/// With a recording attached every differentiable sub-step is pushed onto
/// its tape; the particle state is the same either way. Returns the number
/// of particles removed at the end of the step.
pub fn step(
    system: &mut ParticleSystem,
    nozzle: Option<Vec3>,
    env: &StepEnv,
    mut rec: Option<&mut Recording>,
) -> crate::Result<usize> {
    if let Some(e) = nozzle.filter(|e| !is_finite(e)) {
        return Err(SimError::NonFiniteNozzle([e.x, e.y, e.z]).into());
    }
    let fluid = env.fluid;
    let active: Rc<[usize]> = system.active_indices().into();
    if let Some(r) = rec.as_deref_mut() {
        r.begin_step(nozzle, active.clone())?;
    }

    let v1 = apply_gravity(&system.velocities, &active, fluid);
    let p0 = predict(&system.positions, &v1, &active, fluid.dt);
    check_finite(&p0, &active, "predict", None)?;
    if let Some(r) = rec.as_deref_mut() {
        r.record_predict(&v1, &p0)?;
    }

    let neighbors = Rc::new(build_neighbors(&p0, &system.active, fluid.kernel_radius));

    let mut p = p0;
    for iteration in 0..fluid.solver_iterations {
        let (dx, cache) = density_pass(&p, &active, &neighbors, fluid);
        let s = nozzle.map(|e| suction_pass(&p, &active, &e, env));
        let (next, masks) = update_and_project(&p, &dx, s.as_deref(), &active, env.boundary);
        check_finite(&next, &active, "constraint iteration", Some(iteration))?;
        if let Some(r) = rec.as_deref_mut() {
            r.record_iteration(&neighbors, dx, cache, s, &next, masks)?;
        }
        p = next;
    }

    let v = velocity_update(&p, &system.positions, &active, fluid.dt);
    check_finite(&v, &active, "velocity update", None)?;
    system.velocities = v;
    system.positions = p;
    let removed = deactivate_lifted(system, env.y_goal);
    if let Some(r) = rec.as_deref_mut() {
        r.end_step(&system.velocities, system.active_indices().into())?;
    }
    Ok(removed)
}
