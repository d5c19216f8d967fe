use super::recording::Recording;
use super::tape::{NodeId, TapeContext};
use crate::control::system_loss;
use crate::fluid::particles::ParticleSystem;
use crate::fluid::step::{step, StepEnv};
use crate::math::Vec3;

/// A recorded rollout over one control trajectory.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub system: ParticleSystem,
    pub recording: Recording,
    /// Scalar node holding the summed per-step loss.
    pub loss: NodeId,
}

impl Rollout {
    pub fn loss_value(&self) -> f64 {
        self.recording.tape().value(self.loss).ok().and_then(|v| v.as_scalar()).unwrap_or(f64::NAN)
    }
}

/// Runs one step per control with taping on and appends the loss node.
pub fn rollout(initial: &ParticleSystem, controls: &[Vec3], env: &StepEnv) -> crate::Result<Rollout> {
    rollout_with_limit(initial, controls, env, super::DEFAULT_TAPE_LIMIT)
}

pub(crate) fn rollout_with_limit(
    initial: &ParticleSystem,
    controls: &[Vec3],
    env: &StepEnv,
    limit: usize,
) -> crate::Result<Rollout> {
    let tape = super::Tape::with_limit(TapeContext::from_env(env), limit);
    let mut recording = Recording::with_tape(tape, initial)?;
    let mut system = initial.clone();
    for e in controls {
        step(&mut system, Some(*e), env, Some(&mut recording))?;
    }
    let loss = recording.push_loss()?;
    Ok(Rollout { system, recording, loss })
}

/// Untaped rollout returning the final state and the summed loss.
pub fn rollout_loss(initial: &ParticleSystem, controls: &[Vec3], env: &StepEnv) -> crate::Result<(ParticleSystem, f64)> {
    let mut system = initial.clone();
    let mut loss = 0.0;
    for e in controls {
        step(&mut system, Some(*e), env, None)?;
        loss += system_loss(&system, env.y_goal);
    }
    Ok((system, loss))
}

/// `∂loss/∂x_e` for every recorded control, in step order.
pub fn backward(recording: &mut Recording, loss: NodeId) -> crate::Result<Vec<Vec3>> {
    recording.tape_mut().backward(loss)?;
    let tape = recording.tape();
    Ok(recording.controls().iter().map(|&c| tape.point_adjoint(c)).collect::<Result<_, _>>()?)
}
