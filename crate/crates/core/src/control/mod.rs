//! Nozzle control: the loss, gradient-based receding-horizon planning,
//! Monte-Carlo choice of the first suction point and the hand-crafted
//! baseline policies.

mod loss;
mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{particle_loss, system_loss, total_loss};
pub use trajectory::{clamp_step, normalize_gradient, project_trajectory, ControlTrajectory, NozzleBounds};

use crate::autodiff::{backward, rollout};
use crate::error::ConfigError;
use crate::fluid::particles::ParticleSystem;
use crate::fluid::step::StepEnv;
use crate::math::Vec3;
use crate::scenes::Scene;

fn d_horizon() -> usize {
    10
}
fn d_lr() -> f64 {
    0.1
}
fn d_iters() -> usize {
    20
}
fn d_clamp() -> f64 {
    0.05
}
fn d_lookahead() -> usize {
    100
}
fn d_samples() -> usize {
    10
}
fn d_sel_iters() -> usize {
    5
}

/// Planner settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Planning horizon (steps).
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    /// Gradient updates per environment step.
    #[serde(default = "d_iters")]
    pub grad_iterations: usize,
    /// Largest nozzle move per step (cm).
    #[serde(default = "d_clamp")]
    pub step_clamp: f64,
    /// Steps simulated per candidate when choosing the first suction point.
    #[serde(default = "d_lookahead")]
    pub lookahead: usize,
    /// Candidate starting points.
    #[serde(default = "d_samples")]
    pub samples: usize,
    /// Gradient updates per step inside candidate evaluation.
    #[serde(default = "d_sel_iters")]
    pub selection_grad_iterations: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: d_horizon(),
            learning_rate: d_lr(),
            grad_iterations: d_iters(),
            step_clamp: d_clamp(),
            lookahead: d_lookahead(),
            samples: d_samples(),
            selection_grad_iterations: d_sel_iters(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(ConfigError::Invalid("mpc.horizon must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::Invalid("mpc.learning_rate must be > 0".into()));
        }
        if !(self.step_clamp > 0.0 && self.step_clamp.is_finite()) {
            return Err(ConfigError::Invalid("mpc.step_clamp must be > 0".into()));
        }
        if self.samples == 0 {
            return Err(ConfigError::Invalid("mpc.samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-call optimizer trace.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MpcDiagnostics {
    /// Horizon loss before each gradient update.
    pub losses: Vec<f64>,
    /// Updates after which the loss did not go down.
    pub non_decreasing: usize,
}

/// Optimizes a nozzle trajectory over the horizon and returns it.
///
/// `init` seeds the search and `current` is where the nozzle is now; every
/// update is projected back onto `bounds` and the per-step clamp. The
/// state is treated as a constant: gradients reach only the controls.
/// Rolls out on a compacted copy of `system`, without emission.
pub fn optimize_trajectory(
    system: &ParticleSystem,
    init: &ControlTrajectory,
    current: &Vec3,
    env: &StepEnv,
    bounds: &NozzleBounds,
    cfg: &MpcConfig,
    grad_iterations: usize,
) -> crate::Result<(ControlTrajectory, MpcDiagnostics)> {
    let state = system.compacted();
    let mut u = init.0.clone();
    project_trajectory(&mut u, current, cfg.step_clamp, bounds);
    let mut diag = MpcDiagnostics::default();
    if state.active_count() == 0 {
        return Ok((ControlTrajectory(u), diag));
    }
    for _ in 0..grad_iterations {
        let mut r = rollout(&state, &u, env)?;
        let loss = r.loss_value();
        if let Some(&prev) = diag.losses.last() {
            if loss >= prev {
                diag.non_decreasing += 1;
            }
        }
        diag.losses.push(loss);
        let g = normalize_gradient(&backward(&mut r.recording, r.loss)?);
        if g.iter().all(|v| *v == Vec3::zeros()) {
            break;
        }
        for (p, d) in u.iter_mut().zip(&g) {
            *p -= d * cfg.learning_rate;
        }
        project_trajectory(&mut u, current, cfg.step_clamp, bounds);
    }
    Ok((ControlTrajectory(u), diag))
}

/// One planning call: starts from `previous` repeated over the horizon and
/// returns the first point of the optimized trajectory.
pub fn mpc_step(
    system: &ParticleSystem,
    previous: &Vec3,
    env: &StepEnv,
    bounds: &NozzleBounds,
    cfg: &MpcConfig,
) -> crate::Result<(Vec3, MpcDiagnostics)> {
    let init = ControlTrajectory::constant(*previous, cfg.horizon);
    let (u, diag) = optimize_trajectory(system, &init, previous, env, bounds, cfg, cfg.grad_iterations)?;
    Ok((u.0[0], diag))
}

/// Receding-horizon controller. The optimized tail of each plan seeds the
/// next one.
#[derive(Clone, Debug)]
pub struct MpcController {
    pub config: MpcConfig,
    pub bounds: NozzleBounds,
    pub grad_iterations: usize,
    position: Vec3,
    plan: ControlTrajectory,
}

impl MpcController {
    pub fn new(start: Vec3, config: MpcConfig, bounds: NozzleBounds) -> Self {
        let start = bounds.clamp(&start);
        let plan = ControlTrajectory::constant(start, config.horizon);
        let grad_iterations = config.grad_iterations;
        Self { config, bounds, grad_iterations, position: start, plan }
    }

    /// Current nozzle position.
    pub fn position(&self) -> Vec3 {
        self.position
    }

    /// Plans, commits the first control and returns it.
    pub fn act(&mut self, system: &ParticleSystem, env: &StepEnv) -> crate::Result<(Vec3, MpcDiagnostics)> {
        let (u, diag) = optimize_trajectory(
            system,
            &self.plan,
            &self.position,
            env,
            &self.bounds,
            &self.config,
            self.grad_iterations,
        )?;
        let next = clamp_step(&self.position, &u.0[0], self.config.step_clamp);
        self.position = next;
        self.plan = u.shifted();
        Ok((next, diag))
    }
}

/// Outcome of the first-point search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub point: Vec3,
    pub index: usize,
    pub candidates: Vec<Vec3>,
    /// Particles left below the goal after the lookahead, per candidate.
    pub remaining: Vec<usize>,
}

/// Draws `samples` active particle positions uniformly with replacement,
/// moved onto the nozzle bounds.
pub fn sample_candidates(system: &ParticleSystem, samples: usize, seed: u64, bounds: &NozzleBounds) -> Vec<Vec3> {
    let active = system.active_indices();
    if active.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| bounds.clamp(&system.positions[active[rng.gen_range(0..active.len())]])).collect()
}

/// Picks the candidate that leaves the fewest particles below the goal.
///
/// `evaluate` runs the closed loop from a candidate and returns the count;
/// the minimum wins, ties going to the earlier candidate.
pub fn select_by<F>(candidates: &[Vec3], mut evaluate: F) -> crate::Result<Selection>
where
    F: FnMut(&Vec3) -> crate::Result<usize>,
{
    if candidates.is_empty() {
        return Err(crate::Error::Other("initial point selection needs at least one active particle".into()));
    }
    let remaining = candidates.iter().map(&mut evaluate).collect::<crate::Result<Vec<_>>>()?;
    let mut index = 0;
    for (k, &n) in remaining.iter().enumerate() {
        if n < remaining[index] {
            index = k;
        }
    }
    Ok(Selection { point: candidates[index], index, candidates: candidates.to_vec(), remaining })
}

/// Hand-crafted nozzle policies and the optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    Mpc,
    /// Nozzle parked above the emission point.
    FixedEmission,
    /// Nozzle parked above the end of the flow path.
    FixedEnd,
    /// Nozzle parked above the middle of the flow path.
    FixedMiddle,
    /// Straight sweep from the flow end to the emission point, `rate` cm
    /// per step. Without a rate the sweep takes 600 steps.
    EndToEmit {
        #[serde(default)]
        rate: Option<f64>,
    },
}

impl Policy {
    pub const NAMES: [&'static str; 5] = ["mpc", "fixed_emission", "fixed_end", "fixed_middle", "end_to_emit"];

    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "mpc" => Ok(Policy::Mpc),
            "fixed_emission" => Ok(Policy::FixedEmission),
            "fixed_end" => Ok(Policy::FixedEnd),
            "fixed_middle" => Ok(Policy::FixedMiddle),
            "end_to_emit" => Ok(Policy::EndToEmit { rate: None }),
            other => Err(ConfigError::Invalid(format!(
                "policy: unknown kind '{other}' (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Mpc => "mpc",
            Policy::FixedEmission => "fixed_emission",
            Policy::FixedEnd => "fixed_end",
            Policy::FixedMiddle => "fixed_middle",
            Policy::EndToEmit { .. } => "end_to_emit",
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Policy::EndToEmit { rate: Some(r) } = self {
            if !(*r > 0.0 && r.is_finite()) {
                return Err(ConfigError::Invalid("policy.rate must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Default end-to-emit sweep length in steps.
pub const END_TO_EMIT_STEPS: f64 = 600.0;

/// Nozzle position of a hand-crafted policy `step` steps after suction
/// starts. Panics for [`Policy::Mpc`], which has no closed form.
pub fn baseline_control(policy: &Policy, step: usize, scene: &Scene) -> Vec3 {
    match policy {
        Policy::FixedEmission => scene.emission_nozzle_point(),
        Policy::FixedEnd => scene.flow_end_point(),
        Policy::FixedMiddle => scene.flow_middle_point(),
        Policy::EndToEmit { rate } => {
            let end = scene.flow_end_point();
            let emit = scene.emission_nozzle_point();
            let len = (emit - end).norm();
            if len == 0.0 {
                return emit;
            }
            let rate = rate.unwrap_or(len / END_TO_EMIT_STEPS);
            let t = (step as f64 * rate / len).min(1.0);
            end + (emit - end) * t
        }
        Policy::Mpc => panic!("the mpc policy has no closed-form control"),
    }
}
