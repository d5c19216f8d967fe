//! Experiment configuration and the three runs behind the command line:
//! a single simulation, an emission-point sweep and a gradient check.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{gradient_check, GradCheckOptions, GradientReport, ToyProblem};
use crate::control::{baseline_control, MpcConfig, MpcController, MpcDiagnostics, Policy};
use crate::error::{ConfigError, Error};
use crate::fluid::params::FluidParams;
use crate::math::Vec3;
use crate::metrics::{record_curve, trajectory_csv, RunResult};
use crate::scenes::{emission_sweep, load_scene, preset, Scene};
use crate::sim::{select_initial_point, Simulation};
use crate::suction::SuctionParams;

/// Gradient-check problem size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSetup {
    pub particles: usize,
    pub horizon: usize,
    pub delta: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSetup {
    fn default() -> Self {
        Self { particles: 60, horizon: 3, delta: 1e-4, tolerance: 1e-3 }
    }
}

/// Experiment settings as read from a TOML file or assembled from flags.
/// Every field is optional so that sources can be layered with
/// [`ExperimentConfig::overlay`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in scene name.
    pub preset: Option<String>,
    /// Path to a scene file; takes precedence over `preset`.
    pub scene: Option<PathBuf>,
    pub policy: Option<Policy>,
    pub seed: Option<u64>,
    /// Total steps including the warm-up.
    pub steps: Option<usize>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// Overrides the scene's particle cap.
    pub capacity: Option<usize>,
    /// Overrides the scene's emission rate (particles per step).
    pub emission_rate: Option<f64>,
    pub fluid: Option<FluidParams>,
    pub suction: Option<SuctionParams>,
    pub mpc: Option<MpcConfig>,
    pub gradcheck: Option<GradcheckSetup>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Ok(Self::from_toml(&text)?)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: ExperimentConfig) -> Self {
        let (scene_only, preset_only) = (top.scene.is_some() && top.preset.is_none(), top.preset.is_some() && top.scene.is_none());
        overlay_fields!(
            self, top, preset, scene, policy, seed, steps, out, capacity, emission_rate, fluid, suction, mpc, gradcheck
        );
        if scene_only {
            self.preset = None;
        }
        if preset_only {
            self.scene = None;
        }
        self
    }

    /// Loads the scene, fills defaults and checks everything.
    pub fn resolve(&self) -> crate::Result<Resolved> {
        let mut scene = match (&self.scene, &self.preset) {
            (Some(path), _) => {
                let text =
                    fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
                load_scene(&text)?
            }
            (None, Some(name)) => preset(name)?,
            (None, None) => preset("case1")?,
        };
        if let Some(c) = self.capacity {
            scene.capacity = c;
        }
        if let Some(r) = self.emission_rate {
            scene.emission.rate = r;
        }
        scene.validate()?;
        let policy = self.policy.clone().unwrap_or(Policy::Mpc);
        policy.validate()?;
        let fluid = self.fluid.clone().unwrap_or_default();
        fluid.validate()?;
        let suction = self.suction.clone().unwrap_or_default();
        suction.validate()?;
        let mpc = self.mpc.clone().unwrap_or_default();
        mpc.validate()?;
        let steps = self.steps.unwrap_or(scene.warmup_steps + 1000);
        if steps < scene.warmup_steps {
            return Err(ConfigError::Invalid(format!(
                "steps: {steps} is shorter than the {}-step warm-up",
                scene.warmup_steps
            ))
            .into());
        }
        Ok(Resolved {
            scene,
            policy,
            seed: self.seed.unwrap_or(0),
            steps,
            fluid,
            suction,
            mpc,
            gradcheck: self.gradcheck.clone().unwrap_or_default(),
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

/// Fully specified experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub scene: Scene,
    pub policy: Policy,
    pub seed: u64,
    pub steps: usize,
    pub fluid: FluidParams,
    pub suction: SuctionParams,
    pub mpc: MpcConfig,
    pub gradcheck: GradcheckSetup,
    /// Not part of the hash: the same experiment written elsewhere is the
    /// same experiment.
    #[serde(skip)]
    pub out: PathBuf,
}

impl Resolved {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Executed run with the per-step data the files are written from.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: RunResult,
    /// Nozzle position at each controlled step.
    pub trajectory: Vec<Vec3>,
    /// Optimizer trace per controlled step (optimizer runs only).
    pub diagnostics: Vec<MpcDiagnostics>,
}

/// Warm-up, then `steps − warmup` controlled steps with the policy.
///
/// `progress` receives human-readable status lines.
pub fn run_policy(cfg: &Resolved, progress: &mut dyn FnMut(&str)) -> crate::Result<RunOutput> {
    let mut sim = Simulation::new(cfg.scene.clone(), cfg.fluid.clone(), cfg.suction.clone(), cfg.seed)?;
    sim.warm_up()?;
    let t0 = sim.step_index as usize;
    let emission_ongoing = !sim.emission_finished();
    let controlled = cfg.steps - t0;
    let mut counts = Vec::with_capacity(controlled + 1);
    counts.push(sim.remaining());
    progress(&format!("warm-up done: {} particles at step {t0}", counts[0]));

    let mut trajectory = Vec::with_capacity(controlled);
    let mut diagnostics = Vec::new();
    let mut initial_point = None;
    match &cfg.policy {
        Policy::Mpc => {
            let selection = select_initial_point(&sim, &cfg.mpc, cfg.seed)?;
            progress(&format!(
                "initial point {:?} (candidate {}, remaining {:?})",
                selection.point.as_slice(),
                selection.index,
                selection.remaining
            ));
            initial_point = Some(selection.point);
            let mut ctl = MpcController::new(selection.point, cfg.mpc.clone(), cfg.scene.nozzle_bounds());
            for k in 0..controlled {
                let (u, diag) = ctl.act(&sim.system, &sim.env())?;
                sim.advance(Some(u))?;
                trajectory.push(u);
                diagnostics.push(diag);
                counts.push(sim.remaining());
                if (k + 1) % 100 == 0 {
                    progress(&format!("step {}: {} particles left", t0 + k + 1, sim.remaining()));
                }
            }
        }
        policy => {
            for k in 0..controlled {
                let u = baseline_control(policy, k, &cfg.scene);
                sim.advance(Some(u))?;
                trajectory.push(u);
                counts.push(sim.remaining());
            }
        }
    }
    let curve = record_curve(t0, &counts);
    let mut result =
        RunResult::new(cfg.policy.name(), cfg.seed, cfg.hash(), curve, counts[0], &trajectory, emission_ongoing);
    result.initial_point = initial_point;
    Ok(RunOutput { result, trajectory, diagnostics })
}

fn write(path: &Path, contents: &str) -> crate::Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn ensure_dir(path: &Path) -> crate::Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Runs the policy and writes `curve.csv`, `result.json` and
/// `trajectory.csv` (plus `diagnostics.jsonl` for the optimizer) into the
/// output directory.
pub fn run_simulate(cfg: &Resolved, progress: &mut dyn FnMut(&str)) -> crate::Result<RunResult> {
    let run = run_policy(cfg, progress)?;
    ensure_dir(&cfg.out)?;
    let t0 = run.result.curve.t0;
    write(&cfg.out.join("curve.csv"), &run.result.curve.to_csv())?;
    write(&cfg.out.join("trajectory.csv"), &trajectory_csv(t0, &run.trajectory))?;
    let json = serde_json::to_string_pretty(&run.result).expect("result serializes");
    write(&cfg.out.join("result.json"), &(json + "\n"))?;
    if !run.diagnostics.is_empty() {
        let mut lines = String::new();
        for (k, d) in run.diagnostics.iter().enumerate() {
            let row = serde_json::json!({ "step": t0 + k, "losses": d.losses, "non_decreasing": d.non_decreasing });
            lines.push_str(&row.to_string());
            lines.push('\n');
        }
        write(&cfg.out.join("diagnostics.jsonl"), &lines)?;
    }
    Ok(run.result)
}

/// One emission point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub z: f64,
    pub length: Option<f64>,
    pub tau60: Option<usize>,
    pub error: Option<String>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// Runs the configured policy once per emission point placed `spacing`
/// apart along the walls.
///
/// Writes `sweep.csv` (`x,z,length,tau60,error`) and one trajectory CSV per
/// point under `sweep/`. A failing point becomes a row with its error and
/// the sweep carries on.
pub fn run_sweep(cfg: &Resolved, spacing: f64, progress: &mut dyn FnMut(&str)) -> crate::Result<Vec<SweepRow>> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(ConfigError::Invalid("spacing must be > 0".into()).into());
    }
    let sweep = emission_sweep(&cfg.scene, spacing);
    for p in &sweep.skipped {
        progress(&format!("skipped emission point inside an obstacle: {:?}", p.as_slice()));
    }
    let dir = cfg.out.join("sweep");
    ensure_dir(&dir)?;
    let mut rows = Vec::new();
    for (k, spec) in sweep.emissions.iter().enumerate() {
        progress(&format!("sweep point {}/{} at ({}, {})", k + 1, sweep.emissions.len(), spec.point.x, spec.point.z));
        let mut point_cfg = cfg.clone();
        point_cfg.scene = cfg.scene.with_emission(spec.clone());
        let row = match run_policy(&point_cfg, &mut |_| {}) {
            Ok(run) => {
                write(&dir.join(format!("point_{k:02}_trajectory.csv")), &trajectory_csv(run.result.curve.t0, &run.trajectory))?;
                SweepRow {
                    x: spec.point.x,
                    z: spec.point.z,
                    length: Some(run.result.trajectory_length),
                    tau60: run.result.tau60,
                    error: None,
                }
            }
            Err(e) => SweepRow { x: spec.point.x, z: spec.point.z, length: None, tau60: None, error: Some(e.to_string()) },
        };
        rows.push(row);
    }
    let mut csv = String::from("x,z,length,tau60,error\n");
    for r in &rows {
        let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        csv.push_str(&format!("{},{},{},{},{}\n", r.x, r.z, opt(&r.length), opt(&r.tau60), error));
    }
    write(&cfg.out.join("sweep.csv"), &csv)?;
    Ok(rows)
}

/// Gradient check on a random toy scene seeded by the experiment seed.
/// `adjoint_fault` scales one adjoint path to exercise the failure branch.
/// Writes `gradcheck.json`.
pub fn run_gradcheck(cfg: &Resolved, adjoint_fault: Option<f64>) -> crate::Result<GradientReport> {
    let g = &cfg.gradcheck;
    if g.particles == 0 || g.horizon == 0 || !(g.delta > 0.0) || !(g.tolerance > 0.0) {
        return Err(ConfigError::Invalid("gradcheck: particles, horizon, delta and tolerance must be > 0".into()).into());
    }
    let mut problem = ToyProblem::random(cfg.seed, g.particles, g.horizon);
    problem.suction = cfg.suction.clone();
    let opts = GradCheckOptions { delta: g.delta, tolerance: g.tolerance, ..GradCheckOptions::default() };
    let report = gradient_check(&problem.system, &problem.controls, &problem.env(), &opts, adjoint_fault)?;
    ensure_dir(&cfg.out)?;
    let mut json = serde_json::to_value(&report).expect("report serializes");
    json["seed"] = cfg.seed.into();
    json["config_hash"] = cfg.hash().into();
    json["passed"] = report.passed().into();
    write(&cfg.out.join("gradcheck.json"), &(serde_json::to_string_pretty(&json).expect("json") + "\n"))?;
    Ok(report)
}
