use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use suction_mpc::control::Policy;
use suction_mpc::experiment::{run_gradcheck, run_simulate, run_sweep, ExperimentConfig, Resolved};
use suction_mpc::Error;

/// Suction-nozzle experiments on a position-based fluid.
#[derive(Parser, Debug)]
#[command(name = "suction-mpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Warm up a scene, run one policy and write curve.csv, trajectory.csv
    /// and result.json.
    Simulate(Common),
    /// Run the policy once per emission point along the walls and write
    /// sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Distance between emission points along each wall (cm).
        #[arg(long, default_value_t = 4.0)]
        spacing: f64,
    },
    /// Compare adjoint gradients with finite differences on a random toy
    /// scene and write gradcheck.json. Exits 1 if the tolerance is exceeded.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Scales one adjoint path; used to check that failures are caught.
        #[arg(long, hide = true)]
        corrupt_adjoint: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Built-in scene: case1 or case2.
    #[arg(long, conflicts_with = "scene")]
    preset: Option<String>,
    /// Scene file (TOML).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// mpc, fixed_emission, fixed_end, fixed_middle or end_to_emit.
    #[arg(long)]
    policy: Option<String>,
    /// Seed for emission jitter and candidate sampling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Total steps including the warm-up [default: warm-up + 1000].
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment file (TOML); its settings override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
    Threshold(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.into()),
            _ => Failure::Run(e.into()),
        }
    }
}

fn resolve(common: &Common) -> Result<Resolved, Failure> {
    let policy = common.policy.as_deref().map(Policy::parse).transpose().map_err(|e| Failure::Usage(e.into()))?;
    let flags = ExperimentConfig {
        preset: common.preset.clone(),
        scene: common.scene.clone(),
        policy,
        seed: common.seed,
        steps: common.steps,
        out: common.out.clone(),
        ..Default::default()
    };
    let merged = match &common.config {
        Some(path) => {
            let file = ExperimentConfig::load(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(Failure::Usage)?;
            flags.overlay(file)
        }
        None => flags,
    };
    Ok(merged.resolve()?)
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = resolve(&common)?;
            let result = run_simulate(&cfg, &mut |l| progress(l))?;
            eprintln!(
                "{}: residual {:.4}, tau90 {}, wrote {}",
                result.policy,
                result.residual,
                result.tau90.map_or("never".into(), |t| t.to_string()),
                cfg.out.display()
            );
        }
        Command::Sweep { common, spacing } => {
            let cfg = resolve(&common)?;
            let rows = run_sweep(&cfg, spacing, &mut |l| progress(l))?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            eprintln!("{} sweep points ({failed} failed), wrote {}", rows.len(), cfg.out.join("sweep.csv").display());
        }
        Command::Gradcheck { common, corrupt_adjoint } => {
            let cfg = resolve(&common)?;
            let report = run_gradcheck(&cfg, corrupt_adjoint)?;
            if !report.passed() {
                let worst = report
                    .worst
                    .map_or("no comparable coordinate".to_string(), |(step, axis)| format!("step {step} axis {axis}"));
                return Err(Failure::Threshold(format!(
                    "gradient check failed: max relative error {:e} > {:e}, worst {worst}",
                    report.max_relative_error, cfg.gradcheck.tolerance
                )));
            }
            eprintln!("gradient check passed: max relative error {:e}", report.max_relative_error);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
