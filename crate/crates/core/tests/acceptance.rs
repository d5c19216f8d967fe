//! One PASS/FAIL line per acceptance criterion, at desk scale (600
//! particles, three seeds). Criteria are reported rather than asserted so
//! the full table is always printed; the asserting versions of the cheap
//! checks live in the unit and property tests.

use std::fs;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suction_mpc::autodiff::{gradient_check, GradCheckOptions, ToyProblem};
use suction_mpc::control::Policy;
use suction_mpc::experiment::{run_policy, run_simulate, ExperimentConfig, Resolved, RunOutput};
use suction_mpc::fluid::{build_neighbors, density_pass, FluidParams};
use suction_mpc::metrics::{convergence_time, SuctionCurve};
use suction_mpc::scenes::emission_sweep;
use suction_mpc::Vec3;

const SEEDS: [u64; 3] = [0, 1, 2];
const CAPACITY: usize = 600;
const CLAMP_TOL: f64 = 1e-9;

struct Report {
    passed: usize,
    total: usize,
}

impl Report {
    fn line(&mut self, n: usize, ok: bool, what: &str, detail: String) {
        self.total += 1;
        self.passed += ok as usize;
        println!("{} criterion {n}: {what} -- {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn config(preset: &str, policy: Policy, seed: u64) -> Resolved {
    let mut r = ExperimentConfig {
        preset: Some(preset.into()),
        policy: Some(policy),
        seed: Some(seed),
        capacity: Some(CAPACITY),
        ..Default::default()
    }
    .resolve()
    .expect("preset resolves");
    r.out = std::env::temp_dir().join("suction-mpc-acceptance");
    r
}

fn run(preset: &str, policy: Policy, seed: u64) -> RunOutput {
    run_policy(&config(preset, policy, seed), &mut |_| {}).expect("run completes")
}

fn tau(t: Option<usize>) -> String {
    t.map_or("never".into(), |t| t.to_string())
}

/// `a < b` where a missing convergence time never happened.
fn faster(a: Option<usize>, b: Option<usize>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

/// Largest executed move, counting the move off the initial point.
fn largest_move(out: &RunOutput) -> f64 {
    let mut pts = Vec::with_capacity(out.trajectory.len() + 1);
    pts.extend(out.result.initial_point);
    pts.extend_from_slice(&out.trajectory);
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max)
}

struct CaseRuns {
    mpc: Vec<RunOutput>,
    fixed_emission: Vec<RunOutput>,
    fixed_end: Vec<RunOutput>,
    fixed_middle: Vec<RunOutput>,
    end_to_emit: Vec<RunOutput>,
}

fn case_runs(preset: &str) -> CaseRuns {
    let all = |p: Policy| SEEDS.iter().map(|&s| run(preset, p.clone(), s)).collect::<Vec<_>>();
    CaseRuns {
        mpc: all(Policy::Mpc),
        fixed_emission: all(Policy::FixedEmission),
        fixed_end: all(Policy::FixedEnd),
        fixed_middle: all(Policy::FixedMiddle),
        end_to_emit: all(Policy::EndToEmit { rate: None }),
    }
}

fn summary(runs: &[RunOutput]) -> String {
    runs.iter().map(|r| format!("{:.3}/{}", r.result.residual, tau(r.result.tau90))).collect::<Vec<_>>().join(" ")
}

fn gradients(report: &mut Report) {
    let opts = GradCheckOptions::default();
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (seed, particles, horizon) in [(101u64, 50usize, 3usize), (202, 75, 4), (303, 100, 5)] {
        let toy = ToyProblem::random(seed, particles, horizon);
        let r = gradient_check(&toy.system, &toy.controls, &toy.env(), &opts, None).expect("gradient check runs");
        worst = worst.max(r.max_relative_error);
        details.push(format!("N={particles} h={horizon}: {:.2e}", r.max_relative_error));
    }
    report.line(1, worst <= 1e-3, "adjoint vs central differences <= 1e-3", details.join(", "));
}

fn momentum(report: &mut Report) {
    let params = FluidParams::default();
    let mut worst = 0.0f64;
    let mut ok = true;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=50);
        let p: Vec<Vec3> =
            (0..n).map(|_| Vec3::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0))).collect();
        let active: Vec<usize> = (0..n).collect();
        let table = build_neighbors(&p, &vec![true; n], params.kernel_radius);
        let (dx, _) = density_pass(&p, &active, &table, &params);
        let sum: Vec3 = dx.iter().sum();
        let max = dx.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let bound = 1e-10 * n as f64 * max;
        ok &= sum.norm() <= bound;
        if max > 0.0 {
            worst = worst.max(sum.norm() / (n as f64 * max));
        }
    }
    report.line(2, ok, "sum of corrections vanishes", format!("20 sets, worst |sum|/(N max) = {worst:.1e}"));
}

fn neighbors(report: &mut Report) {
    let mut ok = true;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.gen_range(1..=500);
        let side = rng.gen_range(1.0..6.0);
        let p: Vec<Vec3> =
            (0..n).map(|_| Vec3::new(rng.gen_range(-side..side), rng.gen_range(0.0..side), rng.gen_range(0.0..side))).collect();
        let active = vec![true; n];
        let h = 1.0;
        let got = build_neighbors(&p, &active, h).to_lists();
        for i in 0..n {
            let mut a = got[i].clone();
            a.sort_unstable();
            let b: Vec<usize> = (0..n).filter(|&j| j != i && (p[i] - p[j]).norm() < h).collect();
            ok &= a == b;
        }
    }
    report.line(3, ok, "spatial hash equals brute force", "50 clouds, N <= 500".into());
}

fn case_one(report: &mut Report, runs: &CaseRuns) {
    let mut ok = true;
    for k in 0..SEEDS.len() {
        let m = &runs.mpc[k].result;
        ok &= m.residual < runs.fixed_end[k].result.residual;
        ok &= m.residual <= runs.fixed_middle[k].result.residual;
        ok &= m.tau90.is_some();
        ok &= runs.fixed_emission[k].result.tau90.is_none();
        ok &= runs.fixed_end[k].result.tau90.is_none();
        ok &= runs.fixed_middle[k].result.tau90.is_none();
    }
    report.line(
        4,
        ok,
        "case 1 residual and tau90 ordering (residual/tau90 per seed)",
        format!(
            "mpc [{}] fixed_emission [{}] fixed_end [{}] fixed_middle [{}]",
            summary(&runs.mpc),
            summary(&runs.fixed_emission),
            summary(&runs.fixed_end),
            summary(&runs.fixed_middle)
        ),
    );
    let ok = (0..SEEDS.len()).all(|k| faster(runs.mpc[k].result.tau90, runs.end_to_emit[k].result.tau90));
    report.line(
        5,
        ok,
        "case 1 mpc tau90 < end_to_emit tau90 per seed",
        format!("mpc [{}] end_to_emit [{}]", summary(&runs.mpc), summary(&runs.end_to_emit)),
    );
}

fn case_two(report: &mut Report, runs: &CaseRuns) {
    let ok = (0..SEEDS.len()).all(|k| {
        runs.mpc[k].result.tau90.is_some()
            && runs.fixed_emission[k].result.tau90.is_some()
            && runs.fixed_end[k].result.tau90.is_none()
            && faster(runs.mpc[k].result.tau90, runs.end_to_emit[k].result.tau90)
    });
    report.line(
        6,
        ok,
        "case 2 ordering (residual/tau90 per seed)",
        format!(
            "mpc [{}] fixed_emission [{}] fixed_end [{}] end_to_emit [{}]",
            summary(&runs.mpc),
            summary(&runs.fixed_emission),
            summary(&runs.fixed_end),
            summary(&runs.end_to_emit)
        ),
    );
}

/// Returns the sweep's optimizer runs for the feasibility check.
fn sweep(report: &mut Report) -> Vec<RunOutput> {
    let base = config("case1", Policy::Mpc, 0);
    let c = base.scene.container;
    let points = emission_sweep(&base.scene, 4.0).emissions;
    let runs: Vec<RunOutput> = points
        .iter()
        .map(|spec| {
            let mut cfg = base.clone();
            cfg.scene = base.scene.with_emission(spec.clone());
            run_policy(&cfg, &mut |_| {}).expect("sweep point runs")
        })
        .collect();

    let center = c.center();
    let projections = [
        Vec3::new(center.x, 0.0, c.min.z),
        Vec3::new(center.x, 0.0, c.max.z),
        Vec3::new(c.min.x, 0.0, center.z),
        Vec3::new(c.max.x, 0.0, center.z),
    ];
    let corners = [
        Vec3::new(c.min.x, 0.0, c.min.z),
        Vec3::new(c.min.x, 0.0, c.max.z),
        Vec3::new(c.max.x, 0.0, c.min.z),
        Vec3::new(c.max.x, 0.0, c.max.z),
    ];
    let nearest = |targets: &[Vec3]| -> Vec<usize> {
        let dist = |k: usize| {
            let p = Vec3::new(points[k].point.x, 0.0, points[k].point.z);
            targets.iter().map(|t| (p - t).norm()).fold(f64::INFINITY, f64::min)
        };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
        idx.truncate(3);
        idx
    };
    let mean = |idx: &[usize]| idx.iter().map(|&k| runs[k].result.trajectory_length).sum::<f64>() / idx.len() as f64;
    let (mid, corner) = (nearest(&projections), nearest(&corners));
    let (lm, lc) = (mean(&mid), mean(&corner));
    report.line(
        7,
        points.len() == 12 && lm < lc,
        "sweep: middle emission points give shorter trajectories",
        format!("{} points, mean length middle {lm:.2} cm vs corner {lc:.2} cm", points.len()),
    );
    runs
}

fn feasibility(report: &mut Report, runs: &[&RunOutput]) {
    let worst = runs.iter().map(|r| largest_move(r)).fold(0.0, f64::max);
    let steps: usize = runs.iter().map(|r| r.trajectory.len()).sum();
    report.line(
        8,
        worst <= 0.05 + CLAMP_TOL,
        "every executed optimizer move <= 0.05 cm",
        format!("{steps} steps over {} runs, largest move {worst:.12} cm", runs.len()),
    );
}

fn metric_examples(report: &mut Report) {
    let a = SuctionCurve::from_fractions(0, &[1.0, 0.9, 0.6, 0.45, 0.2]);
    let b = SuctionCurve::from_fractions(0, &[1.0, 0.9, 0.8, 0.7]);
    let c = SuctionCurve::from_fractions(300, &[0.4, 0.3, 0.25, 0.2]);
    let got = [convergence_time(&a, 50.0), convergence_time(&b, 50.0), convergence_time(&c, 50.0)];
    report.line(9, got == [Some(3), None, Some(3)], "convergence-time examples", format!("{got:?}"));
}

fn determinism(report: &mut Report) {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut ok = true;
    let mut files = 0;
    for (name, policy, steps) in [("fixed", Policy::FixedMiddle, None), ("mpc", Policy::Mpc, Some(300))] {
        let mut outs = Vec::new();
        for rep in 0..2 {
            let mut cfg = config("case2", policy.clone(), 5);
            if let Some(s) = steps {
                cfg.steps = s;
            }
            cfg.out = dir.path().join(format!("{name}-{rep}"));
            run_simulate(&cfg, &mut |_| {}).expect("simulate runs");
            outs.push(cfg.out);
        }
        for entry in fs::read_dir(&outs[0]).expect("output dir") {
            let f = entry.expect("entry").file_name();
            ok &= fs::read(outs[0].join(&f)).ok() == fs::read(outs[1].join(&f)).ok();
            files += 1;
        }
    }
    report.line(10, ok && files >= 7, "repeated runs give byte-identical files", format!("{files} files compared"));
}

fn main() {
    let start = Instant::now();
    let mut report = Report { passed: 0, total: 0 };
    gradients(&mut report);
    momentum(&mut report);
    neighbors(&mut report);
    let one = case_runs("case1");
    case_one(&mut report, &one);
    let two = case_runs("case2");
    case_two(&mut report, &two);
    let swept = sweep(&mut report);
    let optimized: Vec<&RunOutput> = one.mpc.iter().chain(&two.mpc).chain(&swept).collect();
    feasibility(&mut report, &optimized);
    metric_examples(&mut report);
    determinism(&mut report);
    println!("{}/{} criteria passed in {:.0} s", report.passed, report.total, start.elapsed().as_secs_f64());
}
