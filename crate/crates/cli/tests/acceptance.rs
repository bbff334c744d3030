//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use layoutforge::optimizer::{ablation_run, optimize_scene, AblationMode, OptimConfig};
use layoutforge::plausibility::{evaluate, exact_pair_collision, instability_metrics, MetricParams, PosedObject};
use layoutforge::pose::yaw_distance;
use layoutforge::synth::fixtures::{overlapping_cubes, ring_enclosure, split_floor};
use layoutforge::synth::gradcheck::{check_all, FD_STEP};
use layoutforge::synth::primitives::{icosphere, unit_cube};
use layoutforge::synth::suite::{pose_recovery_case, suite_scene, write_bundle_dir};
use layoutforge::{GridSdf, PlausibilityReport, Pose5DoF, SceneBundle, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUITE_SEEDS: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed < limit
}

fn uniform_in(rng: &mut ChaCha8Rng, g: &GridSdf) -> Vec3 {
    let b = g.bounds();
    b.min + b.extent().component_mul(&Vec3::new(rng.random(), rng.random(), rng.random()))
}

fn sdf_fidelity() -> Outcome {
    let start = Instant::now();
    let cube = GridSdf::build(&unit_cube(), &Pose5DoF::identity(), 64, None).expect("cube grid");
    let exact_cube = |p: &Vec3| {
        let q = (p - Vec3::new(0.0, 0.0, 0.5)).abs() - Vec3::repeat(0.5);
        q.map(|c| c.max(0.0)).norm() + q.max().min(0.0)
    };
    let sphere = GridSdf::build(&icosphere(1.0, 4), &Pose5DoF::identity(), 64, None).expect("sphere grid");
    let exact_sphere = |p: &Vec3| (p - Vec3::new(0.0, 0.0, 1.0)).norm() - 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let worst = |g: &GridSdf, f: &dyn Fn(&Vec3) -> f64, rng: &mut ChaCha8Rng| {
        (0..1000).map(|_| uniform_in(rng, g)).map(|p| (g.query(&p) - f(&p)).abs()).fold(0.0, f64::max)
    };
    let cube_err = worst(&cube, &exact_cube, &mut rng);
    let sphere_err = worst(&sphere, &exact_sphere, &mut rng);
    let elapsed = start.elapsed();
    let pass = cube_err <= 1.5 * cube.spacing()
        && sphere_err <= 1.5 * sphere.spacing() + 0.01
        && within(Duration::from_secs(5), elapsed);
    outcome(
        pass,
        format!(
            "cube max err {:.4} (limit {:.4}), sphere max err {:.4} (limit {:.4}), {elapsed:.2?}",
            cube_err,
            1.5 * cube.spacing(),
            sphere_err,
            1.5 * sphere.spacing() + 0.01
        ),
    )
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let checks = check_all(100, 21);
    let elapsed = start.elapsed();
    let pass = checks.iter().all(|c| c.checked > 0 && c.max_rel_err < 1e-3) && within(Duration::from_secs(60), elapsed);
    let parts: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {:.1e} ({} checked, {} flagged)", c.term, c.max_rel_err, c.checked, c.flagged))
        .collect();
    outcome(pass, format!("h={FD_STEP:e}; {}; {elapsed:.2?}", parts.join(", ")))
}

fn pose_recovery() -> Outcome {
    let start = Instant::now();
    let config = OptimConfig { mode: AblationMode::Pose, ..OptimConfig::default() };
    let recovered = (0..50)
        .filter(|&seed| {
            let case = pose_recovery_case(seed);
            let (out, _) = optimize_scene(&case.bundle, &config).expect("optimizes");
            let p = out.graph.nodes[0].pose;
            (p.scale - case.truth.scale).abs() / case.truth.scale <= 0.02
                && yaw_distance(p.yaw, case.truth.yaw).to_degrees() <= 2.0
                && (p.translation - case.truth.translation).norm() <= 0.02 * case.extent
        })
        .count();
    let elapsed = start.elapsed();
    outcome(recovered >= 48 && within(Duration::from_secs(120), elapsed), format!("{recovered}/50 recovered, {elapsed:.2?}"))
}

/// Optimized suite scenes for every ablation mode.
struct SuiteRuns {
    reports: Vec<[PlausibilityReport; 4]>,
    full: Vec<SceneBundle>,
    slowest_full: Duration,
}

fn run_suite() -> SuiteRuns {
    let config = OptimConfig::default();
    let params = MetricParams::default();
    let mut runs = SuiteRuns { reports: Vec::new(), full: Vec::new(), slowest_full: Duration::ZERO };
    for seed in 0..SUITE_SEEDS {
        let raw = suite_scene(seed).raw;
        let reports = AblationMode::ALL.map(|mode| {
            let start = Instant::now();
            let (out, _) = ablation_run(&raw, &config, mode).expect("optimizes");
            if mode == AblationMode::Full {
                runs.slowest_full = runs.slowest_full.max(start.elapsed());
                runs.full.push(out.clone());
            }
            evaluate(&out, &params).expect("report")
        });
        runs.reports.push(reports);
    }
    runs
}

fn mode_index(mode: AblationMode) -> usize {
    AblationMode::ALL.iter().position(|&m| m == mode).expect("listed mode")
}

fn mean(runs: &SuiteRuns, mode: AblationMode, f: impl Fn(&PlausibilityReport) -> f64) -> f64 {
    runs.reports.iter().map(|r| f(&r[mode_index(mode)])).sum::<f64>() / runs.reports.len() as f64
}

fn collision_elimination(runs: &SuiteRuns) -> Outcome {
    let worst = runs.reports.iter().map(|r| r[mode_index(AblationMode::Full)].col_o).fold(0.0, f64::max);
    outcome(
        worst == 0.0 && within(Duration::from_secs(60), runs.slowest_full),
        format!("worst Col-O {worst} over {SUITE_SEEDS} seeds, slowest scene {:.2?}", runs.slowest_full),
    )
}

fn stability(runs: &SuiteRuns) -> Outcome {
    let params = MetricParams::default();
    let worst_inst = runs.reports.iter().map(|r| r[mode_index(AblationMode::Full)].inst_o).fold(0.0, f64::max);
    let spacing = |b: &SceneBundle, id: &str| {
        b.graph.node(id).map_or(0.0, |n| PosedObject::new(b.mesh_of(n).expect("resolved"), &n.pose, 0).spacing)
    };
    let mut worst_gap_ratio: f64 = 0.0;
    for bundle in &runs.full {
        let inst = instability_metrics(bundle, &params);
        for (node, diag) in bundle.graph.nodes.iter().zip(&inst.diagnostics) {
            let diag = diag.as_ref().expect("diagnostics for every object");
            let tol = spacing(bundle, &node.id).max(spacing(bundle, node.parent.as_str()));
            worst_gap_ratio = worst_gap_ratio.max(diag.bottom_gap / tol);
        }
    }
    outcome(
        worst_inst == 0.0 && worst_gap_ratio <= 1.0,
        format!("worst Inst-O {worst_inst}, worst bottom gap {worst_gap_ratio:.3} spacings"),
    )
}

fn ablation_trend(runs: &SuiteRuns) -> Outcome {
    let col = |m| mean(runs, m, |r| r.col_o);
    let inst = |m| mean(runs, m, |r| r.inst_o);
    let (raw, pose, collision) = (col(AblationMode::Raw), col(AblationMode::Pose), col(AblationMode::Collision));
    let (inst_collision, inst_full) = (inst(AblationMode::Collision), inst(AblationMode::Full));
    outcome(
        raw > pose && pose > collision && inst_full < inst_collision,
        format!(
            "Col-O raw {raw:.4} > pose {pose:.4} > collision {collision:.4}; Inst-O full {inst_full:.4} < collision {inst_collision:.4}"
        ),
    )
}

fn metric_fixtures() -> Outcome {
    let start = Instant::now();
    let params = MetricParams::default();
    let side = 4.0;
    let walk = evaluate(&split_floor(side), &params).expect("report").walk;
    let reach = evaluate(&ring_enclosure(), &params).expect("report").reach;
    let depth_err = [0.5, 0.6, 0.75, 0.9]
        .into_iter()
        .map(|offset| {
            let b = overlapping_cubes(offset);
            let [a, c] = [&b.graph.nodes[0], &b.graph.nodes[1]];
            let (_, depth) =
                exact_pair_collision(b.mesh_of(a).expect("mesh"), &a.pose, b.mesh_of(c).expect("mesh"), &c.pose);
            (depth - (1.0 - offset)).abs()
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let walk_tol = 2.0 * params.cell / side;
    outcome(
        (walk - 0.5).abs() <= walk_tol && reach == 0.5 && depth_err <= 1e-3 && within(Duration::from_secs(10), elapsed),
        format!("walk {walk:.4} (0.5 ± {walk_tol}), reach {reach}, worst depth error {depth_err:.1e} m, {elapsed:.2?}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().expect("temp dir");
    let input = dir.path().join("scene.json");
    write_bundle_dir(&suite_scene(4).raw, &input).expect("bundle written");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_layoutforge"))
            .args(["optimize", "--bundle"])
            .arg(&input)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "17"])
            .output()
            .expect("binary runs")
            .status;
        (status.success(), out)
    };
    let ((ok_a, a), (ok_b, b)) = (run("a"), run("b"));
    let same = |f: &str| std::fs::read(a.join(f)).ok().zip(std::fs::read(b.join(f)).ok()).is_some_and(|(x, y)| x == y);
    let identical: Vec<&str> = ["scene.out.json", "trace.ndjson", "report.json"].into_iter().filter(|f| same(f)).collect();
    outcome(ok_a && ok_b && identical.len() == 3, format!("identical: {identical:?}"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("{} {n} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    report(1, "sdf fidelity", sdf_fidelity());
    report(2, "gradient oracle", gradient_oracle());
    report(3, "pose recovery", pose_recovery());
    let runs = run_suite();
    report(4, "collision elimination", collision_elimination(&runs));
    report(5, "stability", stability(&runs));
    report(6, "ablation trend", ablation_trend(&runs));
    report(7, "metric fixtures", metric_fixtures());
    report(8, "determinism", determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
