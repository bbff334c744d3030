use layoutforge::losses::Stage;
use layoutforge::optimizer::{ablation_run, optimize_scene, AblationMode, OptimConfig};
use layoutforge::plausibility::{evaluate, exact_pair_collision, static_stability, sdf_spacing, MetricParams, Support};
use layoutforge::pose::yaw_distance;
use layoutforge::scene::save_bundle;
use layoutforge::synth::fixtures::{sunk_cube, table_and_cup, TABLE_HEIGHT};
use layoutforge::synth::primitives::unit_cube;
use layoutforge::synth::suite::{correspondences_for, pose_recovery_case, suite_camera, suite_scene, BundleBuilder};
use layoutforge::{Pose5DoF, SceneBundle, Vec3};

fn bundle_text(bundle: &SceneBundle) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    save_bundle(bundle, &path).unwrap();
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn resting_aligned_node_is_a_fixed_point() {
    let pose = Pose5DoF::new(1.0, 0.4, Vec3::new(0.2, -0.1, 0.0));
    let cube = unit_cube();
    let pairs = correspondences_for(&cube, &pose, &suite_camera(), 100, 0.7, 3);
    let bundle = BundleBuilder::new().camera(suite_camera()).anchor("cube", cube, pose).correspondences("cube", pairs).build();
    let (out, _) = optimize_scene(&bundle, &OptimConfig::default()).unwrap();
    assert!(out.graph.nodes[0].pose.max_abs_diff(&pose) < 1e-6);
}

#[test]
fn sunk_cube_rises_to_the_ground() {
    let bundle = sunk_cube(0.2);
    let (out, traces) = optimize_scene(&bundle, &OptimConfig::default()).unwrap();
    let pose = out.graph.nodes[0].pose;
    let cube = unit_cube();
    let spacing = sdf_spacing(&cube.posed_aabb(&pose));
    let bottom = cube.posed_aabb(&pose).min.z;
    assert!(-bottom <= spacing, "still {bottom} below ground");
    let (stable, diag) = static_stability(&cube, &pose, Support::Ground(0.0), spacing, 16, 0);
    assert!(stable);
    assert!(diag.bottom_gap <= spacing);

    // exact depth every 10 physics iterations never grows
    let depths: Vec<f64> = traces[0]
        .records
        .iter()
        .filter(|r| r.stage == Stage::Physics && r.iter % 10 == 0)
        .map(|r| (-cube.posed_aabb(&r.pose).min.z).max(0.0))
        .collect();
    assert!(depths.windows(2).all(|w| w[1] <= w[0]), "{depths:?}");
}

#[test]
fn cup_settles_on_the_table() {
    let bundle = table_and_cup(0.03);
    let (out, _) = optimize_scene(&bundle, &OptimConfig::default()).unwrap();
    let table = &out.graph.nodes[0];
    let cup = &out.graph.nodes[1];
    let (tm, cm) = (out.mesh_of(table).unwrap(), out.mesh_of(cup).unwrap());
    let spacing = sdf_spacing(&tm.posed_aabb(&table.pose));
    let (hit, pen) = exact_pair_collision(tm, &table.pose, cm, &cup.pose);
    assert!(!hit && pen <= spacing);
    let gap = (cm.posed_aabb(&cup.pose).min.z - TABLE_HEIGHT).abs();
    assert!(gap <= spacing, "cup base {gap} off the table top");
}

#[test]
fn pose_recovery_on_a_few_seeds() {
    let cfg = OptimConfig { mode: AblationMode::Pose, ..Default::default() };
    for seed in 0..5 {
        let case = pose_recovery_case(seed);
        let (out, _) = optimize_scene(&case.bundle, &cfg).unwrap();
        let p = out.graph.nodes[0].pose;
        assert!((p.scale - case.truth.scale).abs() / case.truth.scale < 0.02, "seed {seed}");
        assert!(yaw_distance(p.yaw, case.truth.yaw).to_degrees() < 2.0, "seed {seed}");
        assert!((p.translation - case.truth.translation).norm() < 0.02 * case.extent, "seed {seed}");
    }
}

#[test]
fn suite_scenes_end_collision_free_and_stable() {
    let params = MetricParams::default();
    for seed in [0, 8] {
        let scene = suite_scene(seed);
        let (out, _) = optimize_scene(&scene.raw, &OptimConfig::default()).unwrap();
        let r = evaluate(&out, &params).unwrap();
        assert_eq!((r.col_o, r.inst_o), (0.0, 0.0), "seed {seed}: {:?}", r.per_object);
    }
}

#[test]
fn ablation_stages_reduce_violations() {
    let params = MetricParams::default();
    let scene = suite_scene(1);
    let rate = |mode| {
        let (out, _) = ablation_run(&scene.raw, &OptimConfig::default(), mode).unwrap();
        evaluate(&out, &params).unwrap()
    };
    let (raw, pose, collision, full) =
        (rate(AblationMode::Raw), rate(AblationMode::Pose), rate(AblationMode::Collision), rate(AblationMode::Full));
    assert!(raw.col_o > pose.col_o && pose.col_o > collision.col_o);
    assert!(full.inst_o < collision.inst_o);
}

#[test]
fn raw_mode_returns_the_input() {
    let scene = suite_scene(2);
    let (out, traces) = ablation_run(&scene.raw, &OptimConfig::default(), AblationMode::Raw).unwrap();
    assert_eq!(out, scene.raw);
    assert!(traces.is_empty());
}

#[test]
fn runs_are_byte_identical() {
    let scene = suite_scene(4);
    let cfg = OptimConfig { seed: 9, ..Default::default() };
    let (a, ta) = optimize_scene(&scene.raw, &cfg).unwrap();
    let (b, tb) = optimize_scene(&scene.raw, &cfg).unwrap();
    assert_eq!(bundle_text(&a), bundle_text(&b));
    let nd = |t: &[layoutforge::OptimTrace]| t.iter().map(|t| t.to_ndjson()).collect::<String>();
    assert_eq!(nd(&ta), nd(&tb));
}

#[test]
fn traces_are_ordered_and_exclude_the_node_itself() {
    let scene = suite_scene(5);
    let (_, traces) = optimize_scene(&scene.raw, &OptimConfig::default()).unwrap();
    assert_eq!(traces.len(), scene.raw.graph.nodes.len());
    for t in &traces {
        assert!(!t.scene_parts.contains(&t.node));
        for stage in [Stage::Alignment, Stage::Physics] {
            let iters: Vec<usize> = t.records.iter().filter(|r| r.stage == stage).map(|r| r.iter).collect();
            assert!(iters.windows(2).all(|w| w[0] < w[1]));
        }
        for line in t.to_ndjson().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in ["node", "stage", "iter", "L_pose", "L_trans", "L_scale", "L_stab", "pose"] {
                assert!(v.get(key).is_some(), "missing {key}");
            }
        }
    }
}

#[test]
fn cached_grids_reproduce_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = OptimConfig { sdf_cache: Some(dir.path().to_owned()), ..Default::default() };
    let bundle = table_and_cup(0.02);
    let (a, _) = optimize_scene(&bundle, &cfg).unwrap();
    assert!(std::fs::read_dir(dir.path()).unwrap().count() > 0);
    let (b, _) = optimize_scene(&bundle, &cfg).unwrap();
    assert_eq!(a, b);
}
