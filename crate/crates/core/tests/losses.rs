use layoutforge::losses::{
    detect_collisions, scale_collision_loss, translation_collision_loss, LossTerms, LossValue, LossWeights, Stage,
    DEFAULT_LINK_FACTOR,
};
use layoutforge::mesh::{mean_nearest_neighbor_distance, sample_surface};
use layoutforge::optimizer::apply_step;
use layoutforge::sdf::{GridSdf, SceneSdf, SdfPart};
use layoutforge::synth::gradcheck::check_all;
use layoutforge::synth::primitives::{box_mesh, icosphere, unit_cube};
use layoutforge::{Pose5DoF, PoseGradient, Vec3};

#[test]
fn analytic_gradients_match_finite_differences() {
    for check in check_all(100, 21) {
        assert!(check.checked >= 90, "{check:?}");
        assert!(check.max_rel_err < 1e-3, "{check:?}");
    }
}

fn walls(gap_half: f64) -> SceneSdf {
    let wall = box_mesh(Vec3::new(0.5, 3.0, 3.0));
    let grid = |x: f64| GridSdf::build(&wall, &Pose5DoF::new(1.0, 0.0, Vec3::new(x, 0.0, -0.5)), 64, None).unwrap();
    SceneSdf::empty()
        .with_part("left", SdfPart::Grid(grid(-gap_half - 0.25).into()))
        .unwrap()
        .with_part("right", SdfPart::Grid(grid(gap_half + 0.25).into()))
        .unwrap()
}

#[test]
fn squeezed_sphere_shrinks_between_walls() {
    let sphere = icosphere(1.0, 4);
    let samples = sample_surface(&sphere, 400, 2);
    let link = DEFAULT_LINK_FACTOR * mean_nearest_neighbor_distance(&samples.points);
    let scene = walls(0.8);
    let mut pose = Pose5DoF::identity();
    let state = detect_collisions(&samples, &pose, &scene, &sphere.centroid(), link);
    assert_eq!(state.n_cluster, 2);

    let targets: Vec<f64> = state.scale_targets(&pose).into_iter().flatten().collect();
    let deepest = targets.iter().copied().fold(f64::INFINITY, f64::min);
    assert!((deepest - 0.8).abs() < 0.02, "{deepest}");
    assert!(((1.0 - deepest).powi(2) - 0.04).abs() < 0.004);

    for _ in 0..200 {
        let state = detect_collisions(&samples, &pose, &scene, &sphere.centroid(), link * pose.scale);
        if state.points.is_empty() {
            break;
        }
        let (l, _) = scale_collision_loss(&state, &pose);
        let step = 0.02 * l.gradient[0] / state.points.len() as f64;
        pose = apply_step(&pose, &PoseGradient::new(step.max(1e-4), 0.0, 0.0, 0.0, 0.0));
    }
    assert!((0.75..=0.82).contains(&pose.scale), "{}", pose.scale);
}

#[test]
fn one_step_lifts_a_sunk_cube() {
    let cube = unit_cube();
    let samples = sample_surface(&cube, 400, 4);
    let link = DEFAULT_LINK_FACTOR * mean_nearest_neighbor_distance(&samples.points);
    let scene = SceneSdf::with_ground(0.0);
    let pose = Pose5DoF::new(1.0, 0.0, Vec3::new(0.0, 0.0, -0.2));
    let state = detect_collisions(&samples, &pose, &scene, &cube.centroid(), link);
    assert_eq!(state.n_cluster, 1);
    let g = translation_collision_loss(&state, &pose).gradient;
    let lifted = apply_step(&pose, &(0.5 * g));
    let depth = |p: &Pose5DoF| -cube.posed_aabb(p).min.z;
    assert!(depth(&lifted) < depth(&pose));
}

#[test]
fn stage_totals_pick_their_terms() {
    let v = |x: f64| LossValue { value: x, gradient: PoseGradient::repeat(x) };
    let terms = LossTerms { pose: v(1.0), trans: v(2.0), scale: v(3.0), stab: v(3.53919), ..Default::default() };
    let only_stab = LossWeights { pose: 0.0, three_d: 0.0, trans: 0.0, scale: 0.0, stab: 2.0, two_d: Some(0.0) };
    assert!((terms.total(&only_stab, Stage::Physics).value - 7.07838).abs() < 1e-12);
    assert_eq!(terms.total(&LossWeights::default(), Stage::Alignment).value, 1.0);
    assert_eq!(terms.total(&LossWeights::default(), Stage::Physics).value, 2.0 + 3.0 + 3.53919);
}
