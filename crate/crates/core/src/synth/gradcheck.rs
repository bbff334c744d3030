//! Finite-difference checks of the loss gradients on randomized states.
//!
//! The collision losses pull toward per-iteration targets that are held
//! constant, so their gradients are checked against the surrogate with
//! frozen targets (`Σ‖T̂ᵢ − T‖²`, `Σ(ŝᵢ − s)²`). Pose and stability losses
//! are checked against the loss itself. States where a piecewise quantity
//! switches inside the difference stencil (bounding-box extremal vertex,
//! grid cell of a bottom point) are flagged and excluded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::primitives::{box_mesh, unit_cube};
use super::suite::{correspondences_for, suite_camera};
use crate::losses::{
    detect_collisions, pose_loss, scale_collision_loss, stability_loss, translation_collision_loss, LossWeights,
    DEFAULT_LINK_FACTOR,
};
use crate::mesh::{mean_nearest_neighbor_distance, sample_surface, BottomPattern, PosedExtremes};
use crate::sdf::{GridSdf, SceneSdf, SdfPart};
use crate::{PoseGradient, Pose5DoF, Vec3};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub term: &'static str,
    pub checked: usize,
    pub flagged: usize,
    pub max_rel_err: f64,
}

/// Central differences of `f` in `(scale, yaw, tx, ty, tz)`.
pub fn central_difference(f: impl Fn(&Pose5DoF) -> f64, pose: &Pose5DoF, h: f64) -> PoseGradient {
    let base = pose.to_array();
    PoseGradient::from_fn(|k, _| {
        let mut plus = base;
        let mut minus = base;
        plus[k] += h;
        minus[k] -= h;
        (f(&Pose5DoF::from_array(plus)) - f(&Pose5DoF::from_array(minus))) / (2.0 * h)
    })
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(analytic: &PoseGradient, numeric: &PoseGradient) -> f64 {
    let scale = analytic.norm().max(numeric.norm());
    if scale < 1e-12 {
        0.0
    } else {
        (analytic - numeric).norm() / scale
    }
}

fn stencil(pose: &Pose5DoF, h: f64) -> impl Iterator<Item = Pose5DoF> {
    let base = pose.to_array();
    (0..10).map(move |i| {
        let mut a = base;
        a[i / 2] += if i % 2 == 0 { h } else { -h };
        Pose5DoF::from_array(a)
    })
}

fn random_pose(rng: &mut ChaCha8Rng, z: (f64, f64)) -> Pose5DoF {
    Pose5DoF::new(
        rng.random_range(0.7..1.3),
        rng.random_range(-3.0..3.0),
        Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(z.0..z.1)),
    )
}

fn summarize(term: &'static str, errors: &[Option<f64>]) -> GradCheck {
    let checked: Vec<f64> = errors.iter().flatten().copied().collect();
    GradCheck {
        term,
        checked: checked.len(),
        flagged: errors.len() - checked.len(),
        max_rel_err: checked.iter().copied().fold(0.0, f64::max),
    }
}

/// Pose loss (2D + 3D) with noisy correspondences.
pub fn check_pose_loss(states: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = box_mesh(Vec3::new(1.0, 0.6, 0.8));
    let camera = suite_camera();
    let weights = LossWeights::default();
    let errors: Vec<Option<f64>> = (0..states)
        .map(|i| {
            let truth = random_pose(&mut rng, (0.0, 0.3));
            let mut pairs = correspondences_for(&mesh, &truth, &camera, 120, 0.3, seed.wrapping_add(i as u64));
            for p in &mut pairs {
                p.q_world += Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), 0.0);
                p.q_pixel.x += rng.random_range(-3.0..3.0);
            }
            let pose = Pose5DoF::new(
                truth.scale * rng.random_range(0.9..1.1),
                truth.yaw + rng.random_range(-0.3..0.3),
                truth.translation + Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0),
            );
            let f = |p: &Pose5DoF| pose_loss(&pairs, p, Some(&camera), 100, 0.6, &weights).map(|l| l.value);
            let analytic = pose_loss(&pairs, &pose, Some(&camera), 100, 0.6, &weights).ok()?.gradient;
            if stencil(&pose, FD_STEP).any(|p| f(&p).is_err()) {
                return None;
            }
            let numeric = central_difference(|p| f(p).expect("checked above"), &pose, FD_STEP);
            Some(relative_error(&analytic, &numeric))
        })
        .collect();
    summarize("pose", &errors)
}

fn collision_scene() -> SceneSdf {
    let wall = GridSdf::build(&box_mesh(Vec3::new(0.4, 2.0, 1.5)), &Pose5DoF::new(1.0, 0.0, Vec3::new(0.75, 0.0, 0.0)), 64, None)
        .expect("fixture grid builds");
    SceneSdf::with_ground(0.0).with_part("wall", SdfPart::Grid(wall.into())).expect("unique id")
}

/// Translation collision loss against its frozen-target surrogate.
pub fn check_translation_loss(states: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cube = unit_cube();
    let samples = sample_surface(&cube, 400, seed);
    let link = DEFAULT_LINK_FACTOR * mean_nearest_neighbor_distance(&samples.points);
    let scene = collision_scene();
    let errors: Vec<Option<f64>> = (0..states)
        .map(|_| {
            let pose = random_pose(&mut rng, (-0.4, -0.05));
            let state = detect_collisions(&samples, &pose, &scene, &cube.centroid(), link * pose.scale);
            let targets = state.translation_targets(&pose);
            let surrogate = |p: &Pose5DoF| targets.iter().map(|t| (t - p.translation).norm_squared()).sum::<f64>();
            let analytic = translation_collision_loss(&state, &pose).gradient;
            Some(relative_error(&analytic, &central_difference(surrogate, &pose, FD_STEP)))
        })
        .collect();
    summarize("translation", &errors)
}

/// Scale collision loss against its frozen-target surrogate, with the
/// cluster gate forced open.
pub fn check_scale_loss(states: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cube = unit_cube();
    let samples = sample_surface(&cube, 400, seed);
    let link = DEFAULT_LINK_FACTOR * mean_nearest_neighbor_distance(&samples.points);
    let scene = collision_scene();
    let errors: Vec<Option<f64>> = (0..states)
        .map(|_| {
            let pose = random_pose(&mut rng, (-0.4, -0.05));
            let mut state = detect_collisions(&samples, &pose, &scene, &cube.centroid(), link * pose.scale);
            state.n_cluster = state.n_cluster.max(2);
            let targets: Vec<f64> = state.scale_targets(&pose).into_iter().flatten().collect();
            let surrogate = |p: &Pose5DoF| targets.iter().map(|t| (t - p.scale).powi(2)).sum::<f64>();
            let analytic = scale_collision_loss(&state, &pose).0.gradient;
            Some(relative_error(&analytic, &central_difference(surrogate, &pose, FD_STEP)))
        })
        .collect();
    summarize("scale", &errors)
}

fn cell_of(grid: &GridSdf, p: &Vec3) -> Option<[i64; 3]> {
    if !grid.bounds().contains(p) {
        return None;
    }
    let q = (p - grid.origin()) / grid.spacing();
    Some([q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64])
}

/// Stability loss on the ground (even states) and on a table grid (odd).
pub fn check_stability_loss(states: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = box_mesh(Vec3::new(0.4, 0.3, 0.2));
    let table = std::sync::Arc::new(
        GridSdf::build(&box_mesh(Vec3::new(2.0, 2.0, 0.8)), &Pose5DoF::identity(), 64, None).expect("fixture grid builds"),
    );
    let pattern = BottomPattern::new(16, seed);
    let errors: Vec<Option<f64>> = (0..states)
        .map(|i| {
            let (parent, top) = if i % 2 == 0 {
                (SdfPart::Ground { height: 0.0 }, 0.0)
            } else {
                (SdfPart::Grid(table.clone()), 0.8)
            };
            let mut pose = random_pose(&mut rng, (top - 0.08, top + 0.08));
            pose.translation.x *= 1.2;
            pose.translation.y *= 1.2;
            let f = |p: &Pose5DoF| stability_loss(&pattern.evaluate(&mesh, p), &parent).value;
            let extremes = PosedExtremes::new(&mesh, &pose);
            if stencil(&pose, FD_STEP).any(|p| PosedExtremes::new(&mesh, &p) != extremes) {
                return None;
            }
            if let SdfPart::Grid(g) = &parent {
                let cells: Vec<_> = pattern.evaluate(&mesh, &pose).iter().map(|b| cell_of(g, &b.world)).collect();
                let switches = stencil(&pose, FD_STEP).any(|p| {
                    pattern.evaluate(&mesh, &p).iter().zip(&cells).any(|(b, c)| cell_of(g, &b.world) != *c)
                });
                if switches || cells.iter().any(Option::is_none) {
                    return None;
                }
            }
            let analytic = stability_loss(&pattern.evaluate(&mesh, &pose), &parent).gradient;
            Some(relative_error(&analytic, &central_difference(f, &pose, FD_STEP)))
        })
        .collect();
    summarize("stability", &errors)
}

/// All four checks with `states` random states each.
pub fn check_all(states: usize, seed: u64) -> Vec<GradCheck> {
    vec![
        check_pose_loss(states, seed),
        check_translation_loss(states, seed),
        check_scale_loss(states, seed),
        check_stability_loss(states, seed),
    ]
}
