//! Loss terms over a single object's pose and their analytic gradients.
//!
//! Every gradient is with respect to `(scale, yaw, tx, ty, tz)`. Collision
//! targets are recomputed from the current pose and then held constant, so
//! the collision gradients are those of the frozen-target objectives.

mod cluster;

use std::collections::BTreeMap;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{BottomPoint, PointJacobian, SurfaceSamples};
use crate::pose::Pose5DoF;
use crate::scene::{Camera, CorrespondencePair};
use crate::sdf::{SceneSdf, SdfPart};
use crate::{PoseGradient, Vec3};

pub use cluster::count_clusters;

/// Cluster link radius as a multiple of the mean nearest-neighbor spacing
/// of the surface samples. Uniform random samples only percolate reliably
/// well above 2x; 5x keeps one contiguous contact patch in one cluster.
pub const DEFAULT_LINK_FACTOR: f64 = 5.0;

/// Below this length a centroid direction is treated as undefined.
pub const DIRECTION_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("no correspondence reaches the confidence threshold {tau}")]
    NoPairs { tau: f64 },
    #[error("correspondence {index} maps behind the camera")]
    BehindCamera { index: usize },
    #[error("2D alignment weight is positive but the bundle has no camera")]
    MissingCamera,
}

/// Weights of the loss terms. `two_d = None` means `1 / diagonal²` of the
/// camera image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub pose: f64,
    pub two_d: Option<f64>,
    pub three_d: f64,
    pub trans: f64,
    pub scale: f64,
    pub stab: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { pose: 1.0, two_d: None, three_d: 1.0, trans: 1.0, scale: 1.0, stab: 1.0 }
    }
}

impl LossWeights {
    /// The 2D weight in effect for `camera`.
    pub fn two_d_for(&self, camera: Option<&Camera>) -> f64 {
        match (self.two_d, camera) {
            (Some(w), _) => w,
            (None, Some(c)) => 1.0 / c.image_diagonal().powi(2),
            (None, None) => 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        let all = [self.pose, self.two_d.unwrap_or(0.0), self.three_d, self.trans, self.scale, self.stab];
        all.iter().all(|w| w.is_finite() && *w >= 0.0) && all.iter().any(|w| *w > 0.0)
    }
}

/// A loss value with its pose gradient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    pub value: f64,
    pub gradient: PoseGradient,
}

impl LossValue {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

impl Add for LossValue {
    type Output = LossValue;
    fn add(self, rhs: LossValue) -> LossValue {
        LossValue { value: self.value + rhs.value, gradient: self.gradient + rhs.gradient }
    }
}

impl Mul<LossValue> for f64 {
    type Output = LossValue;
    fn mul(self, rhs: LossValue) -> LossValue {
        LossValue { value: self * rhs.value, gradient: self * rhs.gradient }
    }
}

/// Jacobian of `W(local)` with respect to the pose.
pub fn point_jacobian(pose: &Pose5DoF, local: &Vec3) -> PointJacobian {
    let (ds, dyaw) = pose.point_jacobian(local);
    let mut j = PointJacobian::zeros();
    j.set_column(0, &ds);
    j.set_column(1, &dyaw);
    j.fixed_view_mut::<3, 3>(0, 2).fill_with_identity();
    j
}

/// Pairs with confidence at least `tau`, best first, at most `m` of them.
/// Ties keep input order.
pub fn select_pairs(pairs: &[CorrespondencePair], m: usize, tau: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].confidence >= tau).collect();
    idx.sort_by(|&a, &b| pairs[b].confidence.total_cmp(&pairs[a].confidence).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Mean squared 3D and pixel residuals of the best `m` correspondences,
/// combined as `λ2d·L2d + λ3d·L3d`.
pub fn pose_loss(
    pairs: &[CorrespondencePair],
    pose: &Pose5DoF,
    camera: Option<&Camera>,
    m: usize,
    tau: f64,
    weights: &LossWeights,
) -> Result<LossValue, LossError> {
    let chosen = select_pairs(pairs, m, tau);
    if chosen.is_empty() {
        return Err(LossError::NoPairs { tau });
    }
    let w2 = weights.two_d_for(camera);
    let camera = match camera {
        Some(c) if w2 > 0.0 => Some(c),
        None if w2 > 0.0 => return Err(LossError::MissingCamera),
        _ => None,
    };
    let n = chosen.len() as f64;
    let (mut l3, mut l2) = (LossValue::zero(), LossValue::zero());
    for &i in &chosen {
        let pair = &pairs[i];
        let world = pose.apply(&pair.p_local);
        let j = point_jacobian(pose, &pair.p_local);
        let r = world - pair.q_world;
        l3.value += r.norm_squared();
        l3.gradient += 2.0 * j.transpose() * r;
        if let Some(cam) = camera {
            let (pixel, dpix) = cam.project_with_jacobian(&world).ok_or(LossError::BehindCamera { index: i })?;
            let r2 = pixel - pair.q_pixel;
            l2.value += r2.norm_squared();
            l2.gradient += 2.0 * (dpix * j).transpose() * r2;
        }
    }
    Ok((weights.three_d / n) * l3 + (w2 / n) * l2)
}

/// A surface point found inside the scene field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollidedPoint {
    pub world: Vec3,
    /// Scene field value, `<= 0`.
    pub depth: f64,
    /// Index of the scene part the point collided with.
    pub part: usize,
    /// Scene field gradient at the point, used when the centroid direction
    /// is undefined.
    pub normal: Vec3,
}

/// Collided points of one object against a scene field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollisionState {
    pub points: Vec<CollidedPoint>,
    pub n_cluster: usize,
    /// Posed surface centroid.
    pub centroid: Vec3,
}

impl CollisionState {
    /// Clusters `points` separately per scene part. Against the `support`
    /// part only points deeper than `cluster_depth` count, so resting
    /// contact does not register as a cluster. Any collision at all counts
    /// as at least one cluster.
    pub fn from_points(
        points: Vec<CollidedPoint>,
        centroid: Vec3,
        link_radius: f64,
        cluster_depth: f64,
        support: Option<usize>,
    ) -> Self {
        let mut by_part: BTreeMap<usize, Vec<Vec3>> = BTreeMap::new();
        for c in &points {
            if Some(c.part) != support || c.depth <= -cluster_depth {
                by_part.entry(c.part).or_default().push(c.world);
            }
        }
        let mut n_cluster = by_part.values().map(|pts| count_clusters(pts, link_radius)).sum();
        if n_cluster == 0 && !points.is_empty() {
            n_cluster = 1;
        }
        Self { points, n_cluster, centroid }
    }

    /// Unit directions from each collided point toward the centroid.
    pub fn directions(&self) -> Vec<Vec3> {
        self.points
            .iter()
            .map(|c| {
                let u = self.centroid - c.world;
                let n = u.norm();
                if n < DIRECTION_EPS {
                    c.normal.try_normalize(0.0).unwrap_or_else(Vec3::z)
                } else {
                    u / n
                }
            })
            .collect()
    }

    /// Collision-free translation targets `T + û|d|`.
    pub fn translation_targets(&self, pose: &Pose5DoF) -> Vec<Vec3> {
        self.points.iter().zip(self.directions()).map(|(c, u)| pose.translation + u * c.depth.abs()).collect()
    }

    /// Per-point target scales `g·s`; `None` for points too close to the centroid.
    pub fn scale_targets(&self, pose: &Pose5DoF) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|c| {
                let len = (self.centroid - c.world).norm();
                (len >= DIRECTION_EPS).then(|| (len - c.depth.abs()) / len * pose.scale)
            })
            .collect()
    }
}

/// Collision state of a point set already in world coordinates. Points with
/// field value `<= 0` are collided; only those deeper than `cluster_depth`
/// take part in cluster counting.
pub fn collision_state(
    points: &[Vec3],
    scene: &SceneSdf,
    centroid: Vec3,
    link_radius: f64,
    cluster_depth: f64,
    support: Option<usize>,
) -> CollisionState {
    let hits: Vec<Option<CollidedPoint>> = crate::par::map(points, |p| {
        let (part, _) = scene.argmin(p)?;
        let (depth, normal) = scene.parts()[part].1.query_with_gradient(p);
        (depth <= 0.0).then_some(CollidedPoint { world: *p, depth, part, normal })
    });
    let points = hits.into_iter().flatten().collect();
    CollisionState::from_points(points, centroid, link_radius, cluster_depth, support)
}

/// Poses the samples and collects those inside the scene field.
pub fn detect_collisions(
    samples: &SurfaceSamples,
    pose: &Pose5DoF,
    scene: &SceneSdf,
    centroid: &Vec3,
    link_radius: f64,
) -> CollisionState {
    collision_state(&pose.apply_all(&samples.points), scene, pose.apply(centroid), link_radius, 0.0, None)
}

/// Squared distance to the collision-free translation targets,
/// `Σ‖T̂ᵢ − T‖² = Σ dᵢ²`.
pub fn translation_collision_loss(state: &CollisionState, pose: &Pose5DoF) -> LossValue {
    let mut out = LossValue::zero();
    for (target, c) in state.translation_targets(pose).iter().zip(&state.points) {
        let r = target - pose.translation;
        out.value += c.depth * c.depth;
        out.gradient.fixed_rows_mut::<3>(2).axpy(-2.0, &r, 1.0);
    }
    out
}

/// Squared distance to per-point target scales, active only when the
/// collided points form more than one cluster. Also returns how many points
/// were skipped for sitting on the centroid.
pub fn scale_collision_loss(state: &CollisionState, pose: &Pose5DoF) -> (LossValue, usize) {
    if state.n_cluster <= 1 {
        return (LossValue::zero(), 0);
    }
    let mut out = LossValue::zero();
    let mut skipped = 0;
    for target in state.scale_targets(pose) {
        match target {
            Some(s_hat) => {
                out.value += (s_hat - pose.scale).powi(2);
                out.gradient[0] += 2.0 * (pose.scale - s_hat);
            }
            None => skipped += 1,
        }
    }
    (out, skipped)
}

/// `Σ (1 − exp(−dᵢ²))` over bottom points measured in the parent field.
pub fn stability_loss(bottom: &[BottomPoint], parent: &SdfPart) -> LossValue {
    let mut out = LossValue::zero();
    for b in bottom {
        let (d, g) = parent.query_with_gradient(&b.world);
        let e = (-d * d).exp();
        out.value += 1.0 - e;
        out.gradient += (2.0 * d * e) * (b.jacobian.transpose() * g);
    }
    out
}

/// Which terms a stage optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Alignment,
    Physics,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Alignment => "alignment",
            Stage::Physics => "physics",
        }
    }
}

/// Unweighted loss terms at one pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub pose: LossValue,
    pub trans: LossValue,
    pub scale: LossValue,
    pub stab: LossValue,
    pub n_cluster: usize,
    pub skipped_scale_points: usize,
}

impl LossTerms {
    /// Weighted sum of the terms the stage optimizes.
    pub fn total(&self, weights: &LossWeights, stage: Stage) -> LossValue {
        match stage {
            Stage::Alignment => weights.pose * self.pose,
            Stage::Physics => weights.trans * self.trans + weights.scale * self.scale + weights.stab * self.stab,
        }
    }
}

/// Physics terms for a collision state and bottom samples.
pub fn physics_terms(state: &CollisionState, bottom: &[BottomPoint], parent: &SdfPart, pose: &Pose5DoF) -> LossTerms {
    let (scale, skipped) = scale_collision_loss(state, pose);
    LossTerms {
        pose: LossValue::zero(),
        trans: translation_collision_loss(state, pose),
        scale,
        stab: stability_loss(bottom, parent),
        n_cluster: state.n_cluster,
        skipped_scale_points: skipped,
    }
}
