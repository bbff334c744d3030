//! Randomized scenes with known resting layouts, and small fixture builders.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::primitives::{box_mesh, cylinder};
use crate::mesh::{sample_surface, write_obj_groups, Aabb, TriangleMesh};
use crate::pose::Pose5DoF;
use crate::scene::{
    save_bundle, BundleError, Camera, CorrespondencePair, FloorRect, ParentRef, Role, SceneBundle, SceneGraph,
    SceneNode,
};
use crate::Vec3;

/// Incremental bundle construction for tests and fixtures.
#[derive(Debug, Clone, Default)]
pub struct BundleBuilder {
    bundle: SceneBundle,
}

impl BundleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ground_height(mut self, h: f64) -> Self {
        self.bundle.graph.ground_height = h;
        self
    }

    pub fn camera(mut self, camera: Camera) -> Self {
        self.bundle.camera = Some(camera);
        self
    }

    pub fn floor(mut self, min: [f64; 2], max: [f64; 2]) -> Self {
        self.bundle.floor = Some(FloorRect { min, max });
        self
    }

    /// Adds a node whose mesh is registered as `<id>.obj`.
    pub fn node(mut self, id: &str, mesh: TriangleMesh, pose: Pose5DoF, parent: Option<&str>, role: Role) -> Self {
        let mesh_ref = format!("{id}.obj");
        self.bundle.meshes.insert(mesh_ref.clone(), Arc::new(mesh));
        self.bundle.graph.nodes.push(SceneNode {
            id: id.to_owned(),
            mesh_ref,
            pose,
            parent: parent.map_or(ParentRef::Ground, |p| ParentRef::Node(p.to_owned())),
            role,
        });
        self
    }

    pub fn anchor(self, id: &str, mesh: TriangleMesh, pose: Pose5DoF) -> Self {
        self.node(id, mesh, pose, None, Role::Anchor)
    }

    pub fn correspondences(mut self, id: &str, pairs: Vec<CorrespondencePair>) -> Self {
        self.bundle.correspondences.insert(id.to_owned(), pairs);
        self
    }

    pub fn build(self) -> SceneBundle {
        self.bundle
    }
}

/// Writes every mesh next to the bundle document, which goes to `path`.
pub fn write_bundle_dir(bundle: &SceneBundle, path: &Path) -> Result<(), BundleError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    for (mesh_ref, mesh) in &bundle.meshes {
        let file = dir.join(mesh_ref);
        std::fs::write(&file, write_obj_groups([(mesh_ref.as_str(), mesh.as_ref())]))
            .map_err(|source| BundleError::Io { path: file.display().to_string(), source })?;
    }
    save_bundle(bundle, path)
}

/// Default camera for synthetic scenes: above and in front of the origin.
pub fn suite_camera() -> Camera {
    Camera::look_at(Vec3::new(0.0, -6.0, 4.5), Vec3::new(0.0, 0.0, 0.4), 800.0, 800.0, 640.0, 480.0)
}

/// `n` exact correspondences for `mesh` at `pose`, confidences uniform in
/// `[conf_lo, 1)`.
pub fn correspondences_for(
    mesh: &TriangleMesh,
    pose: &Pose5DoF,
    camera: &Camera,
    n: usize,
    conf_lo: f64,
    seed: u64,
) -> Vec<CorrespondencePair> {
    let samples = sample_surface(mesh, n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    samples
        .points
        .iter()
        .map(|p| {
            let q = pose.apply(p);
            CorrespondencePair {
                p_local: *p,
                q_world: q,
                q_pixel: camera.project(&q).expect("fixture points are in front of the camera"),
                confidence: rng.random_range(conf_lo..1.0),
            }
        })
        .collect()
}

/// A single-object alignment problem with a known answer.
#[derive(Debug, Clone)]
pub struct PoseRecoveryCase {
    pub bundle: SceneBundle,
    pub truth: Pose5DoF,
    pub extent: f64,
}

/// Ground truth with scale in `[0.7, 1.3]`, yaw within ±45° and translation
/// within `0.3·extent`, observed through 100 noiseless correspondences; the
/// bundle starts at the identity pose.
pub fn pose_recovery_case(seed: u64) -> PoseRecoveryCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = box_mesh(Vec3::new(1.0, 0.6, 0.8));
    let extent = mesh.aabb().longest_side();
    let dir = loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            break v;
        }
    };
    let truth = Pose5DoF::new(
        rng.random_range(0.7..1.3),
        rng.random_range(-PI / 4.0..PI / 4.0),
        dir * 0.3 * extent,
    );
    let camera = suite_camera();
    let pairs = correspondences_for(&mesh, &truth, &camera, 100, 1.0 - 1e-9, seed);
    let pairs = pairs.into_iter().map(|p| CorrespondencePair { confidence: 1.0, ..p }).collect();
    let bundle = BundleBuilder::new()
        .camera(camera)
        .anchor("object", mesh, Pose5DoF::identity())
        .correspondences("object", pairs)
        .build();
    PoseRecoveryCase { bundle, truth, extent }
}

/// One randomized scene: the resting layout, the guidance layout the
/// correspondences point at, and the raw bundle to optimize.
#[derive(Debug, Clone)]
pub struct SuiteScene {
    pub truth: SceneBundle,
    pub guidance: SceneBundle,
    pub raw: SceneBundle,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Box(Vec3),
    Cylinder(f64, f64),
}

impl Shape {
    fn mesh(self) -> TriangleMesh {
        match self {
            Shape::Box(size) => box_mesh(size),
            Shape::Cylinder(r, h) => cylinder(r, h, 24),
        }
    }

    fn random(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Self {
        if rng.random_bool(0.6) {
            Shape::Box(Vec3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)))
        } else {
            Shape::Cylinder(rng.random_range(lo..hi) / 2.0, rng.random_range(lo..hi))
        }
    }
}

struct Placed {
    id: String,
    mesh: TriangleMesh,
    pose: Pose5DoF,
    parent: Option<String>,
    role: Role,
}

fn footprint(p: &Placed) -> Aabb {
    p.mesh.posed_aabb(&p.pose)
}

fn xy_gap(a: &Aabb, b: &Aabb) -> f64 {
    let dx = (a.min.x - b.max.x).max(b.min.x - a.max.x);
    let dy = (a.min.y - b.max.y).max(b.min.y - a.max.y);
    dx.max(dy)
}

/// Box-overlap depth along the shallowest axis, relative to the smaller box.
pub fn relative_box_overlap(a: &Aabb, b: &Aabb) -> f64 {
    let depth = (0..3)
        .map(|k| (a.max[k].min(b.max[k]) - a.min[k].max(b.min[k])).max(0.0))
        .fold(f64::INFINITY, f64::min);
    depth / a.longest_side().min(b.longest_side())
}

/// Half-width of the square room the suite scenes live in.
pub const ROOM_HALF: f64 = 3.5;

/// Deterministic scene with 5 to 10 convex objects.
///
/// The truth layout rests every object flat on its parent with clear gaps:
/// a table-sized anchor at the origin, floor objects around it, small
/// children on the anchor's top. Guidance perturbs the truth mildly
/// (small shifts into neighbors, floating and sinking); raw perturbs the
/// guidance further in scale, yaw and translation while keeping every
/// pairwise box overlap at most 30% of the smaller object.
pub fn suite_scene(seed: u64) -> SuiteScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED);
    let total = rng.random_range(5..=10usize);
    let n_children = rng.random_range(2..=(total - 3).min(4));
    let n_floor = total - 1 - n_children;

    let anchor_size = Vec3::new(rng.random_range(1.4..1.8), rng.random_range(0.8..1.0), rng.random_range(0.7..0.8));
    let mut placed = vec![Placed {
        id: "anchor".into(),
        mesh: box_mesh(anchor_size),
        pose: Pose5DoF::new(1.0, rng.random_range(-0.2..0.2), Vec3::zeros()),
        parent: None,
        role: Role::Anchor,
    }];

    for i in 0..n_floor {
        let mesh = Shape::random(&mut rng, 0.4, 0.9).mesh();
        for _ in 0..500 {
            let pose = Pose5DoF::new(
                1.0,
                rng.random_range(0.0..2.0 * PI),
                Vec3::new(rng.random_range(-2.6..2.6), rng.random_range(-2.6..2.6), 0.0),
            );
            let b = mesh.posed_aabb(&pose);
            let clear = placed.iter().filter(|p| p.parent.is_none()).all(|p| xy_gap(&footprint(p), &b) > 0.15);
            if clear && b.min.x > -ROOM_HALF + 0.3 && b.max.x < ROOM_HALF - 0.3 && b.min.y > -ROOM_HALF + 0.3 && b.max.y < ROOM_HALF - 0.3 {
                placed.push(Placed { id: format!("floor{i}"), mesh, pose, parent: None, role: Role::Parent });
                break;
            }
        }
    }

    let top = anchor_size.z;
    let anchor_pose = placed[0].pose;
    for i in 0..n_children {
        let mesh = Shape::random(&mut rng, 0.12, 0.28).mesh();
        for _ in 0..500 {
            let local = Vec3::new(
                rng.random_range(-0.35..0.35) * anchor_size.x,
                rng.random_range(-0.3..0.3) * anchor_size.y,
                top,
            );
            let at = anchor_pose.apply(&local);
            let pose = Pose5DoF::new(1.0, rng.random_range(0.0..2.0 * PI), at);
            let b = mesh.posed_aabb(&pose);
            let clear = placed.iter().filter(|p| p.parent.is_some()).all(|p| xy_gap(&footprint(p), &b) > 0.05);
            // stay well inside the anchor's top face
            let inside = mesh.vertices().iter().all(|v| {
                let l = anchor_pose.inverse_apply(&pose.apply(v));
                l.x.abs() < 0.45 * anchor_size.x && l.y.abs() < 0.45 * anchor_size.y
            });
            if clear && inside {
                placed.push(Placed {
                    id: format!("child{i}"),
                    mesh,
                    pose,
                    parent: Some("anchor".into()),
                    role: Role::Child,
                });
                break;
            }
        }
    }

    let truth_poses: Vec<Pose5DoF> = placed.iter().map(|p| p.pose).collect();

    // guidance: mild errors of the kind a depth-lifted layout shows
    let mut guidance_poses = truth_poses.clone();
    for (k, p) in placed.iter().enumerate().skip(1) {
        let extent = p.mesh.aabb().longest_side();
        let g = &mut guidance_poses[k];
        g.translation.x += rng.random_range(-0.04..0.04) * extent;
        g.translation.y += rng.random_range(-0.04..0.04) * extent;
        g.translation.z += match rng.random_range(0..3) {
            0 => rng.random_range(0.02..0.06) * extent,
            1 => -rng.random_range(0.02..0.06) * extent,
            _ => 0.0,
        };
        if rng.random_bool(0.4) {
            // lean toward the nearest other object
            let c = g.translation;
            let nearest = truth_poses
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k && placed[*j].parent == p.parent)
                .map(|(_, q)| q.translation)
                .min_by(|a, b| (a - c).xy().norm().total_cmp(&(b - c).xy().norm()));
            if let Some(q) = nearest {
                let other = placed.iter().position(|o| o.pose.translation == q).expect("nearest is placed");
                let dir = (q - c).xy();
                if dir.norm() > 1e-9 {
                    let other_box = footprint(&placed[other]);
                    let target = rng.random_range(0.02..0.12);
                    let unit = Vec3::new(dir.x, dir.y, 0.0).normalize();
                    let overlap = |t: f64| {
                        let moved = Pose5DoF { translation: g.translation + unit * t, ..*g };
                        relative_box_overlap(&p.mesh.posed_aabb(&moved), &other_box)
                    };
                    // bisect for the push that reaches the target overlap
                    let (mut lo, mut hi) = (0.0, dir.norm());
                    for _ in 0..50 {
                        let mid = 0.5 * (lo + hi);
                        if overlap(mid) < target {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    g.translation += unit * lo;
                }
            }
        }
    }

    // combined leans can compound; fall back to the truth for offenders
    loop {
        let boxes: Vec<Aabb> = placed.iter().zip(&guidance_poses).map(|(p, g)| p.mesh.posed_aabb(g)).collect();
        let offender = (1..placed.len()).find(|&k| {
            (0..k).any(|j| placed[j].parent == placed[k].parent && relative_box_overlap(&boxes[j], &boxes[k]) > 0.15)
        });
        match offender {
            Some(k) => guidance_poses[k] = truth_poses[k],
            None => break,
        }
    }

    // raw: larger errors, limited pairwise overlap
    let mut raw_poses = guidance_poses.clone();
    for k in 0..placed.len() {
        let extent = placed[k].mesh.aabb().longest_side();
        let mut amp = 1.0;
        for _ in 0..20 {
            let g = guidance_poses[k];
            let candidate = Pose5DoF::new(
                g.scale * (1.0 + amp * rng.random_range(-0.1..0.15)),
                g.yaw + amp * rng.random_range(-15f64..15.0).to_radians(),
                g.translation
                    + amp * Vec3::new(
                        rng.random_range(-0.15..0.15) * extent,
                        rng.random_range(-0.15..0.15) * extent,
                        rng.random_range(-0.05..0.05) * extent,
                    ),
            );
            let b = placed[k].mesh.posed_aabb(&candidate);
            let ok = (0..placed.len()).filter(|&j| j != k).all(|j| {
                let other = placed[j].mesh.posed_aabb(&raw_poses[j]);
                let related = placed[j].parent.as_deref() == Some(placed[k].id.as_str())
                    || placed[k].parent.as_deref() == Some(placed[j].id.as_str());
                let overlap = relative_box_overlap(&b, &other);
                // a child resting on its parent overlaps the parent's box by design
                overlap <= 0.3 || related && overlap <= 0.3 + b.extent().z / b.longest_side()
            });
            if ok {
                raw_poses[k] = candidate;
                break;
            }
            amp *= 0.7;
        }
    }

    let camera = suite_camera();
    let build = |poses: &[Pose5DoF], with_pairs: bool| {
        let mut b = BundleBuilder::new().camera(camera.clone()).floor([-ROOM_HALF; 2], [ROOM_HALF; 2]);
        for (k, p) in placed.iter().enumerate() {
            b = b.node(&p.id, p.mesh.clone(), poses[k], p.parent.as_deref(), p.role);
            if with_pairs {
                let pairs = correspondences_for(&p.mesh, &guidance_poses[k], &camera, 150, 0.3, seed ^ (k as u64 + 1) << 8);
                b = b.correspondences(&p.id, pairs);
            }
        }
        b.build()
    };
    SuiteScene { truth: build(&truth_poses, false), guidance: build(&guidance_poses, true), raw: build(&raw_poses, true) }
}

/// Copy of `bundle` with the node meshes and graph unchanged but every
/// correspondence set dropped.
pub fn without_correspondences(bundle: &SceneBundle) -> SceneBundle {
    SceneBundle { correspondences: BTreeMap::new(), ..bundle.clone() }
}

/// Graph-only view used by fixtures that place nodes by hand.
pub fn graph_of(bundle: &SceneBundle) -> &SceneGraph {
    &bundle.graph
}
