//! Scene bundle data model: graph, poses, camera, correspondences.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2x3, Matrix3};
use serde::{Deserialize, Serialize};

use crate::mesh::TriangleMesh;
use crate::pose::Pose5DoF;
use crate::{Vec2, Vec3};

pub use io::{load_bundle, read_bundle, relative_path, save_bundle, BundleError};

/// Sentinel parent id for objects resting on the ground plane.
pub const GROUND: &str = "GROUND";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Anchor,
    Parent,
    Child,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParentRef {
    Ground,
    Node(String),
}

impl ParentRef {
    pub fn parse(s: &str) -> Self {
        if s == GROUND {
            Self::Ground
        } else {
            Self::Node(s.to_owned())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Self::Ground => GROUND,
            Self::Node(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub id: String,
    pub mesh_ref: String,
    pub pose: Pose5DoF,
    pub parent: ParentRef,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneGraph {
    pub nodes: Vec<SceneNode>,
    pub ground_height: f64,
}

impl SceneGraph {
    pub fn node(&self, id: &str) -> Option<&SceneNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Level-order traversal from the ground.
    ///
    /// The anchor leads the first level; every other level (and the rest of
    /// the first) is sorted by id. Nodes unreachable from the ground (only
    /// possible in an invalid graph) are omitted.
    pub fn bfs_order(&self) -> Vec<String> {
        let mut children: BTreeMap<&str, Vec<&SceneNode>> = BTreeMap::new();
        for n in &self.nodes {
            children.entry(n.parent.as_str()).or_default().push(n);
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut seen = BTreeSet::new();
        let mut level: Vec<&SceneNode> = children.get(GROUND).cloned().unwrap_or_default();
        let mut first = true;
        while !level.is_empty() {
            level.sort_by(|a, b| {
                let anchor_first = first && (a.role == Role::Anchor) != (b.role == Role::Anchor);
                if anchor_first {
                    (b.role == Role::Anchor).cmp(&(a.role == Role::Anchor))
                } else {
                    a.id.cmp(&b.id)
                }
            });
            first = false;
            let mut next = Vec::new();
            for n in level {
                if seen.insert(n.id.as_str()) {
                    order.push(n.id.clone());
                    next.extend(children.get(n.id.as_str()).into_iter().flatten().copied());
                }
            }
            level = next;
        }
        order
    }
}

/// Pinhole camera. The camera frame is x right, y down, z forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Image size in pixels; defaults to twice the principal point.
    pub width: Option<f64>,
    pub height: Option<f64>,
    /// Columns are the camera axes expressed in world coordinates.
    pub rotation: Matrix3<f64>,
    /// Camera center in world coordinates.
    pub translation: Vec3,
}

impl Camera {
    /// Camera at `eye` looking toward `target` with world +z as up.
    pub fn look_at(eye: Vec3, target: Vec3, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&Vec3::z()).normalize();
        let down = forward.cross(&right);
        Self {
            fx,
            fy,
            cx,
            cy,
            width: Some(2.0 * cx),
            height: Some(2.0 * cy),
            rotation: Matrix3::from_columns(&[right, down, forward]),
            translation: eye,
        }
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation.transpose() * (world - self.translation)
    }

    /// Pixel of `world`, or `None` when it is not in front of the camera.
    pub fn project(&self, world: &Vec3) -> Option<Vec2> {
        let pc = self.to_camera(world);
        (pc.z > 0.0).then(|| Vec2::new(self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy))
    }

    /// Pixel and its Jacobian with respect to the world point.
    pub fn project_with_jacobian(&self, world: &Vec3) -> Option<(Vec2, Matrix2x3<f64>)> {
        let pc = self.to_camera(world);
        if pc.z <= 0.0 {
            return None;
        }
        let iz = 1.0 / pc.z;
        let pixel = Vec2::new(self.fx * pc.x * iz + self.cx, self.fy * pc.y * iz + self.cy);
        let dproj = Matrix2x3::new(
            self.fx * iz, 0.0, -self.fx * pc.x * iz * iz,
            0.0, self.fy * iz, -self.fy * pc.y * iz * iz,
        );
        Some((pixel, dproj * self.rotation.transpose()))
    }

    pub fn image_diagonal(&self) -> f64 {
        let w = self.width.unwrap_or(2.0 * self.cx);
        let h = self.height.unwrap_or(2.0 * self.cy);
        w.hypot(h)
    }

    pub fn is_valid(&self) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax() <= 1e-6;
        self.fx > 0.0
            && self.fy > 0.0
            && ortho
            && self.rotation.determinant() > 0.0
            && self.translation.iter().chain(self.rotation.iter()).all(|c| c.is_finite())
            && self.cx.is_finite()
            && self.cy.is_finite()
    }
}

/// A local surface point matched to a guidance-view target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondencePair {
    pub p_local: Vec3,
    pub q_world: Vec3,
    pub q_pixel: Vec2,
    pub confidence: f64,
}

/// Walkable floor rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorRect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneBundle {
    pub graph: SceneGraph,
    pub meshes: BTreeMap<String, Arc<TriangleMesh>>,
    pub correspondences: BTreeMap<String, Vec<CorrespondencePair>>,
    pub camera: Option<Camera>,
    /// Explicit floor extent; metrics fall back to the object footprints.
    pub floor: Option<FloorRect>,
}

impl SceneBundle {
    pub fn mesh_of(&self, node: &SceneNode) -> Option<&Arc<TriangleMesh>> {
        self.meshes.get(&node.mesh_ref)
    }

    /// Copy with every node's pose replaced from `poses` (by node id).
    pub fn with_poses(&self, poses: &HashMap<String, Pose5DoF>) -> Self {
        let mut out = self.clone();
        for n in &mut out.graph.nodes {
            if let Some(p) = poses.get(&n.id) {
                n.pose = *p;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    DuplicateId,
    NonpositiveScale,
    NonFinitePose,
    YawNotNormalized,
    DanglingMeshRef,
    DanglingParent,
    Cycle,
    MissingAnchor,
    MultipleAnchors,
    AnchorNotOnGround,
    ConfidenceOutOfRange,
    NonFiniteCorrespondence,
    UnknownCorrespondenceNode,
    MissingCamera,
    InvalidCamera,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DuplicateId => "duplicate id",
            Self::NonpositiveScale => "nonpositive scale",
            Self::NonFinitePose => "non-finite pose",
            Self::YawNotNormalized => "yaw not normalized",
            Self::DanglingMeshRef => "dangling mesh_ref",
            Self::DanglingParent => "dangling parent",
            Self::Cycle => "cycle",
            Self::MissingAnchor => "missing anchor",
            Self::MultipleAnchors => "multiple anchors",
            Self::AnchorNotOnGround => "anchor parent not ground",
            Self::ConfidenceOutOfRange => "confidence out of range",
            Self::NonFiniteCorrespondence => "non-finite correspondence",
            Self::UnknownCorrespondenceNode => "correspondences for unknown node",
            Self::MissingCamera => "missing camera",
            Self::InvalidCamera => "invalid camera",
        })
    }
}

/// One broken invariant. Scene-wide rules use the node id `"<scene>"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.node)
    }
}

const SCENE: &str = "<scene>";

/// Checks every bundle invariant; an empty result means the bundle is valid.
pub fn validate_bundle(bundle: &SceneBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |node: &str, rule| out.push(Violation { node: node.to_owned(), rule });
    let nodes = &bundle.graph.nodes;

    let mut ids = BTreeSet::new();
    for n in nodes {
        if !ids.insert(n.id.as_str()) || n.id == GROUND {
            flag(&n.id, Rule::DuplicateId);
        }
    }
    for n in nodes {
        let p = &n.pose;
        if !p.is_finite() {
            flag(&n.id, Rule::NonFinitePose);
        } else {
            if p.scale <= 0.0 {
                flag(&n.id, Rule::NonpositiveScale);
            }
            if !(0.0..std::f64::consts::TAU).contains(&p.yaw) {
                flag(&n.id, Rule::YawNotNormalized);
            }
        }
        if !bundle.meshes.contains_key(&n.mesh_ref) {
            flag(&n.id, Rule::DanglingMeshRef);
        }
        if let ParentRef::Node(pid) = &n.parent {
            if !ids.contains(pid.as_str()) {
                flag(&n.id, Rule::DanglingParent);
            }
        }
    }

    // cycles: walk parent links; a node is on a cycle if the walk returns to it
    let parent_of: HashMap<&str, &str> = nodes.iter().map(|n| (n.id.as_str(), n.parent.as_str())).collect();
    for n in nodes {
        let mut cur = n.parent.as_str();
        for _ in 0..nodes.len() {
            if cur == n.id {
                flag(&n.id, Rule::Cycle);
                break;
            }
            match parent_of.get(cur) {
                Some(next) => cur = next,
                None => break,
            }
        }
    }

    let anchors: Vec<&SceneNode> = nodes.iter().filter(|n| n.role == Role::Anchor).collect();
    if !nodes.is_empty() && anchors.is_empty() {
        flag(SCENE, Rule::MissingAnchor);
    }
    for extra in anchors.iter().skip(1) {
        flag(&extra.id, Rule::MultipleAnchors);
    }
    for a in &anchors {
        if a.parent != ParentRef::Ground {
            flag(&a.id, Rule::AnchorNotOnGround);
        }
    }

    for (id, pairs) in &bundle.correspondences {
        if !ids.contains(id.as_str()) {
            flag(id, Rule::UnknownCorrespondenceNode);
        }
        if pairs.iter().any(|c| !(0.0..=1.0).contains(&c.confidence)) {
            flag(id, Rule::ConfidenceOutOfRange);
        }
        let finite = |c: &CorrespondencePair| {
            c.p_local.iter().chain(c.q_world.iter()).chain(c.q_pixel.iter()).all(|x| x.is_finite())
        };
        if !pairs.iter().all(finite) {
            flag(id, Rule::NonFiniteCorrespondence);
        }
    }
    let has_pairs = bundle.correspondences.values().any(|v| !v.is_empty());
    match &bundle.camera {
        None if has_pairs => {
            let first = bundle.correspondences.iter().find(|(_, v)| !v.is_empty()).map(|(k, _)| k.as_str());
            flag(first.unwrap_or(SCENE), Rule::MissingCamera);
        }
        Some(cam) if !cam.is_valid() => flag(SCENE, Rule::InvalidCamera),
        _ => {}
    }
    if !bundle.graph.ground_height.is_finite() {
        flag(SCENE, Rule::NonFinitePose);
    }
    out
}
