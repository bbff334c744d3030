//! JSON bundle format.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    validate_bundle, Camera, CorrespondencePair, FloorRect, ParentRef, Role, SceneBundle, SceneGraph, SceneNode,
    Violation,
};
use crate::mesh::{load_mesh, MeshError};
use crate::pose::{normalize_yaw, Pose5DoF};
use crate::{Vec2, Vec3};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("mesh {mesh_ref}: {source}")]
    Mesh { mesh_ref: String, source: MeshError },
    #[error("invalid bundle: {0}")]
    Invalid(Violation),
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseFile {
    scale: f64,
    yaw: f64,
    translation: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeFile {
    id: String,
    mesh: String,
    parent: String,
    role: Role,
    pose: PoseFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct RigidFile {
    /// Row-major rotation.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    world_from_camera: RigidFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairFile {
    p_local: [f64; 3],
    q_world: [f64; 3],
    q_pixel: [f64; 2],
    confidence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleFile {
    #[serde(default)]
    ground_height: f64,
    #[serde(default)]
    camera: Option<CameraFile>,
    nodes: Vec<NodeFile>,
    #[serde(default)]
    correspondences: BTreeMap<String, Vec<PairFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floor: Option<FloorRect>,
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl From<&Camera> for CameraFile {
    fn from(c: &Camera) -> Self {
        let r = &c.rotation;
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            world_from_camera: RigidFile {
                rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
                translation: arr3(&c.translation),
            },
        }
    }
}

impl From<CameraFile> for Camera {
    fn from(c: CameraFile) -> Self {
        let rows = c.world_from_camera.rotation;
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: nalgebra::Matrix3::from_fn(|i, j| rows[i][j]),
            translation: Vec3::from(c.world_from_camera.translation),
        }
    }
}

impl BundleFile {
    fn from_bundle(b: &SceneBundle) -> Self {
        Self {
            ground_height: b.graph.ground_height,
            camera: b.camera.as_ref().map(CameraFile::from),
            nodes: b
                .graph
                .nodes
                .iter()
                .map(|n| NodeFile {
                    id: n.id.clone(),
                    mesh: n.mesh_ref.clone(),
                    parent: n.parent.as_str().to_owned(),
                    role: n.role,
                    pose: PoseFile { scale: n.pose.scale, yaw: n.pose.yaw, translation: arr3(&n.pose.translation) },
                })
                .collect(),
            correspondences: b
                .correspondences
                .iter()
                .map(|(id, pairs)| {
                    let pairs = pairs
                        .iter()
                        .map(|c| PairFile {
                            p_local: arr3(&c.p_local),
                            q_world: arr3(&c.q_world),
                            q_pixel: [c.q_pixel.x, c.q_pixel.y],
                            confidence: c.confidence,
                        })
                        .collect();
                    (id.clone(), pairs)
                })
                .collect(),
            floor: b.floor,
        }
    }
}

/// Parses a bundle and loads its meshes without validating invariants.
///
/// Mesh files that do not exist are left out of the mesh map, so the
/// dangling reference shows up in [`validate_bundle`] instead of as an I/O
/// error.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<SceneBundle, BundleError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
    let file: BundleFile = serde_json::from_str(&text)
        .map_err(|source| BundleError::Parse { path: path.display().to_string(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut meshes = BTreeMap::new();
    for n in &file.nodes {
        if meshes.contains_key(&n.mesh) {
            continue;
        }
        let mesh_path = base.join(&n.mesh);
        if !mesh_path.is_file() {
            continue;
        }
        let mesh = load_mesh(&mesh_path).map_err(|source| BundleError::Mesh { mesh_ref: n.mesh.clone(), source })?;
        meshes.insert(n.mesh.clone(), Arc::new(mesh));
    }

    let nodes = file
        .nodes
        .into_iter()
        .map(|n| {
            let yaw = if n.pose.yaw.is_finite() { normalize_yaw(n.pose.yaw) } else { n.pose.yaw };
            SceneNode {
                id: n.id,
                mesh_ref: n.mesh,
                pose: Pose5DoF { scale: n.pose.scale, yaw, translation: Vec3::from(n.pose.translation) },
                parent: ParentRef::parse(&n.parent),
                role: n.role,
            }
        })
        .collect();
    let correspondences = file
        .correspondences
        .into_iter()
        .map(|(id, pairs)| {
            let pairs = pairs
                .into_iter()
                .map(|p| CorrespondencePair {
                    p_local: Vec3::from(p.p_local),
                    q_world: Vec3::from(p.q_world),
                    q_pixel: Vec2::new(p.q_pixel[0], p.q_pixel[1]),
                    confidence: p.confidence,
                })
                .collect();
            (id, pairs)
        })
        .collect();
    Ok(SceneBundle {
        graph: SceneGraph { nodes, ground_height: file.ground_height },
        meshes,
        correspondences,
        camera: file.camera.map(Camera::from),
        floor: file.floor,
    })
}

/// Reads and validates a bundle, failing on the first violated invariant.
pub fn load_bundle(path: impl AsRef<Path>) -> Result<SceneBundle, BundleError> {
    let bundle = read_bundle(path)?;
    match validate_bundle(&bundle).into_iter().next() {
        Some(v) => Err(BundleError::Invalid(v)),
        None => Ok(bundle),
    }
}

/// Writes the bundle document. Mesh references are written verbatim; use
/// [`relative_path`] to rebase them when saving next to a different
/// directory than the source bundle.
pub fn save_bundle(bundle: &SceneBundle, path: impl AsRef<Path>) -> Result<(), BundleError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(&BundleFile::from_bundle(bundle))
        .expect("bundle documents always serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| BundleError::Io { path: path.display().to_string(), source })
}

fn absolute(p: &Path) -> PathBuf {
    let p = if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir().unwrap_or_default().join(p) };
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::ParentDir => {
                out.pop();
            }
            Component::CurDir => {}
            other => out.push(other),
        }
    }
    out
}

/// Path of `target` as seen from directory `from`.
pub fn relative_path(target: &Path, from: &Path) -> PathBuf {
    let (target, from) = (absolute(target), absolute(from));
    let t: Vec<_> = target.components().collect();
    let f: Vec<_> = from.components().collect();
    let common = t.iter().zip(&f).take_while(|(a, b)| a == b).count();
    let mut out = PathBuf::new();
    for _ in common..f.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Rule, GROUND};
    use proptest::prelude::*;

    const CUBE_OBJ: &str = "v -0.5 -0.5 0\nv 0.5 -0.5 0\nv 0.5 0.5 0\nv -0.5 0.5 0\nv -0.5 -0.5 1\nv 0.5 -0.5 1\nv 0.5 0.5 1\nv -0.5 0.5 1\nf 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8\n";

    fn write_scene(dir: &Path, json: &str) -> PathBuf {
        std::fs::write(dir.join("cube.obj"), CUBE_OBJ).unwrap();
        let p = dir.join("scene.json");
        std::fs::write(&p, json).unwrap();
        p
    }

    #[test]
    fn minimal_bundle_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_scene(
            dir.path(),
            r#"{"ground_height": 0, "camera": null, "nodes": [
                {"id": "a", "mesh": "cube.obj", "parent": "GROUND", "role": "anchor",
                 "pose": {"scale": 1, "yaw": 0, "translation": [0, 0, 0]}}]}"#,
        );
        let b = load_bundle(&p).unwrap();
        assert_eq!(b.graph.nodes.len(), 1);
        assert_eq!(b.graph.bfs_order(), ["a"]);
        assert_eq!(b.graph.nodes[0].parent, ParentRef::Ground);
    }

    #[test]
    fn load_reports_first_violation() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_scene(
            dir.path(),
            r#"{"nodes": [
                {"id": "a", "mesh": "cube.obj", "parent": "GROUND", "role": "anchor",
                 "pose": {"scale": 1, "yaw": 0, "translation": [0, 0, 0]}},
                {"id": "b", "mesh": "cube.obj", "parent": "GROUND", "role": "anchor",
                 "pose": {"scale": 1, "yaw": 0, "translation": [2, 0, 0]}}]}"#,
        );
        match load_bundle(&p) {
            Err(BundleError::Invalid(v)) => assert_eq!(v.rule, Rule::MultipleAnchors),
            other => panic!("expected multiple anchors, got {other:?}"),
        }
        std::fs::write(&p, "{not json").unwrap();
        assert!(matches!(load_bundle(&p), Err(BundleError::Parse { .. })));
    }

    #[test]
    fn relative_paths() {
        assert_eq!(relative_path(Path::new("/a/b/m.obj"), Path::new("/a/c")), PathBuf::from("../b/m.obj"));
        assert_eq!(relative_path(Path::new("/a/m.obj"), Path::new("/a")), PathBuf::from("m.obj"));
    }

    fn arb_bundle() -> impl Strategy<Value = SceneBundle> {
        let pose = (0.05f64..20.0, 0.0f64..std::f64::consts::TAU, prop::array::uniform3(-50.0f64..50.0))
            .prop_map(|(s, y, t)| Pose5DoF { scale: s, yaw: y, translation: Vec3::from(t) });
        let pair = (
            prop::array::uniform3(-1.0f64..1.0),
            prop::array::uniform3(-5.0f64..5.0),
            prop::array::uniform2(0.0f64..640.0),
            0.0f64..=1.0,
        )
            .prop_map(|(p, q, px, c)| CorrespondencePair {
                p_local: Vec3::from(p),
                q_world: Vec3::from(q),
                q_pixel: Vec2::new(px[0], px[1]),
                confidence: c,
            });
        (prop::collection::vec((pose, any::<prop::sample::Index>()), 1..8), prop::collection::vec(pair, 0..5), -1.0f64..1.0)
            .prop_map(|(nodes, pairs, ground)| {
                let mut out = Vec::new();
                for (i, (pose, parent)) in nodes.into_iter().enumerate() {
                    let (parent, role) = if i == 0 {
                        (ParentRef::Ground, Role::Anchor)
                    } else {
                        (ParentRef::Node(format!("n{}", parent.index(i))), Role::Child)
                    };
                    out.push(SceneNode { id: format!("n{i}"), mesh_ref: "cube.obj".into(), pose, parent, role });
                }
                let mut b = SceneBundle {
                    graph: SceneGraph { nodes: out, ground_height: ground },
                    meshes: BTreeMap::new(),
                    ..Default::default()
                };
                if !pairs.is_empty() {
                    b.correspondences.insert("n0".into(), pairs);
                    b.camera = Some(Camera::look_at(Vec3::new(0.0, -5.0, 2.0), Vec3::zeros(), 500.0, 500.0, 320.0, 240.0));
                }
                b
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_then_load_is_identity(mut bundle in arb_bundle()) {
            let dir = tempfile::tempdir().unwrap();
            std::fs::write(dir.path().join("cube.obj"), CUBE_OBJ).unwrap();
            let path = dir.path().join("scene.json");
            let cube = crate::mesh::load_mesh(dir.path().join("cube.obj")).unwrap();
            bundle.meshes.insert("cube.obj".into(), Arc::new(cube));
            prop_assert!(validate_bundle(&bundle).is_empty());
            save_bundle(&bundle, &path).unwrap();
            let back = load_bundle(&path).unwrap();
            prop_assert_eq!(&back, &bundle);
            // byte-stable on a second pass
            let again = dir.path().join("again.json");
            save_bundle(&back, &again).unwrap();
            prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
        }
    }

    #[test]
    fn ground_sentinel_round_trips() {
        assert_eq!(ParentRef::parse(GROUND), ParentRef::Ground);
        assert_eq!(ParentRef::parse("x").as_str(), "x");
    }
}
