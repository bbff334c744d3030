//! Triangle meshes: OBJ ingestion, local-frame normalization, surface
//! sampling, and the exact geometric queries (closest point, BVH,
//! triangle-triangle crossing) that back the SDF and collision code.

pub mod bvh;
pub mod distance;
mod obj;
pub mod sampling;
pub mod tritri;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::Pose5DoF;
use crate::Vec3;

pub use distance::MeshSdf;
pub use obj::{parse_obj, write_obj_groups, ObjDocument, ObjGroup};
pub use sampling::{
    bottom_samples, feature_probes, mean_nearest_neighbor_distance, sample_surface, BottomPattern,
    BottomPoint, PointJacobian, PosedExtremes, SurfaceSamples,
};

/// Faces with area at or below this are dropped at construction (m²).
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("mesh has no non-degenerate faces")]
    Empty,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        points.into_iter().fold(Self::empty(), |b, p| b.including(p))
    }

    pub fn including(&self, p: &Vec3) -> Self {
        Self { min: self.min.inf(p), max: self.max.sup(p) }
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Self { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self { min: self.min.add_scalar(-margin), max: self.max.add_scalar(margin) }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn longest_side(&self) -> f64 {
        self.extent().max()
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    /// Nearest point of the box to `p`.
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        p.sup(&self.min).inf(&self.max)
    }

    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        (p - self.clamp(p)).norm_squared()
    }
}

/// Indexed triangle surface.
///
/// Construction validates indices and drops near-zero-area faces, counting
/// them in [`TriangleMesh::dropped_faces`]. Meshes loaded from disk are
/// additionally normalized so the bounding box has its minimum z at 0 and is
/// centered in x and y.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    dropped_faces: usize,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let count = vertices.len();
        let mut kept = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for (fi, f) in faces.into_iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= count) {
                return Err(MeshError::IndexOutOfRange { face: fi, index, count });
            }
            if triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) <= DEGENERATE_AREA {
                dropped += 1;
            } else {
                kept.push(f);
            }
        }
        if kept.is_empty() {
            return Err(MeshError::Empty);
        }
        Ok(Self { vertices, faces: kept, dropped_faces: dropped })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Number of degenerate faces removed at construction.
    pub fn dropped_faces(&self) -> usize {
        self.dropped_faces
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Shifts the mesh so its bounding box is centered in x/y with min z = 0.
    pub fn normalized(mut self) -> Self {
        let b = self.aabb();
        let shift = Vec3::new(-(b.min.x + b.max.x) / 2.0, -(b.min.y + b.max.y) / 2.0, -b.min.z);
        for v in &mut self.vertices {
            *v += shift;
        }
        self
    }

    /// Area-weighted mean of face centroids.
    pub fn centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let w = triangle_area(&a, &b, &c);
            acc += w * (a + b + c) / 3.0;
            total += w;
        }
        acc / total
    }

    /// A copy with every vertex mapped through `pose`; faces are unchanged.
    pub fn posed(&self, pose: &Pose5DoF) -> TriangleMesh {
        TriangleMesh {
            vertices: pose.apply_all(&self.vertices),
            faces: self.faces.clone(),
            dropped_faces: self.dropped_faces,
        }
    }

    /// Bounding box of the mesh after applying `pose`.
    pub fn posed_aabb(&self, pose: &Pose5DoF) -> Aabb {
        let r = pose.rotation();
        self.vertices
            .iter()
            .fold(Aabb::empty(), |b, v| b.including(&(pose.scale * (r * v) + pose.translation)))
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Reads an OBJ file and returns the normalized mesh of all its faces.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
    let doc = parse_obj(&text)?;
    let mesh = doc.into_mesh()?.normalized();
    if mesh.dropped_faces() > 0 {
        log::warn!("{}: dropped {} degenerate faces", path.display(), mesh.dropped_faces());
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::primitives;
    use proptest::prelude::*;

    #[test]
    fn cube_normalizes_to_bottom_center() {
        let raw = primitives::box_mesh_raw(Vec3::new(2.0, 3.0, 4.0), Vec3::new(0.5, 0.5, 0.5));
        let b = raw.normalized().aabb();
        assert_eq!(b.min, Vec3::new(-1.0, -1.5, 0.0));
        assert_eq!(b.max, Vec3::new(1.0, 1.5, 4.0));
    }

    #[test]
    fn drops_zero_area_faces() {
        let cube = primitives::unit_cube();
        let mut faces = cube.faces().to_vec();
        faces[3] = [0, 0, 1];
        let mesh = TriangleMesh::new(cube.vertices().to_vec(), faces).unwrap();
        assert_eq!(mesh.faces().len(), 11);
        assert_eq!(mesh.dropped_faces(), 1);
    }

    #[test]
    fn rejects_bad_index_and_empty() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(matches!(
            TriangleMesh::new(v.clone(), vec![[0, 1, 7]]),
            Err(MeshError::IndexOutOfRange { index: 7, .. })
        ));
        assert!(matches!(TriangleMesh::new(v, vec![]), Err(MeshError::Empty)));
    }

    #[test]
    fn centroid_fixtures() {
        assert!((primitives::unit_cube().centroid() - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-12);

        let tri = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        assert!((tri.centroid() - Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() < 1e-12);

        let shift = Vec3::new(5.0, 1.0, 2.0);
        let verts = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), shift, shift + Vec3::x(), shift + Vec3::y()];
        let two = TriangleMesh::new(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let expected = (Vec3::new(1.0, 1.0, 0.0) / 3.0 + (shift + Vec3::new(1.0, 1.0, 0.0) / 3.0)) / 2.0;
        assert!((two.centroid() - expected).norm() < 1e-12);
    }

    #[test]
    fn posed_changes_vertices_only() {
        let cube = primitives::unit_cube();
        let posed = cube.posed(&Pose5DoF::identity());
        assert_eq!(posed, cube);
        let moved = cube.posed(&Pose5DoF::new(2.0, 0.3, Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(moved.faces(), cube.faces());
    }

    proptest! {
        #[test]
        fn centroid_commutes_with_pose(s in 0.1f64..5.0, yaw in 0.0f64..std::f64::consts::TAU, t in prop::array::uniform3(-3.0f64..3.0)) {
            let mesh = primitives::cylinder(0.4, 0.9, 12);
            let pose = Pose5DoF::new(s, yaw, Vec3::from(t));
            let lhs = mesh.posed(&pose).centroid();
            let rhs = pose.apply(&mesh.centroid());
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }
}
