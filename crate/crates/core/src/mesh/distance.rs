//! Exact point-to-mesh distance with sign from angle-weighted pseudonormals.

use std::collections::HashMap;

use super::bvh::Bvh;
use super::{Aabb, TriangleMesh};
use crate::Vec3;

/// Which part of a triangle a closest point falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Vertex(u8),
    /// Edge `k` joins vertex `k` and vertex `(k + 1) % 3`.
    Edge(u8),
    Face,
}

/// Closest point on triangle `abc` to `p` (Ericson's region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

/// Nearest-surface result for a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closest {
    pub point: Vec3,
    pub face: usize,
    /// Signed distance, negative strictly inside.
    pub distance: f64,
}

/// Exact signed distance to a triangle mesh.
///
/// Vertices are welded by exact position before pseudonormals are
/// accumulated, so meshes with split vertices along seams still sign
/// correctly. Sign is exact for closed, consistently oriented meshes.
#[derive(Debug, Clone)]
pub struct MeshSdf {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<Vec3>,
    edge_normals: Vec<[Vec3; 3]>,
    vertex_normals: Vec<[Vec3; 3]>,
    bvh: Bvh,
}

fn weld_key(p: &Vec3) -> [u64; 3] {
    // adding 0.0 folds -0.0 into +0.0
    [(p.x + 0.0).to_bits(), (p.y + 0.0).to_bits(), (p.z + 0.0).to_bits()]
}

impl MeshSdf {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let vertices = mesh.vertices().to_vec();
        let faces = mesh.faces().to_vec();

        let mut canon: HashMap<[u64; 3], usize> = HashMap::new();
        let weld: Vec<usize> =
            vertices.iter().enumerate().map(|(i, v)| *canon.entry(weld_key(v)).or_insert(i)).collect();

        let face_normals: Vec<Vec3> = faces
            .iter()
            .map(|f| {
                let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
                (b - a).cross(&(c - a)).normalize()
            })
            .collect();

        let mut vsum = vec![Vec3::zeros(); vertices.len()];
        let mut esum: HashMap<(usize, usize), Vec3> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            let n = face_normals[fi];
            for k in 0..3 {
                let (i, j, l) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                let e1 = (vertices[j] - vertices[i]).normalize();
                let e2 = (vertices[l] - vertices[i]).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vsum[weld[i]] += angle * n;
                let (wi, wj) = (weld[i], weld[j]);
                *esum.entry((wi.min(wj), wi.max(wj))).or_insert_with(Vec3::zeros) += n;
            }
        }
        let edge_normals = faces
            .iter()
            .map(|f| {
                [0, 1, 2].map(|k| {
                    let (wi, wj) = (weld[f[k]], weld[f[(k + 1) % 3]]);
                    esum[&(wi.min(wj), wi.max(wj))]
                })
            })
            .collect();
        let vertex_normals = faces.iter().map(|f| f.map(|i| vsum[weld[i]])).collect();

        let boxes: Vec<Aabb> = faces
            .iter()
            .map(|f| Aabb::from_points([&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]]))
            .collect();
        let bvh = Bvh::build(&boxes);
        Self { vertices, faces, face_normals, edge_normals, vertex_normals, bvh }
    }

    pub fn bounds(&self) -> Aabb {
        self.bvh.bounds()
    }

    pub fn closest(&self, p: &Vec3) -> Closest {
        let corners = |fi: usize| {
            let f = self.faces[fi];
            (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]])
        };
        let (face, d2) = self
            .bvh
            .nearest(p, |fi| {
                let (a, b, c) = corners(fi);
                (p - closest_point_on_triangle(p, &a, &b, &c).0).norm_squared()
            })
            .expect("mesh has faces");
        let (a, b, c) = corners(face);
        let (point, feature) = closest_point_on_triangle(p, &a, &b, &c);
        let normal = match feature {
            Feature::Face => self.face_normals[face],
            Feature::Edge(k) => self.edge_normals[face][k as usize],
            Feature::Vertex(k) => self.vertex_normals[face][k as usize],
        };
        let dist = d2.sqrt();
        let inside = (p - point).dot(&normal) < 0.0;
        Closest { point, face, distance: if inside { -dist } else { dist } }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.closest(p).distance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::primitives;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_sdf(p: &Vec3) -> f64 {
        // unit cube occupying [-0.5, 0.5]^2 x [0, 1]
        let q = (p - Vec3::new(0.0, 0.0, 0.5)).abs() - Vec3::repeat(0.5);
        q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), (a, Feature::Vertex(0)));
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.5, -1.0, 0.0), &a, &b, &c).1, Feature::Edge(0));
        assert_eq!(closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c).1, Feature::Edge(1));
        let (q, f) = closest_point_on_triangle(&Vec3::new(0.2, 0.2, 3.0), &a, &b, &c);
        assert_eq!(f, Feature::Face);
        assert!((q - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cube_distance_matches_analytic() {
        let sdf = MeshSdf::new(&primitives::unit_cube());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let p = Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.0..2.0));
            let got = sdf.signed_distance(&p);
            assert!((got - cube_sdf(&p)).abs() < 1e-12, "{p:?}: {got} vs {}", cube_sdf(&p));
        }
    }

    #[test]
    fn sphere_sign_matches_analytic() {
        let sdf = MeshSdf::new(&primitives::icosphere(1.0, 3));
        let center = Vec3::new(0.0, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = center + Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let analytic = (p - center).norm() - 1.0;
            let got = sdf.signed_distance(&p);
            assert!((got - analytic).abs() < 0.01, "{p:?}: {got} vs {analytic}");
        }
    }
}
