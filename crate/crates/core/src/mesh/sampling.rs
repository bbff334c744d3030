//! Area-weighted surface sampling and bounding-box bottom-face sampling.

use std::collections::BTreeSet;

use nalgebra::SMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriangleMesh;
use crate::pose::Pose5DoF;
use crate::Vec3;

/// Points drawn uniformly over a mesh surface, in the mesh's frame.
///
/// The per-point face index and barycentric weights are kept so the same
/// draws can be evaluated on a transformed copy of the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub seed: u64,
    pub faces: Vec<usize>,
    /// Weights of the face's second and third vertex.
    pub barycentric: Vec<[f64; 2]>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Evaluates the stored draws on `mesh`, which must share the topology
    /// of the sampled mesh.
    pub fn evaluate_on(&self, mesh: &TriangleMesh) -> Vec<Vec3> {
        self.faces
            .iter()
            .zip(&self.barycentric)
            .map(|(&f, &[u, v])| {
                let [a, b, c] = mesh.triangle(f);
                (1.0 - u - v) * a + u * b + v * c
            })
            .collect()
    }
}

/// Draws `n` points area-proportionally across faces and uniformly within
/// each face. Identical `(mesh, n, seed)` give identical points.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> SurfaceSamples {
    let mut cdf = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut faces = Vec::with_capacity(n);
    let mut barycentric = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let f = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        faces.push(f);
        barycentric.push([r1 * (1.0 - r2), r1 * r2]);
    }
    let mut samples = SurfaceSamples { points: Vec::new(), seed, faces, barycentric };
    samples.points = samples.evaluate_on(mesh);
    samples
}

/// Mean distance from each point to its nearest other point.
pub fn mean_nearest_neighbor_distance(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let nearest = crate::par::map_range(points.len(), |i| {
        points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| (points[i] - q).norm_squared())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    });
    nearest.iter().sum::<f64>() / points.len() as f64
}

/// Mesh vertices plus points spaced at most `max_spacing` along every edge,
/// deduplicated by exact position.
pub fn feature_probes(mesh: &TriangleMesh, max_spacing: f64) -> Vec<Vec3> {
    let key = |p: &Vec3| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |p: Vec3| {
        if seen.insert(key(&(p + Vec3::zeros()))) {
            out.push(p);
        }
    };
    let mut edges = BTreeSet::new();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for v in mesh.vertices() {
        push(*v);
    }
    for (a, b) in edges {
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let segments = ((pb - pa).norm() / max_spacing).ceil().max(1.0) as usize;
        for k in 1..segments {
            push(pa + (pb - pa) * (k as f64 / segments as f64));
        }
    }
    out
}

/// Jacobian of a world point with respect to `(scale, yaw, tx, ty, tz)`.
pub type PointJacobian = SMatrix<f64, 3, 5>;

/// A bottom-face sample and its derivative with respect to the pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BottomPoint {
    pub world: Vec3,
    pub jacobian: PointJacobian,
}

/// Fixed placement of `k` points on the bottom face of a posed bounding
/// box: the four corners and `k - 4` Latin-hypercube-stratified interior
/// points, stored as fractions of the face extent.
#[derive(Debug, Clone, PartialEq)]
pub struct BottomPattern {
    fractions: Vec<[f64; 2]>,
}

impl BottomPattern {
    /// # Panics
    /// If `k < 4`.
    pub fn new(k: usize, seed: u64) -> Self {
        assert!(k >= 4, "bottom pattern needs at least the 4 corners, got k = {k}");
        let mut fractions = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let interior = k - 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0770);
        let mut rows: Vec<usize> = (0..interior).collect();
        rows.shuffle(&mut rng);
        for (i, row) in rows.into_iter().enumerate() {
            let u = (i as f64 + rng.random::<f64>()) / interior as f64;
            let v = (row as f64 + rng.random::<f64>()) / interior as f64;
            fractions.push([u, v]);
        }
        Self { fractions }
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn fractions(&self) -> &[[f64; 2]] {
        &self.fractions
    }

    /// World positions and pose Jacobians of the pattern on the bottom face
    /// of `mesh`'s world-space bounding box under `pose`.
    ///
    /// The box corners are piecewise-smooth in the pose; derivatives use the
    /// currently extremal vertex of each side.
    pub fn evaluate(&self, mesh: &TriangleMesh, pose: &Pose5DoF) -> Vec<BottomPoint> {
        let ext = PosedExtremes::new(mesh, pose);
        let side = |idx: usize, axis: usize| -> (f64, PointJacobian) {
            let v = mesh.vertices()[idx];
            let (ds, dyaw) = pose.point_jacobian(&v);
            let mut j = PointJacobian::zeros();
            j[(axis, 0)] = ds[axis];
            j[(axis, 1)] = dyaw[axis];
            j[(axis, 2 + axis)] = 1.0;
            (pose.apply(&v)[axis], j)
        };
        let (x0, jx0) = side(ext.min[0], 0);
        let (x1, jx1) = side(ext.max[0], 0);
        let (y0, jy0) = side(ext.min[1], 1);
        let (y1, jy1) = side(ext.max[1], 1);
        let (z0, jz0) = side(ext.min[2], 2);
        self.fractions
            .iter()
            .map(|&[a, b]| BottomPoint {
                world: Vec3::new(x0 + a * (x1 - x0), y0 + b * (y1 - y0), z0),
                jacobian: jx0 * (1.0 - a) + jx1 * a + jy0 * (1.0 - b) + jy1 * b + jz0,
            })
            .collect()
    }
}

/// Indices of the vertices attaining the min/max of each world coordinate
/// (lowest index on ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PosedExtremes {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl PosedExtremes {
    pub fn new(mesh: &TriangleMesh, pose: &Pose5DoF) -> Self {
        let r = pose.rotation();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut out = Self { min: [0; 3], max: [0; 3] };
        for (i, v) in mesh.vertices().iter().enumerate() {
            let w = pose.scale * (r * v) + pose.translation;
            for a in 0..3 {
                if w[a] < lo[a] {
                    lo[a] = w[a];
                    out.min[a] = i;
                }
                if w[a] > hi[a] {
                    hi[a] = w[a];
                    out.max[a] = i;
                }
            }
        }
        out
    }
}

/// `k` world points on the bottom face of the posed mesh's bounding box:
/// the four corners first, then stratified interior points.
pub fn bottom_samples(mesh: &TriangleMesh, pose: &Pose5DoF, k: usize, seed: u64) -> Vec<Vec3> {
    BottomPattern::new(k, seed).evaluate(mesh, pose).into_iter().map(|b| b.world).collect()
}
