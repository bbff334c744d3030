//! Grid signed distance fields and their composition into a scene field.

pub(crate) mod cache;

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{Aabb, MeshSdf, TriangleMesh};
use crate::par;
use crate::pose::Pose5DoF;
use crate::Vec3;

pub use cache::cache_key;

pub const DEFAULT_RESOLUTION: usize = 64;

#[derive(Debug, Error)]
pub enum SdfError {
    #[error("resolution {0} is below the minimum of 8")]
    Resolution(usize),
    #[error("padding {padding} is below twice the grid spacing ({min})")]
    Padding { padding: f64, min: f64 },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("node {0} is already part of the scene field")]
    DuplicateNode(String),
    #[error("sdf cache {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("sdf cache {path}: {message}")]
    Format { path: String, message: String },
}

/// Signed distances sampled on a regular grid, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSdf {
    origin: Vec3,
    spacing: f64,
    dims: [usize; 3],
    values: Vec<f64>,
}

impl GridSdf {
    /// Samples the posed mesh's exact signed distance on a grid with
    /// `resolution` cells along the longest side of its bounding box.
    /// `padding` defaults to four cells.
    pub fn build(
        mesh: &TriangleMesh,
        pose: &Pose5DoF,
        resolution: usize,
        padding: Option<f64>,
    ) -> Result<Self, SdfError> {
        if resolution < 8 {
            return Err(SdfError::Resolution(resolution));
        }
        if mesh.faces().is_empty() {
            return Err(SdfError::EmptyMesh);
        }
        let posed = mesh.posed(pose);
        let bounds = posed.aabb();
        let spacing = bounds.longest_side() / resolution as f64;
        let padding = padding.unwrap_or(4.0 * spacing);
        if padding < 2.0 * spacing {
            return Err(SdfError::Padding { padding, min: 2.0 * spacing });
        }
        Ok(Self::sample(&MeshSdf::new(&posed), &bounds, spacing, padding))
    }

    /// Samples `exact` over `bounds` inflated by `padding`.
    pub fn sample(exact: &MeshSdf, bounds: &Aabb, spacing: f64, padding: f64) -> Self {
        let origin = bounds.min - Vec3::repeat(padding);
        let span = bounds.extent() + Vec3::repeat(2.0 * padding);
        let dims = [0, 1, 2].map(|a| (span[a] / spacing).ceil() as usize + 1);
        let [nx, ny, nz] = dims;
        let rows = par::map_range(ny * nz, |row| {
            let (j, k) = (row % ny, row / ny);
            (0..nx)
                .map(|i| {
                    let p = origin + Vec3::new(i as f64, j as f64, k as f64) * spacing;
                    exact.signed_distance(&p)
                })
                .collect::<Vec<f64>>()
        });
        Self { origin, spacing, dims, values: rows.concat() }
    }

    /// Wraps raw grid data. `values` must hold `dims` product entries, x fastest.
    pub fn from_parts(origin: Vec3, spacing: f64, dims: [usize; 3], values: Vec<f64>) -> Self {
        assert_eq!(values.len(), dims.iter().product::<usize>(), "value count does not match dims");
        assert!(dims.iter().all(|&d| d >= 2) && spacing > 0.0, "grid needs two points per axis");
        Self { origin, spacing, dims, values }
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> Aabb {
        let far = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        ) * self.spacing;
        Aabb { min: self.origin, max: self.origin + far }
    }

    pub fn value_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn grid_point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Trilinear value and its exact derivative at a point inside the grid box.
    fn trilinear(&self, p: &Vec3) -> (f64, Vec3) {
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let x = (p[a] - self.origin[a]) / self.spacing;
            let c = (x.floor().max(0.0) as usize).min(self.dims[a] - 2);
            cell[a] = c;
            t[a] = (x - c as f64).clamp(0.0, 1.0);
        }
        let [i, j, k] = cell;
        let c = |di: usize, dj: usize, dk: usize| self.value_at(i + di, j + dj, k + dk);
        let [tx, ty, tz] = t;
        let c00 = c(0, 0, 0) + (c(1, 0, 0) - c(0, 0, 0)) * tx;
        let c10 = c(0, 1, 0) + (c(1, 1, 0) - c(0, 1, 0)) * tx;
        let c01 = c(0, 0, 1) + (c(1, 0, 1) - c(0, 0, 1)) * tx;
        let c11 = c(0, 1, 1) + (c(1, 1, 1) - c(0, 1, 1)) * tx;
        let c0 = c00 + (c10 - c00) * ty;
        let c1 = c01 + (c11 - c01) * ty;
        let value = c0 + (c1 - c0) * tz;

        let dx0 = (c(1, 0, 0) - c(0, 0, 0)) + ((c(1, 1, 0) - c(0, 1, 0)) - (c(1, 0, 0) - c(0, 0, 0))) * ty;
        let dx1 = (c(1, 0, 1) - c(0, 0, 1)) + ((c(1, 1, 1) - c(0, 1, 1)) - (c(1, 0, 1) - c(0, 0, 1))) * ty;
        let dx = dx0 + (dx1 - dx0) * tz;
        let dy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * tz;
        let dz = c1 - c0;
        (value, Vec3::new(dx, dy, dz) / self.spacing)
    }

    /// Signed distance: trilinear inside the grid; outside, the value at the
    /// nearest grid-box point plus the distance to the box.
    pub fn query(&self, p: &Vec3) -> f64 {
        self.query_with_gradient(p).0
    }

    /// Value together with the exact derivative of [`GridSdf::query`]
    /// (piecewise, one-sided on cell faces).
    pub fn query_with_gradient(&self, p: &Vec3) -> (f64, Vec3) {
        let b = self.bounds();
        let c = b.clamp(p);
        let (v, mut g) = self.trilinear(&c);
        let off = p - c;
        let dist = off.norm();
        if dist == 0.0 {
            return (v, g);
        }
        for a in 0..3 {
            if off[a] != 0.0 {
                g[a] = 0.0;
            }
        }
        (v + dist, g + off / dist)
    }

    /// Central-difference gradient with step `spacing / 2`.
    pub fn query_gradient(&self, p: &Vec3) -> Vec3 {
        let h = self.spacing / 2.0;
        Vec3::from_fn(|a, _| {
            let e = Vec3::ith(a, h);
            (self.query(&(p + e)) - self.query(&(p - e))) / (2.0 * h)
        })
    }

    /// Values rounded to `f32`, matching what a cache file stores.
    pub fn to_f32_precision(mut self) -> Self {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
        self
    }
}

/// One component of a scene field.
#[derive(Debug, Clone, PartialEq)]
pub enum SdfPart {
    /// Half-space below `z = height`.
    Ground { height: f64 },
    Grid(Arc<GridSdf>),
}

impl SdfPart {
    pub fn query(&self, p: &Vec3) -> f64 {
        match self {
            SdfPart::Ground { height } => p.z - height,
            SdfPart::Grid(g) => g.query(p),
        }
    }

    /// Value and exact derivative of [`SdfPart::query`].
    pub fn query_with_gradient(&self, p: &Vec3) -> (f64, Vec3) {
        match self {
            SdfPart::Ground { height } => (p.z - height, Vec3::z()),
            SdfPart::Grid(g) => g.query_with_gradient(p),
        }
    }

    /// Central-difference gradient for grids, exact `(0, 0, 1)` for ground.
    pub fn query_gradient(&self, p: &Vec3) -> Vec3 {
        match self {
            SdfPart::Ground { .. } => Vec3::z(),
            SdfPart::Grid(g) => g.query_gradient(p),
        }
    }

    /// Grid spacing; ground is exact and reports zero.
    pub fn spacing(&self) -> f64 {
        match self {
            SdfPart::Ground { .. } => 0.0,
            SdfPart::Grid(g) => g.spacing(),
        }
    }
}

/// Pointwise minimum over named parts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneSdf {
    parts: Vec<(String, SdfPart)>,
}

/// Id under which the ground half-space is registered.
pub const GROUND_PART: &str = crate::scene::GROUND;

impl SceneSdf {
    /// A field with no parts; every query returns `+inf`.
    pub fn empty() -> Self {
        Self::default()
    }

    /// A field holding only the ground half-space.
    pub fn with_ground(height: f64) -> Self {
        Self { parts: vec![(GROUND_PART.to_owned(), SdfPart::Ground { height })] }
    }

    pub fn parts(&self) -> &[(String, SdfPart)] {
        &self.parts
    }

    pub fn part(&self, id: &str) -> Option<&SdfPart> {
        self.parts.iter().find(|(n, _)| n == id).map(|(_, p)| p)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.part(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Appends a part; ids must be unique.
    pub fn update(&mut self, id: &str, part: SdfPart) -> Result<(), SdfError> {
        if self.contains(id) {
            return Err(SdfError::DuplicateNode(id.to_owned()));
        }
        self.parts.push((id.to_owned(), part));
        Ok(())
    }

    /// Consuming form of [`SceneSdf::update`].
    pub fn with_part(mut self, id: &str, part: SdfPart) -> Result<Self, SdfError> {
        self.update(id, part)?;
        Ok(self)
    }

    pub fn query(&self, p: &Vec3) -> f64 {
        self.parts.iter().map(|(_, part)| part.query(p)).fold(f64::INFINITY, f64::min)
    }

    /// Index of the minimizing part; ties go to the lowest index.
    pub fn argmin(&self, p: &Vec3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, part)) in self.parts.iter().enumerate() {
            let d = part.query(p);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best
    }

    /// Central-difference gradient of the minimizing part.
    pub fn query_gradient(&self, p: &Vec3) -> Vec3 {
        match self.argmin(p) {
            Some((i, _)) => self.parts[i].1.query_gradient(p),
            None => Vec3::zeros(),
        }
    }

    /// Value and exact derivative of the minimizing part.
    pub fn query_with_gradient(&self, p: &Vec3) -> (f64, Vec3) {
        match self.argmin(p) {
            Some((i, _)) => self.parts[i].1.query_with_gradient(p),
            None => (f64::INFINITY, Vec3::zeros()),
        }
    }
}
