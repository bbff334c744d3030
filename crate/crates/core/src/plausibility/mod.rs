//! Physical-plausibility and interactivity metrics over a scene bundle.
//!
//! Collisions are decided on the exact posed meshes: triangle crossings
//! with a contact tolerance, plus penetration depth measured by probing one
//! mesh's surface against the other's exact signed distance. Stability is a
//! static support test. Reachability and walkability come from an
//! agent-inflated occupancy grid over the floor.

pub mod hull;
pub mod occupancy;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::bvh::Bvh;
use crate::mesh::tritri::triangles_cross;
use crate::mesh::{bottom_samples, feature_probes, sample_surface, Aabb, MeshSdf, TriangleMesh};
use crate::pose::Pose5DoF;
use crate::scene::{ParentRef, SceneBundle};
use crate::sdf::DEFAULT_RESOLUTION;
use crate::{par, Vec2, Vec3};
use hull::{convex_hull, hull_contains, polygon_area};
pub use occupancy::OccupancyGrid;

/// Surface samples per object used for penetration probing.
pub const PROBE_SAMPLES: usize = 400;
/// Deepest probes refined by local search on their face.
const REFINE_CANDIDATES: usize = 8;
/// Depths at or below this are reported as zero.
const DEPTH_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PlausibilityError {
    #[error("invalid metric parameters: {0}")]
    Params(String),
    #[error("scene floor extent has zero area")]
    DegenerateExtent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub agent_radius: f64,
    pub cell: f64,
    /// Contact tolerance; `None` uses the SDF grid spacing of the object
    /// (or of its parent, whichever is coarser).
    pub contact_tol: Option<f64>,
    pub bottom_k: usize,
    pub seed: u64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { agent_radius: 0.25, cell: 0.05, contact_tol: None, bottom_k: 16, seed: 0 }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<(), PlausibilityError> {
        let bad = |m: &str| Err(PlausibilityError::Params(m.to_owned()));
        if !(self.agent_radius > 0.0 && self.agent_radius.is_finite()) {
            return bad("agent_radius must be positive");
        }
        if !(self.cell > 0.0 && self.cell <= self.agent_radius) {
            return bad("cell must be positive and at most agent_radius");
        }
        if self.contact_tol.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return bad("contact_tol must be positive");
        }
        if self.bottom_k < 4 {
            return bad("bottom_k must be at least 4");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub id: String,
    pub collided: bool,
    pub stable: bool,
    pub reachable: bool,
    pub max_penetration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityReport {
    pub col_o: f64,
    pub col_s: f64,
    pub inst_o: f64,
    pub inst_s: f64,
    pub reach: f64,
    pub walk: f64,
    pub per_object: Vec<ObjectReport>,
    #[serde(skip)]
    pub diagnostics: Vec<String>,
}

impl PlausibilityReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Grid spacing the optimizer would use for this posed mesh.
pub fn sdf_spacing(bounds: &Aabb) -> f64 {
    bounds.longest_side() / DEFAULT_RESOLUTION as f64
}

/// A mesh in world frame with the acceleration structures the metrics need.
#[derive(Debug, Clone)]
pub struct PosedObject {
    pub mesh: TriangleMesh,
    pub sdf: MeshSdf,
    pub bounds: Aabb,
    pub spacing: f64,
    tri_bvh: Bvh,
    /// Surface samples as (face, barycentric) on `mesh`.
    samples: Vec<(usize, [f64; 2])>,
    probes: Vec<Vec3>,
}

impl PosedObject {
    pub fn new(mesh: &TriangleMesh, pose: &Pose5DoF, seed: u64) -> Self {
        let posed = mesh.posed(pose);
        let bounds = posed.aabb();
        let spacing = sdf_spacing(&bounds);
        let boxes: Vec<Aabb> = (0..posed.faces().len()).map(|f| Aabb::from_points(&posed.triangle(f))).collect();
        let drawn = sample_surface(mesh, PROBE_SAMPLES, seed);
        let mut samples: Vec<(usize, [f64; 2])> = drawn.faces.iter().copied().zip(drawn.barycentric.iter().copied()).collect();
        samples.extend((0..posed.faces().len()).map(|f| (f, [1.0 / 3.0; 2])));
        let probes = feature_probes(&posed, spacing.max(f64::MIN_POSITIVE));
        Self { sdf: MeshSdf::new(&posed), tri_bvh: Bvh::build(&boxes), mesh: posed, bounds, spacing, samples, probes }
    }

    fn point(&self, face: usize, [u, v]: [f64; 2]) -> Vec3 {
        let [a, b, c] = self.mesh.triangle(face);
        (1.0 - u - v) * a + u * b + v * c
    }
}

fn depth_in(sdf: &MeshSdf, p: &Vec3) -> f64 {
    (-sdf.signed_distance(p)).max(0.0)
}

/// Local maximization of the depth inside `dst` over one face of `src`.
fn refine_on_face(src: &PosedObject, dst: &PosedObject, face: usize, start: [f64; 2], start_depth: f64) -> f64 {
    let mut best = start;
    let mut best_depth = start_depth;
    let mut step = 0.125;
    let dirs = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
    let mut evals = 0;
    while step > 1e-9 && evals < 2000 {
        let mut improved = false;
        for d in dirs {
            let mut u = (best[0] + step * d[0]).max(0.0);
            let mut v = (best[1] + step * d[1]).max(0.0);
            if u + v > 1.0 {
                let excess = (u + v - 1.0) / 2.0;
                u = (u - excess).max(0.0);
                v = (1.0 - u).min(v - excess).max(0.0);
            }
            evals += 1;
            let depth = depth_in(&dst.sdf, &src.point(face, [u, v]));
            if depth > best_depth {
                best = [u, v];
                best_depth = depth;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best_depth
}

/// Deepest point of `src`'s surface inside `dst`.
fn directed_penetration(src: &PosedObject, dst: &PosedObject) -> f64 {
    if !src.bounds.overlaps(&dst.bounds) {
        return 0.0;
    }
    let mut best = src
        .probes
        .iter()
        .filter(|p| dst.bounds.contains(p))
        .map(|p| depth_in(&dst.sdf, p))
        .fold(0.0, f64::max);
    let mut seeds: Vec<(f64, usize)> = src
        .samples
        .iter()
        .enumerate()
        .filter_map(|(i, &(f, b))| {
            let p = src.point(f, b);
            if !dst.bounds.contains(&p) {
                return None;
            }
            let d = depth_in(&dst.sdf, &p);
            (d > 0.0).then_some((d, i))
        })
        .collect();
    seeds.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(d, i) in seeds.iter().take(REFINE_CANDIDATES) {
        let (face, bary) = src.samples[i];
        best = best.max(refine_on_face(src, dst, face, bary, d));
    }
    best
}

/// Whether any pair of triangles strictly crosses.
pub fn meshes_cross(a: &PosedObject, b: &PosedObject, tol: f64) -> bool {
    if !a.bounds.overlaps(&b.bounds) {
        return false;
    }
    a.tri_bvh.any_overlapping_pair(&b.tri_bvh, |i, j| triangles_cross(&a.mesh.triangle(i), &b.mesh.triangle(j), tol))
}

/// Collision verdict and penetration depth for two posed objects.
pub fn posed_pair_collision(a: &PosedObject, b: &PosedObject) -> (bool, f64) {
    let spacing = a.spacing.max(b.spacing);
    let pen = directed_penetration(a, b).max(directed_penetration(b, a));
    let pen = if pen <= DEPTH_FLOOR { 0.0 } else { pen };
    let collided = pen > spacing || meshes_cross(a, b, spacing / 2.0);
    (collided, pen)
}

/// Exact mesh-mesh collision test. Faces in resting contact do not collide.
pub fn exact_pair_collision(mesh_a: &TriangleMesh, pose_a: &Pose5DoF, mesh_b: &TriangleMesh, pose_b: &Pose5DoF) -> (bool, f64) {
    posed_pair_collision(&PosedObject::new(mesh_a, pose_a, 0), &PosedObject::new(mesh_b, pose_b, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityDiagnostics {
    pub contacts: usize,
    pub supported: bool,
    pub centroid_inside: bool,
    pub sunk: bool,
    /// Largest |parent distance| over the bottom samples.
    pub bottom_gap: f64,
}

/// Support surface an object rests on.
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    Ground(f64),
    Mesh(&'a MeshSdf),
}

impl Support<'_> {
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Support::Ground(h) => p.z - h,
            Support::Mesh(sdf) => sdf.signed_distance(p),
        }
    }
}

/// Static support test: enough spread-out contacts, centroid over their
/// hull, and nothing sunk below the support.
pub fn static_stability(
    mesh: &TriangleMesh,
    pose: &Pose5DoF,
    support: Support<'_>,
    contact_tol: f64,
    bottom_k: usize,
    seed: u64,
) -> (bool, StabilityDiagnostics) {
    let bottom = bottom_samples(mesh, pose, bottom_k, seed);
    let dist: Vec<f64> = bottom.iter().map(|p| support.distance(p)).collect();
    let contacts: Vec<Vec2> =
        bottom.iter().zip(&dist).filter(|(_, d)| d.abs() <= contact_tol).map(|(p, _)| p.xy()).collect();
    let hull = convex_hull(&contacts);
    let span = |axis: usize| {
        let lo = contacts.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let hi = contacts.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let area_eps = 1e-12 * (1.0 + span(0) * span(1));
    let supported = !contacts.is_empty()
        && ((hull.len() >= 3 && polygon_area(&hull) > area_eps) || (span(0) > contact_tol && span(1) > contact_tol));
    let centroid = pose.apply(&mesh.centroid()).xy();
    let centroid_inside = hull_contains(&hull, &centroid, 1e-9);
    let sunk = dist.iter().any(|d| *d < -contact_tol);
    let bottom_gap = dist.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let stable = supported && centroid_inside && !sunk;
    (stable, StabilityDiagnostics { contacts: contacts.len(), supported, centroid_inside, sunk, bottom_gap })
}

fn rate(flags: impl Iterator<Item = bool>) -> (f64, f64) {
    let (mut n, mut hit) = (0usize, 0usize);
    for f in flags {
        n += 1;
        hit += f as usize;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (hit as f64 / n as f64, if hit > 0 { 1.0 } else { 0.0 })
    }
}

struct Posed<'a> {
    bundle: &'a SceneBundle,
    ids: Vec<String>,
    objects: Vec<Option<PosedObject>>,
    index: HashMap<&'a str, usize>,
}

impl<'a> Posed<'a> {
    fn new(bundle: &'a SceneBundle, seed: u64) -> Self {
        let nodes = &bundle.graph.nodes;
        let objects = par::map(nodes, |n| bundle.mesh_of(n).map(|m| PosedObject::new(m, &n.pose, seed)));
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        Self { bundle, ids: nodes.iter().map(|n| n.id.clone()).collect(), objects, index }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionOutcome {
    pub col_o: f64,
    pub col_s: f64,
    pub collided: Vec<bool>,
    pub max_penetration: Vec<f64>,
}

fn collisions(posed: &Posed<'_>, params: &MetricParams) -> CollisionOutcome {
    let n = posed.objects.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let verdicts = par::map(&pairs, |&(i, j)| match (&posed.objects[i], &posed.objects[j]) {
        (Some(a), Some(b)) => posed_pair_collision(a, b),
        _ => (false, 0.0),
    });
    let mut collided = vec![false; n];
    let mut pen = vec![0.0f64; n];
    for (&(i, j), &(hit, depth)) in pairs.iter().zip(&verdicts) {
        collided[i] |= hit;
        collided[j] |= hit;
        pen[i] = pen[i].max(depth);
        pen[j] = pen[j].max(depth);
    }
    let h = posed.bundle.graph.ground_height;
    for (i, obj) in posed.objects.iter().enumerate() {
        if let Some(obj) = obj {
            let tol = params.contact_tol.unwrap_or(obj.spacing);
            let sink = h - obj.bounds.min.z;
            if sink > DEPTH_FLOOR {
                pen[i] = pen[i].max(sink);
            }
            collided[i] |= sink > tol;
        }
    }
    let (col_o, col_s) = rate(collided.iter().copied());
    CollisionOutcome { col_o, col_s, collided, max_penetration: pen }
}

/// Object and scene collision rates with per-object flags.
pub fn collision_metrics(bundle: &SceneBundle, params: &MetricParams) -> CollisionOutcome {
    collisions(&Posed::new(bundle, params.seed), params)
}

fn stability(posed: &Posed<'_>, params: &MetricParams) -> (Vec<bool>, Vec<Option<StabilityDiagnostics>>) {
    let nodes = &posed.bundle.graph.nodes;
    let results = par::map_range(nodes.len(), |i| {
        let node = &nodes[i];
        let (Some(mesh), Some(obj)) = (posed.bundle.mesh_of(node), &posed.objects[i]) else {
            return None;
        };
        let (support, parent_spacing) = match &node.parent {
            ParentRef::Ground => (Support::Ground(posed.bundle.graph.ground_height), 0.0),
            ParentRef::Node(p) => {
                let parent = posed.objects[*posed.index.get(p.as_str())?].as_ref()?;
                (Support::Mesh(&parent.sdf), parent.spacing)
            }
        };
        let tol = params.contact_tol.unwrap_or(obj.spacing.max(parent_spacing));
        Some(static_stability(mesh, &node.pose, support, tol, params.bottom_k, params.seed))
    });
    let stable = results.iter().map(|r| r.as_ref().is_some_and(|(s, _)| *s)).collect();
    (stable, results.into_iter().map(|r| r.map(|(_, d)| d)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityOutcome {
    pub inst_o: f64,
    pub inst_s: f64,
    pub stable: Vec<bool>,
    pub diagnostics: Vec<Option<StabilityDiagnostics>>,
}

/// Object and scene instability rates under the static support test.
pub fn instability_metrics(bundle: &SceneBundle, params: &MetricParams) -> InstabilityOutcome {
    let (stable, diagnostics) = stability(&Posed::new(bundle, params.seed), params);
    let (inst_o, inst_s) = rate(stable.iter().map(|s| !s));
    InstabilityOutcome { inst_o, inst_s, stable, diagnostics }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interactivity {
    pub walk: f64,
    pub reach: f64,
    pub reachable: Vec<bool>,
    pub grid: OccupancyGrid,
    pub diagnostics: Vec<String>,
}

/// Floor-level ancestor of each node (itself when resting on the ground).
fn floor_ancestors(bundle: &SceneBundle) -> Vec<usize> {
    let nodes = &bundle.graph.nodes;
    (0..nodes.len())
        .map(|mut i| {
            for _ in 0..nodes.len() {
                match &nodes[i].parent {
                    ParentRef::Ground => break,
                    ParentRef::Node(p) => match bundle.graph.index_of(p) {
                        Some(j) => i = j,
                        None => break,
                    },
                }
            }
            i
        })
        .collect()
}

/// Walkable-area ratio and object reachability on the agent-inflated grid.
///
/// Objects resting on another object are reached through the footprint of
/// their floor-level ancestor.
pub fn interactivity(bundle: &SceneBundle, params: &MetricParams) -> Result<Interactivity, PlausibilityError> {
    params.validate()?;
    let nodes = &bundle.graph.nodes;
    let footprints: Vec<Vec<Vec2>> = nodes
        .iter()
        .map(|n| bundle.mesh_of(n).map(|m| m.vertices().iter().map(|v| n.pose.apply(v).xy()).collect()).unwrap_or_default())
        .collect();
    let (lo, hi) = match &bundle.floor {
        Some(f) => (Vec2::from(f.min), Vec2::from(f.max)),
        None => footprints.iter().flatten().fold(
            (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        ),
    };
    let size = hi - lo;
    if !(size.x > 0.0 && size.y > 0.0 && size.x.is_finite() && size.y.is_finite()) {
        return Err(PlausibilityError::DegenerateExtent);
    }
    let r = params.agent_radius;
    let origin = lo - Vec2::repeat(r);
    let dims = [((size.x + 2.0 * r) / params.cell).ceil() as usize, ((size.y + 2.0 * r) / params.cell).ceil() as usize];
    let mut grid = OccupancyGrid { origin, cell: params.cell, dims, occupied: vec![false; dims[0] * dims[1]] };
    let masks: Vec<Vec<bool>> = par::map(&footprints, |fp| {
        if fp.is_empty() {
            Vec::new()
        } else {
            grid.footprint_mask(fp, r)
        }
    });
    for mask in &masks {
        for (o, m) in grid.occupied.iter_mut().zip(mask) {
            *o |= m;
        }
    }

    let mut diagnostics = Vec::new();
    let (label, sizes) = grid.free_components();
    let free: usize = sizes.iter().sum();
    let (largest, walk) = match sizes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) {
        Some((id, &n)) => (Some(id), n as f64 / free as f64),
        None => {
            diagnostics.push("no free space on the floor".to_owned());
            (None, 0.0)
        }
    };

    let [nx, ny] = dims;
    let touches_main = |mask: &[bool]| {
        let Some(main) = largest else { return false };
        (0..nx * ny).any(|c| {
            if label[c] != main {
                return false;
            }
            let (i, j) = ((c % nx) as i64, (c / nx) as i64);
            (-1..=1i64).any(|dj| {
                (-1..=1i64).any(|di| {
                    let (a, b) = (i + di, j + dj);
                    a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny && mask[a as usize + nx * b as usize]
                })
            })
        })
    };
    let ancestors = floor_ancestors(bundle);
    let reachable: Vec<bool> =
        ancestors.iter().map(|&a| !masks[a].is_empty() && touches_main(&masks[a])).collect();
    let reach = if nodes.is_empty() {
        diagnostics.push("no objects; reachability is vacuously 1".to_owned());
        1.0
    } else {
        rate(reachable.iter().copied()).0
    };
    Ok(Interactivity { walk, reach, reachable, grid, diagnostics })
}

/// Full metric report for a bundle.
pub fn evaluate(bundle: &SceneBundle, params: &MetricParams) -> Result<PlausibilityReport, PlausibilityError> {
    params.validate()?;
    let posed = Posed::new(bundle, params.seed);
    let col = collisions(&posed, params);
    let (stable, _) = stability(&posed, params);
    let (inst_o, inst_s) = rate(stable.iter().map(|s| !s));
    let inter = interactivity(bundle, params)?;
    let per_object = posed
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| ObjectReport {
            id: id.clone(),
            collided: col.collided[i],
            stable: stable[i],
            reachable: inter.reachable[i],
            max_penetration: col.max_penetration[i],
        })
        .collect();
    Ok(PlausibilityReport {
        col_o: col.col_o,
        col_s: col.col_s,
        inst_o,
        inst_s,
        reach: inter.reach,
        walk: inter.walk,
        per_object,
        diagnostics: inter.diagnostics,
    })
}
