//! Scene-graph traversal and per-object two-stage gradient descent.
//!
//! Nodes are refined one at a time in breadth-first order. Each node first
//! aligns to its correspondences, then settles against the field of every
//! node finalized before it plus the ground. Its own field joins the scene
//! only once its pose is final.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{
    collision_state, physics_terms, pose_loss, CollidedPoint, CollisionState, LossTerms, LossValue, LossWeights, Stage,
    DEFAULT_LINK_FACTOR,
};
use crate::mesh::{feature_probes, mean_nearest_neighbor_distance, sample_surface, Aabb, BottomPattern, TriangleMesh};
use crate::pose::{normalize_yaw, Pose5DoF};
use crate::scene::{validate_bundle, CorrespondencePair, ParentRef, SceneBundle, Violation};
use crate::sdf::cache::{fnv1a, FNV_OFFSET};
use crate::sdf::{cache_key, GridSdf, SceneSdf, SdfError, SdfPart};
use crate::{par, PoseGradient, Vec3};

/// Loss-change window for the convergence test.
const WINDOW: usize = 10;
/// Step halvings tried before a stage is declared stalled.
const MAX_HALVINGS: usize = 12;
pub const MIN_SCALE: f64 = 0.05;
pub const MAX_SCALE: f64 = 20.0;
/// Contacts with the parent shallower than this many grid cells do not
/// count toward clusters.
const CLUSTER_DEPTH: f64 = 0.5;

/// Cumulative ablation rows: no optimization, alignment only, alignment
/// plus collision terms, everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    Raw,
    Pose,
    Collision,
    #[default]
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [Self::Raw, Self::Pose, Self::Collision, Self::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Pose => "pose",
            Self::Collision => "collision",
            Self::Full => "full",
        }
    }
}

impl FromStr for AblationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}, expected raw|pose|collision|full"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub max_iters_alignment: usize,
    pub max_iters_physics: usize,
    pub rate_scale: f64,
    pub rate_yaw: f64,
    pub rate_translation: f64,
    pub convergence_tol: f64,
    pub n_surface: usize,
    pub m_pairs: usize,
    pub tau: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Grid cells along the longest side of each object.
    pub resolution: usize,
    pub bottom_k: usize,
    /// Cluster link radius in multiples of the mean sample spacing.
    pub link_factor: f64,
    /// Per-iteration limits: relative scale change, yaw in radians, and
    /// translation as a fraction of the object's longest side.
    pub max_step_scale: f64,
    pub max_step_yaw: f64,
    pub max_step_translation: f64,
    pub mode: AblationMode,
    /// Directory for cached grids; cached runs use f32-rounded grids.
    pub sdf_cache: Option<PathBuf>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iters_alignment: 300,
            max_iters_physics: 300,
            rate_scale: 0.02,
            rate_yaw: 0.05,
            rate_translation: 0.05,
            convergence_tol: 1e-9,
            n_surface: 400,
            m_pairs: 100,
            tau: 0.6,
            seed: 0,
            weights: LossWeights::default(),
            resolution: crate::sdf::DEFAULT_RESOLUTION,
            bottom_k: 16,
            link_factor: DEFAULT_LINK_FACTOR,
            max_step_scale: 0.05,
            max_step_yaw: 0.1,
            max_step_translation: 0.05,
            mode: AblationMode::Full,
            sdf_cache: None,
        }
    }
}

impl OptimConfig {
    /// Checks every invariant, naming the first offending field.
    pub fn validate(&self) -> Result<(), OptimError> {
        let positive = [
            ("rate_scale", self.rate_scale),
            ("rate_yaw", self.rate_yaw),
            ("rate_translation", self.rate_translation),
            ("convergence_tol", self.convergence_tol),
            ("link_factor", self.link_factor),
            ("max_step_scale", self.max_step_scale),
            ("max_step_yaw", self.max_step_yaw),
            ("max_step_translation", self.max_step_translation),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OptimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_surface == 0 || self.m_pairs == 0 {
            return Err(OptimError::Config("n_surface and m_pairs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(OptimError::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.bottom_k < 4 {
            return Err(OptimError::Config(format!("bottom_k must be at least 4, got {}", self.bottom_k)));
        }
        if self.resolution < 8 {
            return Err(OptimError::Config(format!("resolution must be at least 8, got {}", self.resolution)));
        }
        if !self.weights.is_valid() {
            return Err(OptimError::Config("loss weights must be nonnegative with at least one positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid bundle: {0}")]
    Bundle(Violation),
    #[error(transparent)]
    Sdf(#[from] SdfError),
}

/// One evaluated state. Loss terms are unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: Stage,
    pub iter: usize,
    #[serde(rename = "L_pose")]
    pub l_pose: f64,
    #[serde(rename = "L_trans")]
    pub l_trans: f64,
    #[serde(rename = "L_scale")]
    pub l_scale: f64,
    #[serde(rename = "L_stab")]
    pub l_stab: f64,
    pub pose: Pose5DoF,
}

/// Everything recorded while refining one node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimTrace {
    pub node: String,
    pub records: Vec<TraceRecord>,
    /// Scene-field part ids present when the node started.
    pub scene_parts: Vec<String>,
    pub diagnostics: Vec<String>,
    pub aborted: bool,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    node: &'a str,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

impl OptimTrace {
    /// Newline-delimited JSON, one object per record.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::to_string(&TraceLine { node: &self.node, record: r })
                .expect("trace records always serialize");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Per-node geometry that stays fixed while the node is refined.
pub struct NodeGeometry {
    pub mesh: Arc<TriangleMesh>,
    /// Surface samples followed by vertex and edge probes, local frame.
    pub probes: Vec<Vec3>,
    pub centroid: Vec3,
    /// Mean nearest-neighbor spacing of the surface samples, local frame.
    pub sample_spacing: f64,
    /// Field of the mesh at the identity pose, for probing neighbors.
    pub local_sdf: Arc<GridSdf>,
    pub bottom: BottomPattern,
}

impl NodeGeometry {
    pub fn new(mesh: Arc<TriangleMesh>, seed: u64, config: &OptimConfig, local_sdf: Arc<GridSdf>) -> Self {
        let samples = sample_surface(&mesh, config.n_surface, seed);
        let sample_spacing = mean_nearest_neighbor_distance(&samples.points).max(1e-9);
        let mut probes = samples.points;
        probes.extend(feature_probes(&mesh, sample_spacing));
        Self {
            centroid: mesh.centroid(),
            probes,
            sample_spacing,
            local_sdf,
            bottom: BottomPattern::new(config.bottom_k, seed),
            mesh,
        }
    }
}

/// A finalized neighbor as seen by later nodes.
pub struct PlacedNode {
    pub id: String,
    pub bounds: Aabb,
    /// World-frame probes at the final pose.
    pub probes: Vec<Vec3>,
}

/// Inputs for refining one node against an already composed scene.
pub struct NodeProblem<'a> {
    pub id: &'a str,
    pub geometry: &'a NodeGeometry,
    pub pairs: &'a [CorrespondencePair],
    pub camera: Option<&'a crate::Camera>,
    pub scene: &'a SceneSdf,
    pub parent: &'a SdfPart,
    /// Index of the parent among the scene parts.
    pub support: Option<usize>,
    pub placed: &'a [PlacedNode],
    pub config: &'a OptimConfig,
}

impl NodeProblem<'_> {
    /// Collided points of the node's probes in the scene field plus placed
    /// neighbors' probes inside the node.
    pub fn collisions(&self, pose: &Pose5DoF) -> CollisionState {
        let g = self.geometry;
        let link = self.config.link_factor * g.sample_spacing * pose.scale;
        let cluster_depth = CLUSTER_DEPTH * g.local_sdf.spacing() * pose.scale;
        let centroid = pose.apply(&g.centroid);
        let world = pose.apply_all(&g.probes);
        let mut state = collision_state(&world, self.scene, centroid, link, cluster_depth, self.support);
        let bounds = g.mesh.posed_aabb(pose);
        let rotation = pose.rotation();
        for other in self.placed.iter().filter(|o| o.bounds.overlaps(&bounds)) {
            let part = self.scene.parts().iter().position(|(id, _)| *id == other.id).unwrap_or(usize::MAX);
            let hits = par::map(&other.probes, |q| {
                if !bounds.contains(q) {
                    return None;
                }
                let (d, grad) = g.local_sdf.query_with_gradient(&pose.inverse_apply(q));
                (d <= 0.0).then(|| CollidedPoint { world: *q, depth: d * pose.scale, part, normal: -(rotation * grad) })
            });
            state.points.extend(hits.into_iter().flatten());
        }
        CollisionState::from_points(state.points, centroid, link, cluster_depth, self.support)
    }

    /// Physics losses at `pose`. With `squeeze` the scale term is active
    /// whenever anything collides, regardless of the cluster count.
    pub fn physics_terms(&self, pose: &Pose5DoF, squeeze: bool) -> LossTerms {
        let mut state = self.collisions(pose);
        if squeeze && !state.points.is_empty() {
            state.n_cluster = state.n_cluster.max(2);
        }
        let bottom = self.geometry.bottom.evaluate(&self.geometry.mesh, pose);
        physics_terms(&state, &bottom, self.parent, pose)
    }

    pub fn alignment_terms(&self, pose: &Pose5DoF) -> Result<LossTerms, String> {
        let c = self.config;
        pose_loss(self.pairs, pose, self.camera, c.m_pairs, c.tau, &c.weights)
            .map(|pose| LossTerms { pose, ..Default::default() })
            .map_err(|e| e.to_string())
    }

    /// Runs the stages enabled by the config's mode from `start`.
    pub fn solve(&self, start: Pose5DoF, trace: &mut OptimTrace) -> Pose5DoF {
        let c = self.config;
        let mut pose = start;
        if c.mode == AblationMode::Raw {
            return pose;
        }
        if self.pairs.is_empty() {
            trace.diagnostics.push("no correspondences, alignment skipped".into());
        } else if c.weights.pose > 0.0 {
            pose = self.descend(Stage::Alignment, pose, c.max_iters_alignment, &|p, _| self.alignment_terms(p), trace);
        }
        if trace.aborted || c.mode == AblationMode::Pose {
            return pose;
        }
        let physics_config;
        let problem = if c.mode == AblationMode::Collision {
            physics_config = OptimConfig { weights: LossWeights { stab: 0.0, ..c.weights }, ..c.clone() };
            NodeProblem { config: &physics_config, ..*self }
        } else {
            NodeProblem { ..*self }
        };
        problem.descend(Stage::Physics, pose, c.max_iters_physics, &|p, squeeze| Ok(problem.physics_terms(p, squeeze)), trace)
    }

    fn step(&self, pose: &Pose5DoF, gradient: &PoseGradient, extent: f64) -> PoseGradient {
        let c = self.config;
        let mut d = PoseGradient::new(
            c.rate_scale * gradient[0],
            c.rate_yaw * gradient[1],
            c.rate_translation * gradient[2],
            c.rate_translation * gradient[3],
            c.rate_translation * gradient[4],
        );
        d[0] = d[0].clamp(-c.max_step_scale * pose.scale, c.max_step_scale * pose.scale);
        d[1] = d[1].clamp(-c.max_step_yaw, c.max_step_yaw);
        let t = d.fixed_rows::<3>(2).norm();
        let t_max = c.max_step_translation * extent;
        if t > t_max {
            d.fixed_rows_mut::<3>(2).scale_mut(t_max / t);
        }
        d
    }

    fn descend(
        &self,
        stage: Stage,
        start: Pose5DoF,
        max_iters: usize,
        eval: &dyn Fn(&Pose5DoF, bool) -> Result<LossTerms, String>,
        trace: &mut OptimTrace,
    ) -> Pose5DoF {
        // set once translation alone stops reducing a remaining collision
        let mut squeeze = false;
        let weights = &self.config.weights;
        let extent = self.geometry.mesh.posed_aabb(&start).longest_side();
        let mut pose = start;
        let mut terms = match eval(&pose, squeeze) {
            Ok(t) => t,
            Err(e) => {
                trace.diagnostics.push(format!("{} stage skipped: {e}", stage.as_str()));
                return pose;
            }
        };
        let mut history = Vec::new();
        for iter in 0..=max_iters {
            let total = terms.total(weights, stage);
            trace.records.push(TraceRecord {
                stage,
                iter,
                l_pose: terms.pose.value,
                l_trans: terms.trans.value,
                l_scale: terms.scale.value,
                l_stab: terms.stab.value,
                pose,
            });
            if terms.skipped_scale_points > 0 {
                trace.diagnostics.push(format!(
                    "{} iter {iter}: {} scale targets skipped at the centroid",
                    stage.as_str(),
                    terms.skipped_scale_points
                ));
            }
            if !total.is_finite() {
                trace.aborted = true;
                trace.diagnostics.push(format!("{} iter {iter}: non-finite loss, node aborted", stage.as_str()));
                return pose;
            }
            history.push(total.value);
            let n = history.len();
            if iter == max_iters || (n > WINDOW && (history[n - 1 - WINDOW] - total.value).abs() < self.config.convergence_tol)
            {
                break;
            }
            match self.line_search(stage, &pose, &total, extent, squeeze, eval) {
                Some((p, t)) => {
                    pose = p;
                    terms = t;
                }
                None if stage == Stage::Physics && !squeeze && terms.trans.value > 0.0 => {
                    squeeze = true;
                    trace.diagnostics.push(format!("physics iter {iter}: translation stalled, scale term forced on"));
                    match eval(&pose, true) {
                        Ok(t) => terms = t,
                        Err(_) => break,
                    }
                    let (id, e) = (self.id, terms.total(weights, stage).value);
                    log::debug!("{id}: squeeze engaged at loss {e:.3e}");
                }
                None => break,
            }
        }
        pose
    }
}

impl NodeProblem<'_> {
    /// Backtracking along the scaled negative gradient; the first step that
    /// strictly lowers the stage total wins.
    fn line_search(
        &self,
        stage: Stage,
        pose: &Pose5DoF,
        total: &LossValue,
        extent: f64,
        squeeze: bool,
        eval: &dyn Fn(&Pose5DoF, bool) -> Result<LossTerms, String>,
    ) -> Option<(Pose5DoF, LossTerms)> {
        let step = self.step(pose, &total.gradient, extent);
        if step.iter().all(|s| *s == 0.0) {
            return None;
        }
        let mut alpha = 1.0;
        for _ in 0..MAX_HALVINGS {
            let trial = apply_step(pose, &(alpha * step));
            if let Ok(t) = eval(&trial, squeeze) {
                let v = t.total(&self.config.weights, stage);
                if v.is_finite() && v.value < total.value {
                    return Some((trial, t));
                }
            }
            alpha *= 0.5;
        }
        None
    }
}

/// `pose − step`, with the scale clamped and yaw rewrapped.
pub fn apply_step(pose: &Pose5DoF, step: &PoseGradient) -> Pose5DoF {
    Pose5DoF {
        scale: (pose.scale - step[0]).clamp(MIN_SCALE, MAX_SCALE),
        yaw: normalize_yaw(pose.yaw - step[1]),
        translation: pose.translation - Vec3::new(step[2], step[3], step[4]),
    }
}

/// Sampling seed for a node, stable under reordering of the bundle.
pub fn node_seed(seed: u64, id: &str) -> u64 {
    fnv1a(fnv1a(FNV_OFFSET, &seed.to_le_bytes()), id.as_bytes())
}

/// Builds (or loads from the configured cache) the field of a posed mesh.
pub fn grid_for(mesh_ref: &str, mesh: &TriangleMesh, pose: &Pose5DoF, config: &OptimConfig) -> Result<GridSdf, SdfError> {
    let Some(dir) = &config.sdf_cache else {
        return GridSdf::build(mesh, pose, config.resolution, None);
    };
    let path = dir.join(cache_key(mesh_ref, pose, config.resolution));
    if path.is_file() {
        return GridSdf::read_cache(&path);
    }
    let grid = GridSdf::build(mesh, pose, config.resolution, None)?.to_f32_precision();
    std::fs::create_dir_all(dir).map_err(|source| SdfError::Io { path: dir.display().to_string(), source })?;
    grid.write_cache(&path)?;
    Ok(grid)
}

/// Refines every node in breadth-first order and returns the updated
/// bundle with one trace per node.
pub fn optimize_scene(bundle: &SceneBundle, config: &OptimConfig) -> Result<(SceneBundle, Vec<OptimTrace>), OptimError> {
    config.validate()?;
    if let Some(v) = validate_bundle(bundle).into_iter().next() {
        return Err(OptimError::Bundle(v));
    }
    if config.mode == AblationMode::Raw {
        return Ok((bundle.clone(), Vec::new()));
    }
    let graph = &bundle.graph;
    let mut scene = SceneSdf::with_ground(graph.ground_height);
    let mut grids: HashMap<String, Arc<GridSdf>> = HashMap::new();
    let mut local_grids: HashMap<String, Arc<GridSdf>> = HashMap::new();
    let mut placed: Vec<PlacedNode> = Vec::new();
    let mut poses = HashMap::new();
    let mut traces = Vec::new();
    let ground = SdfPart::Ground { height: graph.ground_height };

    for id in graph.bfs_order() {
        let node = graph.node(&id).expect("bfs order lists existing nodes");
        let mesh = bundle.mesh_of(node).expect("validated bundle resolves meshes").clone();
        let local_sdf = match local_grids.get(&node.mesh_ref) {
            Some(g) => g.clone(),
            None => {
                let g = Arc::new(grid_for(&node.mesh_ref, &mesh, &Pose5DoF::identity(), config)?);
                local_grids.insert(node.mesh_ref.clone(), g.clone());
                g
            }
        };
        let geometry = NodeGeometry::new(mesh.clone(), node_seed(config.seed, &id), config, local_sdf);
        let parent = match &node.parent {
            ParentRef::Ground => ground.clone(),
            ParentRef::Node(p) => SdfPart::Grid(grids[p].clone()),
        };
        let pairs = bundle.correspondences.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        let problem = NodeProblem {
            id: &id,
            geometry: &geometry,
            pairs,
            camera: bundle.camera.as_ref(),
            scene: &scene,
            parent: &parent,
            support: scene.parts().iter().position(|(p, _)| p == node.parent.as_str()),
            placed: &placed,
            config,
        };
        let mut trace = OptimTrace {
            node: id.clone(),
            scene_parts: scene.parts().iter().map(|(n, _)| n.clone()).collect(),
            ..Default::default()
        };
        let pose = problem.solve(node.pose, &mut trace);
        for d in &trace.diagnostics {
            log::debug!("{id}: {d}");
        }
        if trace.aborted {
            log::warn!("{id}: optimization aborted, keeping last finite pose");
        }

        let grid = Arc::new(grid_for(&node.mesh_ref, &mesh, &pose, config)?);
        scene.update(&id, SdfPart::Grid(grid.clone()))?;
        grids.insert(id.clone(), grid);
        placed.push(PlacedNode { id: id.clone(), bounds: mesh.posed_aabb(&pose), probes: pose.apply_all(&geometry.probes) });
        poses.insert(id.clone(), pose);
        traces.push(trace);
    }
    Ok((bundle.with_poses(&poses), traces))
}

/// [`optimize_scene`] with the ablation mode overridden.
pub fn ablation_run(
    bundle: &SceneBundle,
    config: &OptimConfig,
    mode: AblationMode,
) -> Result<(SceneBundle, Vec<OptimTrace>), OptimError> {
    optimize_scene(bundle, &OptimConfig { mode, ..config.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_parse() {
        for m in AblationMode::ALL {
            assert_eq!(m.as_str().parse::<AblationMode>(), Ok(m));
        }
        assert!("stability".parse::<AblationMode>().is_err());
    }

    #[test]
    fn step_clamps_scale_and_wraps_yaw() {
        let p = apply_step(&Pose5DoF::new(0.06, 0.05, Vec3::zeros()), &PoseGradient::new(1.0, 0.1, 0.0, 0.0, 0.0));
        assert_eq!(p.scale, MIN_SCALE);
        assert!((p.yaw - (std::f64::consts::TAU - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn config_validation_names_field() {
        let bad = OptimConfig { rate_yaw: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(OptimError::Config(m)) if m.contains("rate_yaw")));
        assert!(OptimConfig::default().validate().is_ok());
    }

    #[test]
    fn node_seeds_differ_by_id() {
        assert_ne!(node_seed(0, "a"), node_seed(0, "b"));
        assert_eq!(node_seed(3, "a"), node_seed(3, "a"));
    }
}
