//! Physics-aware refinement of 3D scene layouts.
//!
//! A scene arrives as a [`SceneBundle`]: a scene graph rooted at the ground,
//! one triangle mesh per object, initial 5-DoF poses and (optionally) 2D/3D
//! correspondences against a guidance view. The [`optimizer`] walks the
//! graph breadth-first and refines each pose by gradient descent, first on
//! correspondence alignment and then on signed-distance-field collision and
//! support losses. [`plausibility`] scores any bundle for collisions,
//! static stability, reachability and walkable area.
//!
//! Inner loops (grid construction, per-sample queries, pairwise collision
//! checks) run on rayon when the `parallel` feature is enabled, which it is
//! by default. Without it every kernel falls back to the same sequential
//! code path; results are bitwise identical either way.

pub mod losses;
pub mod mesh;
pub mod optimizer;
pub mod par;
pub mod plausibility;
pub mod pose;
pub mod scene;
pub mod sdf;
pub mod synth;

pub use losses::{LossValue, LossWeights};
pub use mesh::{SurfaceSamples, TriangleMesh};
pub use optimizer::{optimize_scene, AblationMode, OptimConfig, OptimTrace};
pub use plausibility::{MetricParams, PlausibilityReport};
pub use pose::Pose5DoF;
pub use sdf::{GridSdf, SceneSdf, SdfPart};
pub use scene::{Camera, CorrespondencePair, SceneBundle, SceneGraph, SceneNode};

/// World-frame 3-vector, meters, z up.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Floor-plane or pixel 2-vector.
pub type Vec2 = nalgebra::Vector2<f64>;
/// Gradient with respect to `(scale, yaw, tx, ty, tz)`.
pub type PoseGradient = nalgebra::Vector5<f64>;
