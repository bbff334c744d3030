//! Small hand-built scenes with known metric and optimizer outcomes.

use super::primitives::{box_mesh, cylinder, square_ring, unit_cube};
use super::suite::BundleBuilder;
use crate::scene::{Role, SceneBundle};
use crate::{Pose5DoF, Vec3};

fn at(x: f64, y: f64, z: f64) -> Pose5DoF {
    Pose5DoF::new(1.0, 0.0, Vec3::new(x, y, z))
}

/// Square floor of side `side` cut in two equal halves by a full-width
/// wall along y.
pub fn split_floor(side: f64) -> SceneBundle {
    BundleBuilder::new()
        .floor([0.0, 0.0], [side, side])
        .anchor("wall", box_mesh(Vec3::new(0.2, side, 1.0)), at(side / 2.0, side / 2.0, 0.0))
        .build()
}

/// A 0.3 m cube inside a closed square ring wall (2 m outer side) on a
/// 6 m floor. The ring is reachable, the cube is not.
pub fn ring_enclosure() -> SceneBundle {
    BundleBuilder::new()
        .floor([-3.0, -3.0], [3.0, 3.0])
        .anchor("ring", square_ring(2.0, 0.2, 0.5), at(0.0, 0.0, 0.0))
        .node("cube", box_mesh(Vec3::repeat(0.3)), at(0.0, 0.0, 0.0), None, Role::Parent)
        .build()
}

/// Two unit cubes resting on the ground, the second shifted by `offset`
/// along x. For `offset` in `[0.5, 1]` the penetration depth is `1 − offset`.
pub fn overlapping_cubes(offset: f64) -> SceneBundle {
    BundleBuilder::new()
        .anchor("a", unit_cube(), at(0.0, 0.0, 0.0))
        .node("b", unit_cube(), at(offset, 0.0, 0.0), None, Role::Parent)
        .build()
}

/// A unit cube pushed `depth` meters into the ground.
pub fn sunk_cube(depth: f64) -> SceneBundle {
    BundleBuilder::new().anchor("cube", unit_cube(), at(0.0, 0.0, -depth)).build()
}

/// Table top height of [`table_and_cup`].
pub const TABLE_HEIGHT: f64 = 0.75;

/// A 1.2 × 0.8 × 0.75 table with a cup whose base is `sink` meters below
/// the table top.
pub fn table_and_cup(sink: f64) -> SceneBundle {
    BundleBuilder::new()
        .anchor("table", box_mesh(Vec3::new(1.2, 0.8, TABLE_HEIGHT)), at(0.0, 0.0, 0.0))
        .node("cup", cylinder(0.04, 0.1, 24), at(0.1, -0.05, TABLE_HEIGHT - sink), Some("table"), Role::Child)
        .build()
}
