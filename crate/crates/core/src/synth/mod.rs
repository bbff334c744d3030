//! Synthetic fixtures: primitive meshes and randomized test scenes.

pub mod fixtures;
pub mod gradcheck;
pub mod primitives;
pub mod suite;
