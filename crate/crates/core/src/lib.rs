//! Nonsingular dynamics on boundaries of spherically homogeneous rooted trees.

pub mod automorphism;
pub mod cocycle;
pub mod constructions;
pub mod error;
pub mod group;
pub mod koopman;
pub mod measures;
pub mod perm;
pub mod tree;
pub mod verdict;

pub use automorphism::{Activity, Automorphism, LevelPermutation, Machine, PortraitNode, SectionRule};
pub use error::{Error, Result};
pub use perm::Perm;
pub use tree::{cylinder_contains, BoundaryPoint, Prefix, TreeShape, DEFAULT_ENUMERATION_CAP};
pub use verdict::Evidence;
pub use group::{GeneratedGroup, Minimality, Word};
