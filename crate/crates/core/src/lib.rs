//! Numerical engine for nonsymmetric T-geometry.
//!
//! Everything is derived from a world function Σ(x,x′) on a coordinate chart:
//! scalar Σ-products and Gram determinants, first-order tubes and their
//! segments, two-point finite-difference tensor calculus, gradient lines,
//! broken tubes and degeneration diagnostics.

pub mod algebra;
pub mod calculus;
pub mod cli;
pub mod degeneracy;
pub mod closed_form;
pub mod error;
pub mod fd;
pub mod kind;
pub mod linalg;
pub mod lines;
pub mod tensor;
pub mod tubes;
pub mod world;

pub use error::{Error, Result};
pub use kind::{GradientKind, Kind, TubeKind};
pub use world::{make_world, point, Point, World, WorldFunction, WorldKind, WorldSpec};
