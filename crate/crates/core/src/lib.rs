//! Certified intersection, separation and distance for pairs of compact
//! convex sets, using only a support oracle per set.
//!
//! [`triangle_i`] decides whether two bodies meet, returning either an
//! approximate common point or a witness pair whose bisector separates
//! them. [`triangle_ii`] continues from a witness pair to approximate the
//! distance and an optimal pair of parallel supporting hyperplanes.

pub mod body;
pub mod cli;
pub mod error;
pub mod hull;
pub mod instance;
pub mod linalg;
pub mod lp;
pub mod oracles;
pub mod qp;
pub mod report;
pub mod triangle_i;
pub mod triangle_ii;

pub use body::{BallBody, ConvexBody, PointSetBody, PolytopeBody, SupportOracle, SupportResult};
pub use error::{Error, Result};
pub use instance::{parse_instance, Instance};
pub use linalg::{Hyperplane, Vector};
