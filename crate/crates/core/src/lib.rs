//! Resolvent, determinant, spectral and dispersive-evolution numerics for
//! Schrödinger operators with δ-type vertex conditions on metric trees.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod couplings;
pub mod determinant;
pub mod error;
pub mod fdm;
pub mod function;
pub mod graph;
pub mod io;
pub mod propagator;
pub mod quad;
pub mod random;
pub mod resolvent;
pub mod spectral;

pub use error::{Error, Result};
pub use function::{CompositeFunction, ExpProfile, GraphFunction, Norm, Packet};
pub use graph::{BuildStep, Edge, Endpoint, MetricTree, ValidationReport, Vertex};
pub use num_complex::Complex64;
