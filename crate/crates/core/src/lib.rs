//! Numerical dynamical quantization on flat phase space and the two-sphere.
//!
//! The crate builds the classical Ether Hamiltonians, reflections and
//! geodesics of a symplectic model, the midpoint-triangle construction of
//! the semiclassical star-product kernel, star products computed three
//! independent ways, and the semiclassical symbol of the evolution operator.

pub mod error;
pub mod ether;
pub mod evolution;
pub mod geometry;
pub mod hermite;
pub mod kernel;
pub mod numerics;
pub mod quantize;
pub mod starprod;
pub mod suite;

pub use error::{Error, Result};
pub use geometry::{Chart, Christoffel, CotangentVector, FormMatrix, Manifold, Point, TangentVector};
