//! Finite-element simulation of incompressible miscible displacement in porous
//! media.
//!
//! The pressure is discretized with continuous quadratic elements (zero-mean),
//! the concentration with continuous linear elements, and time with a
//! linearized backward-Euler step in which the velocity and the
//! velocity-dependent dispersion tensor are lagged by one level. A
//! manufactured-solution harness measures spatial and temporal convergence
//! on a disk.
//!
//! Module map:
//!
//! - [`mesh`]: disk triangulations, quality metrics, JSON mesh files
//! - [`fe`]: reference bases, quadrature, degree-of-freedom maps
//! - [`sparse`]: CSR matrices, deflated CG and restarted GMRES
//! - [`tensor`]: Bear–Scheidegger and scalar dispersion models
//! - [`assembly`]: pressure and concentration systems
//! - [`driver`]: time marching
//! - [`mms`]: manufactured solutions and their source terms
//! - [`norms`]: error norms and observed orders
//! - [`study`]: configuration-driven runs and convergence studies
//! - [`vtk`]: legacy VTK output

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod driver;
pub mod error;
pub mod fe;
pub mod mesh;
pub mod mms;
pub mod norms;
pub mod sparse;
pub mod study;
pub mod tensor;
pub mod vtk;

pub use error::{Error, Result};

/// A point (or vector) in the plane.
pub type Point = [f64; 2];
