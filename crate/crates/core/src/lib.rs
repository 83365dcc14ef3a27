//! Adaptive surface finite elements for the linear heat equation
//! `∂ₜu − Δ_Γ u = f` on closed, stationary surfaces.
//!
//! The crate is `no_std` (with `alloc`). It contains everything that is pure
//! computation: the level-set description of the exact surface, the
//! triangulated discrete surface with refinement genealogy, newest vertex
//! bisection and red–green–blue refinement/coarsening, P1 surface finite
//! elements with a backward Euler step, the residual indicators and the
//! space–time adaptive driver.
//!
//! File formats, experiment drivers and the command-line interface live in the
//! `surfadapt` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adaptive;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod meshgen;
pub mod problems;
pub mod refinement;

pub use error::{Error, Result};

/// Ambient 3-vector (points, normals, gradients).
pub type Vec3 = nalgebra::Vector3<f64>;
/// Ambient 3×3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
