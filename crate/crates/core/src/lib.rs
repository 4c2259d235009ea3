//! Numerical kernels for backward stochastic differential equations whose
//! solution lives in a convex domain of a Riemannian manifold: chart
//! geometry, convex domains and their normalising maps, drift condition
//! estimators, the smoothing cascade, a regression-based BSDE solver and
//! path diagnostics.
//!
//! The crate is `no_std` with `alloc`. The `std` feature adds nothing but
//! std linkage; `parallel` spreads sample batches over rayon without
//! changing results; `serde` derives serialisation for reports.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod approximation;
pub mod diagnostics;
pub mod domain;
pub mod drift;
pub mod error;
pub mod geometry;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
