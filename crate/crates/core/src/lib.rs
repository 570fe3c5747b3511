//! Atlas-free modeling of structural connectivity as a symmetric function on
//! the product of two spheres.
//!
//! The pipeline is:
//!
//! 1. [`geometry`]: spherical triangulations and the degree-1 spherical
//!    spline basis with its evaluation, mass and roughness operators.
//! 2. [`kde`]: heat-kernel density estimates of streamline endpoint pairs on
//!    a grid over both spheres.
//! 3. [`fit`]: greedy construction of a rank-K symmetric separable basis by
//!    alternating optimization in an SVD-reduced coordinate system, plus
//!    embedding of new subjects.
//! 4. [`inference`]: global (MMD) and local (per-coefficient, Holm corrected)
//!    permutation tests and the subnetwork cover they induce.
//!
//! [`synthetic`] holds the generative models used by the simulation
//! harness in [`experiments`]; [`io`] defines the on-disk formats.

pub mod error;
pub mod experiments;
pub mod fit;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod kde;
pub mod linalg;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
