//! Numerical laboratory for fourth-order conformal geometry on model 4-manifolds.
//!
//! The crate builds discretized products of closed surfaces (spheres, flat
//! tori, triangle meshes, constant-curvature surrogates), assembles the
//! fourth-order conformally covariant operator and its curvature invariant on
//! them, and studies the associated log-exponential energy functional:
//! critical points, concentration (bubble) families, Moser-Trudinger-Adams
//! inequalities, and Green's functions.
//!
//! # Sign conventions
//!
//! The Laplacian used throughout is the *geometer's positive* Laplacian
//! `lap = -div grad`, so its eigenvalues are `>= 0` and on the unit round
//! sphere `lap Y_l = l(l+1) Y_l`. All spectral data, operator coefficients,
//! and reported eigenvalues follow this convention.

pub mod adams;
pub mod bubbles;
mod bubblecalc;
pub mod error;
pub mod functional;
pub mod geometry;
pub mod numerics;
pub mod paneitz;
pub mod solver;
pub mod transport;

pub use error::QcurvError;
