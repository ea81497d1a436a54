//! Semiparametric multivariate spatial covariance models.
//!
//! Marginals are truncated Matérn spectral densities; each cross-spectrum is
//! the geometric mean of its two marginals times a coherence function written
//! as a cubic B-spline expansion. Covariances are recovered from the spectra
//! with a finite Hankel sum. Around that model the crate provides the
//! reference models it is compared against (independent, full bivariate and
//! parsimonious Matérn, linear model of coregionalization), exact Gaussian
//! maximum likelihood, random field simulation, band-pass filtering and
//! co-kriging with proper scoring rules.

pub mod bspline;
pub mod covariance;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod par;
pub mod predict;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod specfun;
pub mod validity;

pub use error::{Error, Result};
