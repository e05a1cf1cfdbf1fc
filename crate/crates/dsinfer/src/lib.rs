//! De-sparsified ℓ1-penalized M-estimation for high-dimensional models.
//!
//! The pipeline: fit `β̂ = argmin (1/n)Σρ(xᵢᵀβ, yᵢ) + λ‖β‖₁` for a
//! quadratic, Huber, quantile or logistic loss ([`solver`]); estimate rows
//! of the inverse curvature matrix by nodewise regression ([`nodewise`]);
//! remove the shrinkage bias, `b̂ = β̂ − Θ̂ᵀPₙψ_β̂`, with a plug-in variance
//! ([`desparsify`]); and turn the result into confidence intervals,
//! p-values and Holm/Benjamini-Hochberg decisions ([`inference`]).
//! [`simulate`] adds reproducible Monte-Carlo experiment protocols and
//! [`screen`] the marginal filter for ultra-high-dimensional inputs.

pub mod artifacts;
pub mod desparsify;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod loss;
pub mod nodewise;
pub mod normal;
pub mod screen;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
