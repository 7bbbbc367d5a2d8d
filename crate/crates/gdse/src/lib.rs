//! Gradient descent on generalized single-index models.
//!
//! The crate runs the empirical iteration `mu <- mu - (eta/m) X^T dL(X mu, Y)`
//! under several i.i.d. designs and compares it with the deterministic
//! Gaussian state evolution, the data-free estimator of that evolution and
//! the mean-field recursion that refines it at moderate aspect ratios.
//!
//! Start from the runnable programs under `examples/`; each one exercises a
//! single capability end to end.

pub mod design;
pub mod error;
pub mod estimator;
pub mod gd;
pub mod harness;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod quad;
pub mod state_evolution;

pub use design::{sample_design, DesignKind, DesignMatrix};
pub use error::{Error, Result};
pub use model::{GaussianPairCov, LinkFunction, ModelSpec, NoiseSpec};
