//! Bias-reduced estimation of smooth functionals `f(θ)` in Gaussian shift
//! models `X = θ + ξ`, `ξ ~ N(0, Σ)` with known `Σ`.
//!
//! * [`model`]: noise laws, weak/strong variance, effective rank.
//! * [`functional`]: built-in smooth functionals and `σ_{f,ξ}(θ)`.
//! * [`chain`]: the bootstrap-chain estimator `f_k` and its oracles.
//! * [`diagnostics`]: outer Monte Carlo experiments, normality tests, sweeps.
//! * [`lowerbound`]: packing-based lower-bound constructions.
//! * [`spec`]: JSON-facing descriptions resolved against a model.

pub mod chain;
pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod lowerbound;
pub mod model;
pub mod rng;
pub mod spec;
pub mod stats;

pub use chain::{ChainConfig, ChainEstimate};
pub use error::{Error, ErrorClass, Result};
pub use functional::{Functional, ScalarFn, SmoothFunctional, SmoothnessMeta};
pub use model::{CovarianceKind, CovarianceModel, NormContext, Point};
pub use rng::SeedSpec;
