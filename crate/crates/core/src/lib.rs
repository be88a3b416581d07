//! Granger causality tests in conditional quantiles that stay valid under
//! structural instability.
//!
//! The crate builds up from a check-loss quantile regression solver
//! ([`numcore`]) through sequential subgradient processes ([`process`]) to
//! the LM-type test statistics ([`stats`]), with critical values obtained by
//! simulating the limiting Gaussian processes ([`limitsim`]) or by a
//! semiparametric bootstrap that enforces the null ([`bootstrap`]). On top of
//! the tests sits a sequential procedure that dates breaks and labels time
//! regimes as causal or non-causal ([`regimes`]), plus the simulation designs
//! used to validate size and power ([`montecarlo`]).

pub mod bootstrap;
pub mod error;
pub mod kv;
pub mod limitsim;
pub mod norm;
pub mod numcore;
pub mod montecarlo;
pub mod nuisance;
pub mod process;
pub mod regimes;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
