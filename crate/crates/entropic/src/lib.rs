//! Entropy-regularized optimal stopping for American-style options.
//!
//! The crate prices Bermudan/American contracts by relaxing the stopping
//! decision into a randomized policy: instead of stopping or continuing,
//! the holder stops at a state-dependent intensity, and an entropy term
//! with temperature `lambda` penalizes policies far from "never stop".
//! The regularized value solves a semilinear backward equation with a
//! smooth (exponential) driver; as `lambda` decreases to zero the value
//! increases monotonically to the American price.
//!
//! What lives where:
//!
//! - [`model`]: market/contract description ([`MarketModel`], [`Payoff`],
//!   [`TimeGrid`], [`LambdaSchedule`], [`RunConfig`]).
//! - [`paths`]: Monte Carlo path generation for independent geometric
//!   Brownian motions with continuous dividend yield.
//! - [`regression`]: least-squares conditional expectation operators with
//!   per-step cached factorizations.
//! - [`lattice`]: recombining-tree references (American, European, and the
//!   exact regularized value on the same tree).
//! - [`pia`]: the main solver — policy iteration on the regularized
//!   problem, a classical penalty-method baseline, and a martingale-based
//!   duality upper bound.
//! - [`config`]: a small INI-style config file format for the CLI.
//!
//! Entry points for typical use are [`pia::run_pia`] and
//! [`pia::run_classical_penalization`]; see the `entropic-cli` crate for a
//! command-line frontend.

pub mod config;
pub mod error;
pub mod lattice;
pub mod model;
pub mod paths;
pub mod pia;
pub mod regression;

pub use error::{Error, Result};
pub use model::{
    BasisSpec, LambdaSchedule, MarketModel, Method, Payoff, RunConfig, Stage, TimeGrid,
};
pub use paths::{McEstimate, PathBatch};
pub use pia::{PiaRun, PriceReport};
pub use regression::RegressionPlan;
