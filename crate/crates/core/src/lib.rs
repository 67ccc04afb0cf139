//! Simulation and inference under informative survey sampling designs.
//!
//! * [`synthpop`]: seeded synthetic populations with nested PSU/household/person structure
//! * [`designs`]: single-stage and multistage sampling designs that draw samples and report base weights
//! * [`inclusion`]: first- and second-order inclusion probabilities, factorization deviations and
//!   dependence diagnostics
//! * [`inference`]: survey-weighted Bernoulli-logit pseudo-likelihood, weighted MLE and pseudo-posterior MCMC
//! * [`experiments`]: replicated convergence studies
//! * [`cli`]: config-driven command front end used by the `infsamp` binary
//!
//! Runnable walkthroughs of each capability live in the crate's `examples/` directory.

pub mod cli;
pub mod designs;
pub mod experiments;
pub mod inclusion;
pub mod inference;
pub mod rng;
pub mod synthpop;

pub use rng::Seed;
