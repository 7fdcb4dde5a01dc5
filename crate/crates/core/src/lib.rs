//! Learning an idealized reward from suboptimal demonstrations, end to end on
//! desk-scale environments with hidden ground-truth rewards.
//!
//! The pipeline has three phases. Phase 1 learns an initial reward and policy
//! from demonstrations via adversarial IRL ([`airl`]) and generates a
//! performance-degraded trajectory dataset ([`degrade`]) — either by mixing
//! uniform-random actions into the learned policy at increasing rates, or by
//! systematically handicapping the IRL run itself (fewer demos, smaller
//! networks, heavier L1 weight regularization). Phase 2 fits a sigmoid
//! degradation–performance curve to the scored returns and regresses a reward
//! whose trajectory sums match the curve ([`ssrr`]). Phase 3 trains a policy
//! against the regressed reward ([`rl`]). Every stage is checkable against the
//! environments' hidden ground truth ([`eval`]).

pub mod airl;
pub mod approx;
pub mod data;
pub mod degrade;
pub mod envs;
pub mod error;
pub mod eval;
pub mod policy;
pub mod rl;
pub mod seed;
pub mod ssrr;

pub use error::{Error, Result};
