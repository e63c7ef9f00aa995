//! Probabilistic binary session types (PSTs) and their runtime monitors.
//!
//! A PST is a binary session type whose choice points carry a probability
//! distribution over branches. From such a type we synthesise a passive
//! monitor that sits between the two parties, dynamically typechecks the
//! message flow, estimates branch frequencies, and issues (revocable)
//! statistical warnings when the observed behaviour deviates from the
//! specified distribution at a configured confidence level.
//!
//! Module map:
//! - [`pst`]: abstract syntax, concrete textual language, validation,
//!   duality, and the choice-point table used to address counters.
//! - [`stats`]: frequentist estimation (estimated probability, standard
//!   error, confidence intervals, normal quantile).
//! - [`monitor`]: the synthesised monitor core, a CFSM interpreter with
//!   warning/retraction/violation semantics and blame.
//! - [`transport`]: the live TCP proxy, the newline-delimited connection
//!   manager, and the deterministic offline replay runner.
//! - [`sim`]: scripted/probabilistic party generators and a Monte Carlo
//!   harness for statistical experiments.

pub mod monitor;
pub mod pst;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod transport;
