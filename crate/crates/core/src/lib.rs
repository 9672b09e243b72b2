//! Robust cooperative sensor network localization with Huber-type convex
//! relaxations.
//!
//! The crate builds sensor network scenarios, evaluates the Huber-based
//! nonconvex cost and its convex underestimator, minimizes the latter with a
//! synchronous accelerated gradient scheme or an asynchronous randomized
//! gossip scheme, certifies the relaxation gap, and runs the Monte Carlo
//! studies used to compare loss families.

mod error;
mod vecops;

pub mod bounds;
pub mod cli;
pub mod gossip;
pub mod harness;
pub mod huber;
pub mod netmodel;
pub mod run;
pub mod sync;

pub use error::{Error, Result};
