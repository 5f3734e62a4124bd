//! Correspondence filtering for two-view geometry.
//!
//! `geomoe-core` holds the allocation-only numerics: calibrated geometry and
//! robust estimation, a small set of differentiable set-network blocks with
//! hand-written backward passes, the mixture-of-experts motion-field model,
//! its training objective, a synthetic scene generator and the evaluation
//! metrics. IO, configuration files and the command line live in the
//! `geomoe` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod eval;
pub mod geometry;
pub mod homography;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod rng;
pub mod robust;
pub mod synth;
pub mod train;
pub mod verify;
