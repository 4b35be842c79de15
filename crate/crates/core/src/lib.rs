//! Randomization inference for experiments with network interference.
//!
//! The crate is organised around the pipeline an analysis follows:
//!
//! * [`design`]: units, neighborhoods and exposure mappings that turn a
//!   treatment assignment into effective-treatment indicators.
//! * [`exposure`]: the randomization distribution of those indicators
//!   (marginal probability, pairwise joint probabilities and their centred
//!   deviations), computed exactly, by Monte Carlo, or by enumeration.
//! * [`monotone`]: upper confidence bounds on the average outcome under full
//!   treatment that stay valid under a misspecified exposure mapping, as long
//!   as treatment effects are monotone.
//! * [`contrast`]: assumption-free intervals for the contrast attributable to
//!   treatment.
//! * [`sim`]: the simulation harness that checks coverage claims.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod contrast;
pub mod design;
mod error;
pub mod exposure;
pub mod linalg;
pub mod monotone;
pub mod normal;
pub mod rng;
pub mod sim;
pub mod stats;

pub use crate::error::{Error, Result};
