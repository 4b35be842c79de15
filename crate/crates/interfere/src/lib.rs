//! File formats, configuration and command implementations for the
//! `interfere` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod parallel;
pub mod report;
