//! Evaluation harness, file formats and command-line driver around
//! `pushrl-core`.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod harness;
pub mod objects;
pub mod selfcheck;
pub mod svg;

pub use error::{Error, Result};
