#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod env;
pub mod geom;
pub mod nn;
pub mod physics;
pub mod planner;
pub mod rng;
pub mod sac;
