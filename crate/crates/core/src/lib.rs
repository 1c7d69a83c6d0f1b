//! Simulation and controller synthesis for a thrust-assisted spring-legged hopper.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod design;
pub mod energy;
pub mod environment;
pub mod error;
pub mod hybrid;
pub mod observe;
pub mod qp;
pub mod robot;
pub mod slip;
pub mod stepping;

pub use error::{Error, Result};
