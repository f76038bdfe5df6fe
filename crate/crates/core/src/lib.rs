//! Simulation and analysis of deterministic photonic cluster-state generation
//! with a flux-modulated transmon emitter, a slow-light waveguide delay line
//! and a tunable mirror qubit.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod flux;
pub mod linalg;
pub mod noise;
pub mod optim;
pub mod protocol;
pub mod shots;
pub mod tomo;
pub mod units;
pub mod waveguide;

pub use error::{Error, Result};
