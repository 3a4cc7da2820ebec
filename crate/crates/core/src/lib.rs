//! Particle-in-cell simulation of the 2D2V Vlasov-Poisson system with
//! adaptive phase-space remapping.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod particles;
pub mod poisson;
pub mod problems;
pub mod remap;
pub mod sim;
pub mod sum;

pub use error::{Error, Result};
