//! Metriplectic stochastic particle dynamics with learnable thermodynamic
//! closures.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bench;
pub mod cli;
pub mod datagen;
pub mod dpd;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod thermo;
pub mod training;
pub mod trajectory;
pub mod vecmath;

pub use error::{Error, Result};
