//! Reduced-order data assimilation with PBDW and its bias-corrected and
//! multiscale variants.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bias;
pub mod config;
pub mod error;
pub mod io;
pub mod manifold;
pub mod multiscale;
pub mod obs;
pub mod rng;
pub mod rom;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
