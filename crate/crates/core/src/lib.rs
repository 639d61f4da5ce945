//! Decoding stock expected returns from alpha expected returns.

pub mod error;
pub mod io;
pub mod linalg;
pub mod alpha_risk;
pub mod cli;
pub mod constraints;
pub mod decoder;
pub mod panel;
pub mod portfolio;
pub mod residual;
pub mod synth;

#[cfg(test)]
mod test_util;

pub use error::{Error, Result};
