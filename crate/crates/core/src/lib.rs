//! Light-field image super-resolution with deformable angular alignment.
//!
//! The crate covers the light-field data model ([`lfcore`]), deformable
//! convolution ([`dconv`]), network blocks and the full network
//! ([`blocks`], [`lfdfnet`]), a baseline-adjustable synthetic light-field
//! generator ([`synthlf`]), training ([`trainer`]) and evaluation
//! harnesses ([`evalkit`]). The `lfdf` binary wires them together.

pub mod autograd;
pub mod blocks;
pub mod cli;
pub mod conv;
pub mod dconv;
pub mod error;
pub mod evalkit;
pub mod lfcore;
pub mod lfdfnet;
pub mod synthlf;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
