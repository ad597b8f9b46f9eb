//! Convolutional bidirectional-GRU relation classifier for clinical text.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
