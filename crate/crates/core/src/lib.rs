//! Targeted maximum likelihood estimation of context-specific causal
//! parameters from a single time series.

pub mod data;
pub mod design;
pub mod error;
pub mod learners;
pub mod online_sl;
pub mod tmle;
pub mod adaptive;
pub mod cli;
pub mod simlab;

pub use error::{Error, ErrorKind, Result};
