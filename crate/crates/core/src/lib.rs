pub mod augment;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{Error, Result};
