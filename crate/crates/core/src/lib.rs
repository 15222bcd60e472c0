//! Metric magnitude, diversity maximization and iterated peeling.

pub mod cli;
pub mod diversity;
pub mod error;
pub mod io;
pub mod linalg;
pub mod magnitude;
pub mod metric;
pub mod peeling;
pub mod paths;
pub mod product;
pub mod svg;

pub use error::{Error, ErrorClass, Result};
