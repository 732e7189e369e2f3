//! Structural model of debt aversion and the estimators built on it.

pub mod analysis;
pub mod choice;
pub mod data;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod likelihood;
pub mod mixed;
pub mod model;
pub mod numeric;
pub mod optimize;
pub mod report;
pub mod scalar;

pub use error::{Error, Result};
