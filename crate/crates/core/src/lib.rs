//! Shot-frugal quantum classifier lab.

pub mod bounds;
pub mod circuit;
pub mod data;
pub mod error;
pub mod experiment;
pub mod extractor;
pub mod grad;
pub mod heads;
pub mod inference;
pub mod loss;
pub mod model;
pub mod noise;
pub mod par;
pub mod rng;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
