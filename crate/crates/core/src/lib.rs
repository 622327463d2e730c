pub mod error;
pub mod geometry;
pub mod container;
pub mod magnetostatics;
pub mod pipeline;
pub mod pod;
pub mod postprocess;
pub mod sparse;
pub mod surrogate;
pub mod spline;

pub use error::{Error, Result};
