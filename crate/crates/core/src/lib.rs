pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
