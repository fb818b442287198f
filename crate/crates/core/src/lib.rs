pub mod config;
pub mod control;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod parallel;
pub mod position;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
