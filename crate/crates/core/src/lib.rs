pub mod error;
pub mod speclin;

pub use error::{Error, Result};
pub mod model;
pub mod pressure;
pub mod profiles;
pub mod oukernel;
pub mod ratefn;
pub mod eigensolver;
pub mod config;
pub mod cli;
