pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod losses;
pub mod models;
pub mod nn;
pub mod regions;
pub mod store;
pub mod tensor;
pub mod training;
#[cfg(test)]
mod testutil;
pub mod warp;

pub use error::{Result, SamcError};
