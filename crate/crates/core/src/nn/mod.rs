//! A small convolutional engine with explicit backward passes.

pub mod conv;
pub mod layers;
pub mod params;

pub use conv::Conv2d;
pub use layers::{instance_norm, instance_norm_backward, upsample2x, upsample2x_backward, Activation};
pub use params::{NamedArray, ParamBuilder, ParamId, Params};
