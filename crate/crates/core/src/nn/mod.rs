//! Differentiable layers shared by every building block.

mod batchnorm;
mod conv;
mod init;
mod layers;
mod params;
mod pool;

pub use batchnorm::BN_EPSILON;
pub use conv::{same_padding, Conv2dOptions};
pub use init::{derive_seed, he_uniform_bound, he_uniform_init};
pub use layers::{BatchNormParams, ConvParams, SeparableConvParams};
pub use params::{Bound, ParamId, ParamStore};
