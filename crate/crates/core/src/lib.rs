pub mod blocks;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod run;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tensor::{Gradients, Graph, Tensor, Var};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type ParamStore32 = nn::ParamStore<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type Network32 = net::Network<f32>;
pub type Network64 = net::Network<f64>;
pub type Adam32 = net::Adam<f32>;
pub type Adam64 = net::Adam<f64>;
