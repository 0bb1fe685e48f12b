pub mod altgraph;
pub mod analysis;
pub mod autodiff;
pub mod closedform;
pub mod data;
pub mod engine;
pub mod error;
pub mod scalar;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Model = engine::NestGnn<f64>;
pub type Params = engine::ParameterSet<f64>;
pub type Batch = engine::ChoiceBatch<f64>;
