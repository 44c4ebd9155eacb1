//! B-cos networks: bias-free, dynamically linear models whose forward pass
//! can be summarised exactly by an input-dependent linear map.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod explain;
pub mod layers;
pub mod model;
pub mod pointing;
pub mod presets;
pub mod tensor;
pub mod training;

pub use autodiff::{BackwardMode, Gradients, Graph, Var};
pub use error::{Error, Result};
pub use tensor::{ReduceKind, Shape, Tensor};
