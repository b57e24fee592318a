//! Reverse-mode automatic differentiation over dense `f32`/`f64` tensors,
//! sized for small 1-D convolutional signal models.
//!
//! Build a [`Graph`] per forward pass, bind parameters from a
//! [`ParamStore`], call [`Graph::backward`] on a scalar, then fold the
//! result into the store and take an [`adam_step`].

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;

pub mod real;
pub mod suite;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{AutodiffError, Result};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport, ParamError};
pub use graph::{Gradients, Graph, Var};
pub use ops::{ConvSpec, NormMode, Primitive, NORM_EPS};
pub use params::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tensor::Tensor;
