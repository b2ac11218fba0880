//! Global sensitivity analysis built around derivative-based measures.
//!
//! The crate estimates derivative-based global sensitivity measures (DGSM)
//! from gradient samples and turns them into lower and upper bounds on
//! Sobol' total indices. Reference variance-based (pick-freeze) and Morris
//! screening estimators are included, plus a tensor-quadrature oracle for
//! small models.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod closed_form;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod exprmodel;
pub mod functions;
pub mod oracle;
mod par;
pub mod sampling;

pub use distributions::{InputDistribution, InputSpace, PoincareRule};
pub use error::{Error, Result};
pub use estimators::Estimate;
pub use functions::{builtin, GradientMethod, GradientSample, Model, ModelFunction};
pub use sampling::{Generator, SampleDesign};
