//! Trainable cubic-spline activation functions for single-hidden-layer
//! regression networks.
//!
//! - [`spline`]: Catmull-Rom activations on a uniform, origin-symmetric knot grid.
//! - [`network`]: the `D -> H -> O` network, its backpropagation and parameter layout.
//! - [`objective`]: squared error with weight decay and the control-point damping term.
//! - [`optim`]: Polak-Ribiere conjugate gradient, ADAM and a finite-difference gradient.
//! - [`data`]: CSV loading, min/max normalization, splits, folds and NRMSE.
//! - [`experiment`]: the scenario runner behind the `saf` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod data;
pub mod error;
pub mod experiment;
pub mod network;
pub mod objective;
pub mod optim;
pub mod spline;

pub use error::{Error, Result};
pub use ndarray;
pub use network::{ParamLayout, SafNetwork, SafNeuron};
pub use objective::{EvalReport, Objective};
pub use spline::{KnotGrid, SpanAddress, SplineBasis};
