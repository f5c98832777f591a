//! Dense 2-D tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a tape: forward ops append nodes, [`Graph::backward`]
//! sweeps the tape in reverse. Values are stored flat row-major. Training
//! runs at `f32`; gradient checks build the identical graph at `f64`, where
//! central finite differences are trustworthy.
//!
//! Long-lived weights do not live on the tape. They sit in a [`ParamGroup`]
//! and are bound into a fresh graph for every step; see the module docs in
//! [`param`].

pub mod gradcheck;
mod graph;
mod kernels;
mod param;

pub use graph::{Graph, Var};
pub use param::{Binding, ParamGroup, Parameter};

use std::fmt::{Debug, Display};

/// Floating-point element type of a graph: `f32` for training storage,
/// `f64` for gradient-check mode.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::iter::Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and seeded init draws.
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
