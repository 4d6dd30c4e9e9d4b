//! Conv1D-LSTM classifier built from scratch: layer specs with closed-form
//! parameter accounting, forward pass, backpropagation (BPTT through both
//! LSTMs, batch-statistic gradients through BatchNorm), Adam, and the
//! checkpoint format.

pub mod checkpoint;
mod layers;
pub mod model;
pub mod optim;
pub mod params;
pub mod spec;
pub mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use model::{ForwardCache, Mode, backward, cross_entropy, forward, predict};
pub use optim::Adam;
pub use params::{Gradients, ParamStore};
pub use spec::{Activation, Architecture, FeatureShape, Layer, ModelSpec, SummaryRow};
pub use tensor::Tensor;

/// Floating-point element type of a network: `f32` for training, `f64` for
/// gradient checking.
pub trait Real:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// `c = a b + beta c` on strided matrices.
    ///
    /// # Safety
    /// Every addressed element of `a` (m x k), `b` (k x n) and `c` (m x n)
    /// must lie inside its allocation, and `c` must not overlap `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        unsafe { matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) }
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        unsafe { matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input value at index {0}")]
    NonFiniteInput(usize),
    #[error("non-finite activation in layer {layer} ({kind})")]
    NonFiniteActivation { layer: usize, kind: &'static str },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Builds the network and its Glorot-initialized parameters.
pub fn build_model<T: Real>(arch: &Architecture, seed: u64) -> Result<(ModelSpec, ParamStore<T>), NnError> {
    let spec = ModelSpec::from_architecture(arch)?;
    let params = ParamStore::init(&spec, seed)?;
    Ok((spec, params))
}

/// Per-layer learnable-plus-statistics parameter counts.
pub fn param_count(spec: &ModelSpec) -> Vec<usize> {
    spec.param_counts().expect("spec validated at construction")
}
