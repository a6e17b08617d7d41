//! Minimal layers with hand-written backward passes.
//!
//! Every layer is immutable during `forward`, which returns a cache; `backward`
//! consumes that cache and optionally accumulates parameter gradients into a
//! second instance of the same layer used purely as gradient storage (see
//! [`zeros_like`]). Activations are `[batch, channel, time]` tensors.

mod act;
mod adam;
mod conv;
mod linear;
mod norm;
mod tensor;

pub use act::{relu, relu_backward, sigmoid, sigmoid_backward, tanh, tanh_backward};
pub use adam::Adam;
pub use conv::{Conv1d, ConvCache, ConvTranspose1d, ConvTransposeCache};
pub use linear::Linear;
pub use norm::{BatchNorm1d, BnCache};
pub use tensor::{gemm, Tensor3};

use rand::Rng;

/// Access to the trainable parameters and persistent buffers of a model.
pub trait Module {
    /// Trainable arrays in a fixed order.
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    /// Non-trainable persistent state, such as normalization statistics.
    fn buffers(&self) -> Vec<&[f64]> {
        Vec::new()
    }
    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        Vec::new()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Every parameter and buffer concatenated, for hashing and comparisons.
    fn flat_state(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in self.params().into_iter().chain(self.buffers()) {
            out.extend_from_slice(p);
        }
        out
    }
}

/// A copy of `m` with all trainable parameters set to zero, used as a
/// gradient accumulator.
pub fn zeros_like<M: Module + Clone>(m: &M) -> M {
    let mut g = m.clone();
    for p in g.params_mut() {
        p.fill(0.0);
    }
    g
}

/// Sum of squares over all parameter arrays.
pub fn squared_norm<M: Module>(m: &M) -> f64 {
    m.params()
        .iter()
        .flat_map(|p| p.iter())
        .map(|v| v * v)
        .sum()
}

/// Uniform draw in `[-bound, bound]`, the usual fan-in initialization.
pub(crate) fn uniform_init(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}
