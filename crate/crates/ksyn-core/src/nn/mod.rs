//! Minimal neural-network substrate.
//!
//! A fixed layer vocabulary (3x3 conv, stride-2 transposed conv,
//! group-norm, SiLU, linear, nearest resampling, sinusoidal timestep
//! embedding, channel concat) with hand-written reverse-mode gradients,
//! plus Adam and parameter EMA. The two networks built on top are small
//! and static, so a fixed vocabulary is verified exhaustively by the
//! finite-difference suite instead of a general tape.
//!
//! Everything is generic over [`Scalar`]: training instantiates `f32`,
//! gradient-check oracles instantiate `f64`.

mod layers;
mod optim;
mod tensor;

pub use layers::{
    concat_channels, downsample2x_nearest, split_channels, timestep_embedding, upsample2x_backward,
    upsample2x_nearest, Conv2d, ConvTranspose2d, GroupNorm, Linear, SiLu,
};
pub use optim::{Adam, AdamParams, Ema, StepOutcome};
pub use tensor::Tensor4;

use alloc::string::String;
use alloc::vec::Vec;

/// Floating-point element type of the substrate.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + core::fmt::Debug
    + core::fmt::Display
    + core::iter::Sum
    + Default
    + 'static
{
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }
    fn to_f64_c(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64_c(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_c(self) -> f64 {
        self
    }
}

/// Anything holding trainable tensors. Enumeration order is fixed per
/// implementation, which is what aligns optimizer slots, EMA shadows and
/// checkpoint blocks.
pub trait ParamSet<F: Scalar> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>);
    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>);
    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>);

    fn params(&self) -> Vec<&Tensor4<F>> {
        let mut v = Vec::new();
        self.visit_params(&mut v);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor4<F>> {
        let mut v = Vec::new();
        self.visit_params_mut(&mut v);
        v
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        self.push_param_names("", &mut v);
        v
    }

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
