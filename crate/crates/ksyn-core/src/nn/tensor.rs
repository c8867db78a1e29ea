//! Dense 4D tensors in (batch, channel, height, width) layout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_mismatch, Result};
use crate::nn::Scalar;

/// Row-major (n, c, h, w) tensor with an optional gradient buffer of the
/// same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<F> {
    data: Vec<F>,
    shape: [usize; 4],
    grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor4<F> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        let len = shape.iter().product();
        Self {
            data: vec![F::zero(); len],
            shape,
            grad: None,
        }
    }

    pub fn from_vec(data: Vec<F>, shape: [usize; 4]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(shape_mismatch(
                "Tensor4::from_vec",
                format!("{len} elements {shape:?}"),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { data, shape, grad: None })
    }

    /// Standard-normal fill scaled by `std`, consuming one draw per element.
    pub fn randn<R: Rng>(shape: [usize; 4], std: f64, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let len: usize = shape.iter().product();
        let s = F::from_f64_c(std);
        let data = (0..len).map(|_| rng.sample::<F, _>(StandardNormal) * s).collect();
        Self { data, shape, grad: None }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Reinterpret the buffer under a new shape of equal length.
    pub fn reshape(mut self, shape: [usize; 4]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(shape_mismatch(
                "Tensor4::reshape",
                format!("{} elements", self.data.len()),
                format!("{len} elements {shape:?}"),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> F {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: F) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn enable_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![F::zero(); self.data.len()]);
        }
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocating it on first use.
    pub fn grad_mut(&mut self) -> &mut [F] {
        self.enable_grad();
        self.grad.as_deref_mut().expect("just enabled")
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn accumulate_grad(&mut self, delta: &[F]) {
        debug_assert_eq!(delta.len(), self.data.len());
        let g = self.grad_mut();
        for (gi, &di) in g.iter_mut().zip(delta) {
            *gi = *gi + di;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean of all elements.
    pub fn mean(&self) -> F {
        if self.data.is_empty() {
            return F::zero();
        }
        let sum: F = self.data.iter().copied().sum();
        sum / F::from_f64_c(self.data.len() as f64)
    }

    /// Cast every element through f64 into another scalar type.
    pub fn cast<G: Scalar>(&self) -> Tensor4<G> {
        Tensor4 {
            data: self.data.iter().map(|v| G::from_f64_c(v.to_f64_c())).collect(),
            shape: self.shape,
            grad: None,
        }
    }
}
