use crate::{NnError, Result};
use rand::Rng;

/// Element type for all kernels. Training uses `f32`, gradient checks `f64`.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
    fn c(v: f64) -> Self {
        Self::from(v).expect("f64 -> scalar")
    }
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar -> f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense n-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {:?} holds {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Reinterpret under a new shape with the same element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "cannot reshape {:?} to {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Leading dimensions flattened: (rows, last_dim).
    pub fn as_2d(&self) -> (usize, usize) {
        let last = *self.shape.last().unwrap_or(&1);
        (self.data.len() / last.max(1), last)
    }

    pub fn fill(&mut self, v: F) {
        for x in &mut self.data {
            *x = v;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    #[cfg(debug_assertions)]
    pub fn debug_check_finite(&self, what: &str) {
        assert!(self.all_finite(), "non-finite values after {what}");
    }

    #[cfg(not(debug_assertions))]
    pub fn debug_check_finite(&self, _what: &str) {}

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::c(x.f64())).collect(),
        }
    }

    /// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn rand_fan_in<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let s = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| F::c(rng.gen_range(-s..s)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }
}

/// Trainable tensor with a gradient buffer and a per-parameter learning-rate
/// multiplier (the final layers train at half the global rate).
#[derive(Clone, Debug)]
pub struct Parameter<F> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub lr_mult: f64,
}

impl<F: Scalar> Parameter<F> {
    pub fn new(value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            lr_mult: 1.0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn cast<G: Scalar>(&self) -> Parameter<G> {
        Parameter {
            value: self.value.cast(),
            grad: self.grad.cast(),
            lr_mult: self.lr_mult,
        }
    }
}
