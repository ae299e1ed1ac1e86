use crate::real::Real;
use crate::tensor::Tensor;

/// Trainable tensor with its gradient and Adam moments.
///
/// `grad`, `adam_m` and `adam_v` are allocated on first use so that large
/// models can be built for inspection without paying for optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    pub adam_m: Vec<T>,
    pub adam_v: Vec<T>,
    pub step_count: u64,
    pub frozen: bool,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        Self { value, grad: Vec::new(), adam_m: Vec::new(), adam_v: Vec::new(), step_count: 0, frozen: false }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        if self.grad.len() != self.value.len() {
            self.grad = vec![T::zero(); self.value.len()];
        }
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn has_adam_state(&self) -> bool {
        !self.adam_m.is_empty()
    }
}
