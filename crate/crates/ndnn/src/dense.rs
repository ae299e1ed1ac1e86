use rand::Rng as _;

use crate::error::{NnError, Result};
use crate::param::Param;
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Fully connected layer `y = x W^T + b` on `[n, in]` inputs.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(NnError::Config("dense layer widths must be positive".into()));
        }
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit))).collect();
        Ok(Self {
            weight: Param::new(Tensor::from_vec(&[outputs, inputs], w)?),
            bias: Param::new(Tensor::zeros(&[outputs])),
            input: None,
        })
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(NnError::Shape(format!("dense weight {:?} / bias {:?}", weight.shape(), bias.shape())));
        }
        Ok(Self { weight: Param::new(weight), bias: Param::new(bias), input: None })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (din, dout) = (self.inputs(), self.outputs());
        if x.shape().len() != 2 || x.shape()[1] != din {
            return Err(NnError::Shape(format!("dense expects [n, {din}], got {:?}", x.shape())));
        }
        let n = x.shape()[0];
        let mut out = Vec::with_capacity(n * dout);
        for _ in 0..n {
            out.extend_from_slice(self.bias.value.data());
        }
        T::gemm(false, true, n, dout, din, T::one(), x.data(), self.weight.value.data(), T::one(), &mut out);
        self.input = Some(x);
        Tensor::from_vec(&[n, dout], out)
    }

    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| NnError::Shape("dense backward before forward".into()))?;
        let (din, dout) = (self.inputs(), self.outputs());
        let n = x.shape()[0];
        if grad.shape() != [n, dout] {
            return Err(NnError::Shape(format!("dense grad shape {:?}", grad.shape())));
        }
        if !self.weight.frozen {
            T::gemm(true, false, dout, din, n, T::one(), grad.data(), x.data(), T::one(), self.weight.grad_mut());
        }
        if !self.bias.frozen {
            let gb = self.bias.grad_mut();
            for (j, g) in gb.iter_mut().enumerate() {
                let acc: f64 = (0..n).map(|i| grad.data()[i * dout + j].as_f64()).sum();
                *g += T::from_f64_lossy(acc);
            }
        }
        let mut dx = vec![T::zero(); n * din];
        T::gemm(false, false, n, din, dout, T::one(), grad.data(), self.weight.value.data(), T::zero(), &mut dx);
        Tensor::from_vec(&[n, din], dx)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let mut eye = vec![0.0f64; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let mut d = Dense::from_params(Tensor::from_vec(&[3, 3], eye).unwrap(), Tensor::zeros(&[3])).unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        assert_eq!(d.forward(x.clone()).unwrap(), x);
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut d = Dense::<f32>::from_params(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).unwrap();
        assert!(d.forward(Tensor::zeros(&[1, 4])).is_err());
    }
}
