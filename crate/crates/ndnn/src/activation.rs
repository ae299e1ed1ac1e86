use rand::Rng as _;

use crate::error::{NnError, Result};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Mode;

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward<T: Real>(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        self.mask = x.data().iter().map(|&v| v > T::zero()).collect();
        for v in x.data_mut() {
            if !(*v > T::zero()) {
                *v = T::zero();
            }
        }
        x
    }

    pub fn backward<T: Real>(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        if grad.len() != self.mask.len() {
            return Err(NnError::Shape("relu backward does not match forward".into()));
        }
        for (g, &keep) in grad.data_mut().iter_mut().zip(&self.mask) {
            if !keep {
                *g = T::zero();
            }
        }
        Ok(grad)
    }

    pub fn clear_cache(&mut self) {
        self.mask = Vec::new();
    }
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - ratio)` during
/// training; evaluation is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    ratio: f64,
    rng: Rng,
    scale: Vec<f32>,
}

impl Dropout {
    pub fn new(ratio: f64, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(NnError::Config(format!("dropout ratio must be in [0, 1), got {ratio}")));
        }
        Ok(Self { ratio, rng, scale: Vec::new() })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn forward<T: Real>(&mut self, mut x: Tensor<T>, mode: Mode) -> Tensor<T> {
        if mode == Mode::Eval || self.ratio == 0.0 {
            self.scale.clear();
            return x;
        }
        let keep = 1.0 / (1.0 - self.ratio);
        let ratio = self.ratio;
        let rng = &mut self.rng;
        self.scale = (0..x.len()).map(|_| if rng.gen::<f64>() < ratio { 0.0 } else { keep as f32 }).collect();
        for (v, &s) in x.data_mut().iter_mut().zip(&self.scale) {
            *v *= T::from_f32(s).unwrap_or_else(T::zero);
        }
        x
    }

    pub fn backward<T: Real>(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        if self.scale.is_empty() {
            return Ok(grad);
        }
        if grad.len() != self.scale.len() {
            return Err(NnError::Shape("dropout backward does not match forward".into()));
        }
        for (g, &s) in grad.data_mut().iter_mut().zip(&self.scale) {
            *g *= T::from_f32(s).unwrap_or_else(T::zero);
        }
        Ok(grad)
    }

    pub fn clear_cache(&mut self) {
        self.scale = Vec::new();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};

    fn sample() -> Tensor<f64> {
        Tensor::from_vec(&[2, 5], (0..10).map(|i| i as f64 - 4.5).collect()).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut r = Relu::default();
        let y = r.forward(sample());
        assert!(y.data().iter().all(|&v| v >= 0.0));
        assert_eq!(y.data()[9], 4.5);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut d = Dropout::new(0.4, stream(1, StreamId::Dropout { sub: 0 })).unwrap();
        assert_eq!(d.forward(sample(), Mode::Eval), sample());
    }

    #[test]
    fn dropout_zero_ratio_is_identity_in_both_modes() {
        let mut d = Dropout::new(0.0, stream(1, StreamId::Dropout { sub: 0 })).unwrap();
        assert_eq!(d.forward(sample(), Mode::Train), sample());
        assert_eq!(d.forward(sample(), Mode::Eval), sample());
    }

    #[test]
    fn dropout_train_uses_inverted_scaling() {
        let mut d = Dropout::new(0.5, stream(1, StreamId::Dropout { sub: 0 })).unwrap();
        let x = Tensor::<f64>::full(&[1, 4000], 1.0);
        let y = d.forward(x, Mode::Train);
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let mean = y.data().iter().sum::<f64>() / 4000.0;
        assert!((mean - 1.0).abs() < 0.1);
    }

    #[test]
    fn invalid_ratio_rejected() {
        assert!(Dropout::new(1.0, stream(1, StreamId::Dropout { sub: 0 })).is_err());
    }
}
