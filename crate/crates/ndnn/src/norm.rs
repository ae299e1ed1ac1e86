use crate::error::{NnError, Result};
use crate::param::Param;
use crate::real::Real;
use crate::tensor::Tensor;
use crate::Mode;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over every axis except axis 1.
///
/// Works for `[n, c, d, h, w]` feature maps and `[n, c]` activations.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<f64>,
    train: bool,
}

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(NnError::Shape(format!("batchnorm expects [n, c, ...], got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, sp) = layout(x.shape())?;
        if c != self.channels() {
            return Err(NnError::Shape(format!("batchnorm has {} channels, input {c}", self.channels())));
        }
        let train = mode == Mode::Train;
        if train && n < 2 {
            return Err(NnError::Shape("batchnorm in training mode needs a batch of at least 2".into()));
        }
        let count = (n * sp) as f64;
        let mut mean = vec![0.0f64; c];
        let mut inv_std = vec![0.0f64; c];
        if train {
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    let off = (b * c + ch) * sp;
                    s += x.data()[off..off + sp].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mu = s / count;
                let mut q = 0.0;
                for b in 0..n {
                    let off = (b * c + ch) * sp;
                    q += x.data()[off..off + sp]
                        .iter()
                        .map(|v| {
                            let d = v.as_f64() - mu;
                            d * d
                        })
                        .sum::<f64>();
                }
                mean[ch] = mu;
                var[ch] = q / count;
                inv_std[ch] = 1.0 / (var[ch] + BN_EPS).sqrt();
            }
            for ch in 0..c {
                let rm = self.running_mean[ch].as_f64();
                let rv = self.running_var[ch].as_f64();
                self.running_mean[ch] = T::from_f64_lossy(BN_MOMENTUM * rm + (1.0 - BN_MOMENTUM) * mean[ch]);
                self.running_var[ch] = T::from_f64_lossy(BN_MOMENTUM * rv + (1.0 - BN_MOMENTUM) * var[ch]);
            }
        } else {
            for ch in 0..c {
                mean[ch] = self.running_mean[ch].as_f64();
                inv_std[ch] = 1.0 / (self.running_var[ch].as_f64() + BN_EPS).sqrt();
            }
        }
        let mut xhat = Tensor::zeros(x.shape());
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                let (mu, is) = (mean[ch], inv_std[ch]);
                let xs = &mut x.data_mut()[off..off + sp];
                let hs = &mut xhat.data_mut()[off..off + sp];
                for (v, h) in xs.iter_mut().zip(hs.iter_mut()) {
                    let nh = (v.as_f64() - mu) * is;
                    *h = T::from_f64_lossy(nh);
                    *v = T::from_f64_lossy(gamma[ch].as_f64() * nh + beta[ch].as_f64());
                }
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, train });
        Ok(x)
    }

    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| NnError::Shape("batchnorm backward before forward".into()))?;
        let (n, c, sp) = layout(grad.shape())?;
        if grad.shape() != cache.xhat.shape() {
            return Err(NnError::Shape("batchnorm grad shape mismatch".into()));
        }
        let count = (n * sp) as f64;
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                for (g, h) in grad.data()[off..off + sp].iter().zip(&cache.xhat.data()[off..off + sp]) {
                    dgamma[ch] += g.as_f64() * h.as_f64();
                    dbeta[ch] += g.as_f64();
                }
            }
        }
        if !self.gamma.frozen {
            for (g, d) in self.gamma.grad_mut().iter_mut().zip(&dgamma) {
                *g += T::from_f64_lossy(*d);
            }
        }
        if !self.beta.frozen {
            for (g, d) in self.beta.grad_mut().iter_mut().zip(&dbeta) {
                *g += T::from_f64_lossy(*d);
            }
        }
        let gamma = self.gamma.value.data();
        let mut dx = Tensor::zeros(grad.shape());
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                let gm = gamma[ch].as_f64();
                let is = cache.inv_std[ch];
                let gs = &grad.data()[off..off + sp];
                let hs = &cache.xhat.data()[off..off + sp];
                let ds = &mut dx.data_mut()[off..off + sp];
                if cache.train {
                    // dxhat = g * gamma; sums over the channel are dbeta*gamma and dgamma*gamma
                    let sum_d = dbeta[ch] * gm;
                    let sum_dh = dgamma[ch] * gm;
                    for ((d, g), h) in ds.iter_mut().zip(gs).zip(hs) {
                        let dxh = g.as_f64() * gm;
                        *d = T::from_f64_lossy(is * (dxh - sum_d / count - h.as_f64() * sum_dh / count));
                    }
                } else {
                    for (d, g) in ds.iter_mut().zip(gs) {
                        *d = T::from_f64_lossy(g.as_f64() * gm * is);
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_stats(t: &Tensor<f64>, ch: usize) -> (f64, f64) {
        let (n, c, sp) = layout(t.shape()).unwrap();
        let mut v = Vec::new();
        for b in 0..n {
            let off = (b * c + ch) * sp;
            v.extend_from_slice(&t.data()[off..off + sp]);
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        (m, var)
    }

    #[test]
    fn training_output_is_standardized() {
        let mut bn = BatchNorm::<f64>::new(2);
        let x: Vec<f64> = (0..3 * 2 * 8).map(|i| ((i * 37 % 17) as f64) * 0.7 + 3.0).collect();
        let y = bn.forward(Tensor::from_vec(&[3, 2, 2, 2, 2], x).unwrap(), Mode::Train).unwrap();
        for ch in 0..2 {
            let (m, v) = channel_stats(&y, ch);
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn standardized_input_passes_through() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = Tensor::from_vec(&[4, 1], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let y = bn.forward(x.clone(), Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn running_stats_use_momentum() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        bn.forward(x, Mode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_uses_running_stats() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.running_mean[0] = 2.0;
        bn.running_var[0] = 4.0 - BN_EPS;
        let y = bn.forward(Tensor::from_vec(&[1, 1], vec![6.0]).unwrap(), Mode::Eval).unwrap();
        assert!((y.data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn training_batch_of_one_rejected() {
        let mut bn = BatchNorm::<f32>::new(1);
        assert!(bn.forward(Tensor::zeros(&[1, 1, 2, 2, 2]), Mode::Train).is_err());
    }
}
