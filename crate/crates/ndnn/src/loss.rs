use crate::error::{NnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Result of [`softmax_xent`].
#[derive(Debug, Clone)]
pub struct XentOutput<T> {
    /// Mean cross-entropy over the batch, accumulated in f64.
    pub loss: f64,
    pub probs: Tensor<T>,
    /// Gradient of the mean loss w.r.t. the logits: `(probs - onehot) / n`.
    pub grad: Tensor<T>,
}

/// Row-wise softmax of `[n, k]` logits with max subtraction.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.shape().len() != 2 {
        return Err(NnError::Shape(format!("softmax expects [n, k], got {:?}", logits.shape())));
    }
    let k = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(k) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::from_f64_lossy(e / z)));
    }
    Tensor::from_vec(logits.shape(), out)
}

pub fn softmax_xent<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<XentOutput<T>> {
    let probs = softmax(logits)?;
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(NnError::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut loss = 0.0;
    let mut grad = probs.clone();
    let inv_n = 1.0 / n as f64;
    for (i, (&y, row)) in labels.iter().zip(logits.data().chunks(k)).enumerate() {
        if y >= k {
            return Err(NnError::Shape(format!("label {y} out of range for {k} classes")));
        }
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        loss += lse - row[y].as_f64();
        let g = &mut grad.data_mut()[i * k..(i + 1) * k];
        for (j, v) in g.iter_mut().enumerate() {
            let onehot = if j == y { 1.0 } else { 0.0 };
            *v = T::from_f64_lossy((v.as_f64() - onehot) * inv_n);
        }
    }
    if !loss.is_finite() {
        return Err(NnError::NonFinite("cross-entropy loss"));
    }
    Ok(XentOutput { loss: loss * inv_n, probs, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_half_and_ln2() {
        let out = softmax_xent(&Tensor::from_vec(&[1, 2], vec![0.3f64, 0.3]).unwrap(), &[1]).unwrap();
        assert_eq!(out.probs.data(), &[0.5, 0.5]);
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_have_tiny_loss() {
        let out = softmax_xent(&Tensor::from_vec(&[1, 2], vec![20.0f32, -20.0]).unwrap(), &[0]).unwrap();
        assert!(out.loss < 1e-8);
    }

    #[test]
    fn gradient_is_probs_minus_onehot() {
        let out = softmax_xent(&Tensor::from_vec(&[1, 3], vec![1.0f64, 2.0, -0.5]).unwrap(), &[2]).unwrap();
        let p = out.probs.data();
        assert_eq!(out.grad.data(), &[p[0], p[1], p[2] - 1.0]);
    }

    #[test]
    fn label_out_of_range_rejected() {
        assert!(softmax_xent(&Tensor::<f32>::zeros(&[1, 2]), &[2]).is_err());
    }
}
