use crate::error::{NnError, Result};
use crate::real::Real;

/// Dense row-major tensor with up to five axes (batch, channel, x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); n] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::Shape(format!("shape {shape:?} needs {n} elements, got {}", data.len())));
        }
        if shape.len() > 5 {
            return Err(NnError::Shape(format!("at most 5 axes, got {}", shape.len())));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Same data, new shape with identical element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(NnError::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenate 2-D tensors `[n, w_i]` along the feature axis.
    pub fn concat_cols(parts: &[&Tensor<T>]) -> Result<Self> {
        let n = parts.first().map(|p| p.shape[0]).ok_or_else(|| NnError::Shape("concat of zero tensors".into()))?;
        let mut width = 0;
        for p in parts {
            if p.shape.len() != 2 || p.shape[0] != n {
                return Err(NnError::Shape(format!("concat expects [{n}, w] parts, got {:?}", p.shape)));
            }
            width += p.shape[1];
        }
        let mut out = Vec::with_capacity(n * width);
        for row in 0..n {
            for p in parts {
                let w = p.shape[1];
                out.extend_from_slice(&p.data[row * w..(row + 1) * w]);
            }
        }
        Tensor::from_vec(&[n, width], out)
    }

    /// Inverse of [`Tensor::concat_cols`]: split `[n, sum(widths)]` into parts.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Self>> {
        let total: usize = widths.iter().sum();
        if self.shape.len() != 2 || self.shape[1] != total {
            return Err(NnError::Shape(format!("cannot split {:?} into widths summing to {total}", self.shape)));
        }
        let n = self.shape[0];
        let mut parts: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(n * w)).collect();
        for row in 0..n {
            let mut off = row * total;
            for (part, &w) in parts.iter_mut().zip(widths) {
                part.extend_from_slice(&self.data[off..off + w]);
                off += w;
            }
        }
        parts.into_iter().zip(widths).map(|(d, &w)| Tensor::from_vec(&[n, w], d)).collect()
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| NnError::Shape("stack of zero tensors".into()))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape != first.shape {
                return Err(NnError::Shape(format!("stack shape mismatch {:?} vs {:?}", t.shape, first.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(&shape, data)
    }

    /// Concatenate along the first axis; trailing shapes must agree.
    pub fn concat_rows(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| NnError::Shape("concat of zero tensors".into()))?;
        let tail = &first.shape[1..];
        let mut rows = 0;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        for t in items {
            if t.shape.len() != first.shape.len() || &t.shape[1..] != tail {
                return Err(NnError::Shape(format!("concat shape mismatch {:?} vs {:?}", t.shape, first.shape)));
            }
            rows += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(tail);
        Tensor::from_vec(&shape, data)
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }
}
