use crate::error::{NnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Non-overlapping 3D max pooling (window = stride), floor mode.
///
/// Trailing voxels that do not fill a window are dropped. Backward routes
/// each output gradient to the first maximal input of its window.
#[derive(Debug, Clone)]
pub struct MaxPool3d {
    window: usize,
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
}

impl MaxPool3d {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(NnError::Config("pool window must be positive".into()));
        }
        Ok(Self { window, argmax: Vec::new(), in_shape: Vec::new() })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn output_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        dims.map(|d| d / self.window)
    }

    pub fn forward<T: Real>(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 5 {
            return Err(NnError::Shape(format!("maxpool3d expects 5 axes, got {s:?}")));
        }
        let (n, c) = (s[0], s[1]);
        let [d, h, w] = [s[2], s[3], s[4]];
        let [od, oh, ow] = self.output_dims([d, h, w]);
        let k = self.window;
        let mut out = Vec::with_capacity(n * c * od * oh * ow);
        let mut argmax = Vec::with_capacity(out.capacity());
        let xd = x.data();
        for plane in 0..n * c {
            let base = plane * d * h * w;
            for z in 0..od {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut best = T::neg_infinity();
                        let mut best_i = usize::MAX;
                        for dz in 0..k {
                            for dy in 0..k {
                                let row = base + ((z * k + dz) * h + y * k + dy) * w + xx * k;
                                for dx in 0..k {
                                    let v = xd[row + dx];
                                    if best_i == usize::MAX || v > best {
                                        best = v;
                                        best_i = row + dx;
                                    }
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_i);
                    }
                }
            }
        }
        self.argmax = argmax;
        self.in_shape = s.to_vec();
        Tensor::from_vec(&[n, c, od, oh, ow], out)
    }

    pub fn backward<T: Real>(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        if grad.len() != self.argmax.len() {
            return Err(NnError::Shape("maxpool3d backward does not match forward".into()));
        }
        let mut dx = Tensor::zeros(&self.in_shape);
        let dd = dx.data_mut();
        for (&i, &g) in self.argmax.iter().zip(grad.data()) {
            dd[i] += g;
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.argmax = Vec::new();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_shape_trace() {
        let p = MaxPool3d::new(2).unwrap();
        let mut dims = [19, 19, 19];
        let mut trace = vec![19];
        for _ in 0..3 {
            dims = p.output_dims(dims);
            trace.push(dims[0]);
        }
        assert_eq!(trace, vec![19, 9, 4, 2]);
    }

    #[test]
    fn max_of_eight() {
        let mut p = MaxPool3d::new(2).unwrap();
        let x = Tensor::from_vec(&[1, 1, 2, 2, 2], vec![3.0f32, -1.0, 7.5, 2.0, 0.0, 7.0, 1.0, 6.0]).unwrap();
        let y = p.forward(x).unwrap();
        assert_eq!(y.data(), &[7.5]);
        let dx = p.backward(Tensor::from_vec(&[1, 1, 1, 1, 1], vec![2.0f32]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ties_route_to_first_element() {
        let mut p = MaxPool3d::new(2).unwrap();
        let y = p.forward(Tensor::<f64>::full(&[1, 1, 4, 4, 4], 1.5)).unwrap();
        assert!(y.data().iter().all(|&v| v == 1.5));
        let dx = p.backward(Tensor::full(&[1, 1, 2, 2, 2], 1.0)).unwrap();
        assert_eq!(dx.data().iter().filter(|&&v| v == 1.0).count(), 8);
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let i = ((2 * z) * 4 + 2 * y) * 4 + 2 * x;
                    assert_eq!(dx.data()[i], 1.0);
                }
            }
        }
    }

    #[test]
    fn odd_trailing_voxels_dropped() {
        let mut p = MaxPool3d::new(2).unwrap();
        let mut data = vec![0.0f64; 27];
        data[26] = 100.0; // (2,2,2) lies outside the only full window
        let y = p.forward(Tensor::from_vec(&[1, 1, 3, 3, 3], data).unwrap()).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(y.data(), &[0.0]);
    }
}
