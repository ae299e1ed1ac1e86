use rand::Rng as _;

use crate::error::{NnError, Result};
use crate::param::Param;
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `kernel / 2` so stride-1 output matches input dims.
    Same,
    Valid,
}

/// 3D cross-correlation over `[n, c, d, h, w]` inputs, stride 1.
///
/// Implemented as im2col followed by a GEMM per sample. The input is cached
/// on forward and the column matrix is rebuilt on backward.
#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    kernel: usize,
    padding: Padding,
    input: Option<Tensor<T>>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    dims: [usize; 3],
    out: [usize; 3],
    k: usize,
    pad: usize,
}

impl Geometry {
    fn in_len(&self) -> usize {
        self.cin * self.dims.iter().product::<usize>()
    }
    fn out_pixels(&self) -> usize {
        self.out.iter().product()
    }
    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k * self.k
    }
}

impl<T: Real> Conv3d<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn new(cin: usize, cout: usize, kernel: usize, padding: Padding, rng: &mut Rng) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(NnError::Config(format!("conv kernel must be odd, got {kernel}")));
        }
        if cin == 0 || cout == 0 {
            return Err(NnError::Config("conv channels must be positive".into()));
        }
        let k3 = kernel * kernel * kernel;
        let limit = (6.0 / ((cin + cout) * k3) as f64).sqrt();
        let n = cout * cin * kernel * kernel * kernel;
        let w: Vec<T> = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit))).collect();
        Ok(Self {
            weight: Param::new(Tensor::from_vec(&[cout, cin, kernel, kernel, kernel], w)?),
            bias: Param::new(Tensor::zeros(&[cout])),
            kernel,
            padding,
            input: None,
        })
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>, padding: Padding) -> Result<Self> {
        let s = weight.shape().to_vec();
        if s.len() != 5 || s[2] != s[3] || s[3] != s[4] || s[2] % 2 == 0 {
            return Err(NnError::Shape(format!("conv weight must be [o, i, k, k, k] with odd k, got {s:?}")));
        }
        if bias.shape() != [s[0]] {
            return Err(NnError::Shape(format!("conv bias must be [{}], got {:?}", s[0], bias.shape())));
        }
        Ok(Self { kernel: s[2], weight: Param::new(weight), bias: Param::new(bias), padding, input: None })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    /// Output spatial dims for the given input dims, `None` if they vanish.
    pub fn output_dims(&self, dims: [usize; 3]) -> Option<[usize; 3]> {
        let pad = self.pad();
        let mut out = [0; 3];
        for (o, &d) in out.iter_mut().zip(&dims) {
            let padded = d + 2 * pad;
            if padded < self.kernel {
                return None;
            }
            *o = padded - self.kernel + 1;
        }
        Some(out)
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => self.kernel / 2,
            Padding::Valid => 0,
        }
    }

    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        if shape.len() != 5 || shape[1] != self.in_channels() {
            return Err(NnError::Shape(format!("conv3d expects [n, {}, d, h, w], got {shape:?}", self.in_channels())));
        }
        let dims = [shape[2], shape[3], shape[4]];
        let out = self
            .output_dims(dims)
            .ok_or_else(|| NnError::Shape(format!("conv3d input {dims:?} smaller than kernel")))?;
        Ok(Geometry { cin: shape[1], dims, out, k: self.kernel, pad: self.pad() })
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x.shape())?;
        let n = x.shape()[0];
        let cout = self.out_channels();
        let p = g.out_pixels();
        let rows = g.col_rows();
        let mut out = vec![T::zero(); n * cout * p];
        let mut cols = vec![T::zero(); rows * p];
        let bias = self.bias.value.data();
        for s in 0..n {
            let xs = &x.data()[s * g.in_len()..(s + 1) * g.in_len()];
            im2col(xs, &g, &mut cols);
            let os = &mut out[s * cout * p..(s + 1) * cout * p];
            for (c, chunk) in os.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = bias[c]);
            }
            T::gemm(false, false, cout, p, rows, T::one(), self.weight.value.data(), &cols, T::one(), os);
        }
        self.input = Some(x);
        Tensor::from_vec(&[n, cout, g.out[0], g.out[1], g.out[2]], out)
    }

    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| NnError::Shape("conv3d backward before forward".into()))?;
        let g = self.geometry(x.shape())?;
        let n = x.shape()[0];
        let cout = self.out_channels();
        let p = g.out_pixels();
        let rows = g.col_rows();
        if grad.shape() != [n, cout, g.out[0], g.out[1], g.out[2]] {
            return Err(NnError::Shape(format!("conv3d grad shape {:?}", grad.shape())));
        }
        let mut dx = vec![T::zero(); x.len()];
        let mut cols = vec![T::zero(); rows * p];
        let mut dcols = vec![T::zero(); rows * p];
        let train_w = !self.weight.frozen;
        let train_b = !self.bias.frozen;
        for s in 0..n {
            let gs = &grad.data()[s * cout * p..(s + 1) * cout * p];
            if train_w {
                let xs = &x.data()[s * g.in_len()..(s + 1) * g.in_len()];
                im2col(xs, &g, &mut cols);
                T::gemm(false, true, cout, rows, p, T::one(), gs, &cols, T::one(), self.weight.grad_mut());
            }
            if train_b {
                let gb = self.bias.grad_mut();
                for (c, chunk) in gs.chunks(p).enumerate() {
                    let acc: f64 = chunk.iter().map(|v| v.as_f64()).sum();
                    gb[c] += T::from_f64_lossy(acc);
                }
            }
            T::gemm(true, false, rows, p, cout, T::one(), self.weight.value.data(), gs, T::zero(), &mut dcols);
            col2im(&dcols, &g, &mut dx[s * g.in_len()..(s + 1) * g.in_len()]);
        }
        Tensor::from_vec(x.shape(), dx)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

/// Range of output x positions whose input column `ox + kx - pad` is in bounds.
fn valid_x(kx: usize, pad: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).min(ow);
    let hi = (w + pad).saturating_sub(kx).min(ow).max(lo);
    (lo, hi)
}

fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let [d, h, w] = g.dims;
    let [od, oh, ow] = g.out;
    let k = g.k;
    let pad = g.pad;
    let p = od * oh * ow;
    let mut row = 0;
    for c in 0..g.cin {
        let xc = &x[c * d * h * w..(c + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = valid_x(kx, pad, w, ow);
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oz in 0..od {
                        let iz = (oz + kz).wrapping_sub(pad);
                        for oy in 0..oh {
                            let iy = (oy + ky).wrapping_sub(pad);
                            let seg = &mut dst[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                            if iz >= d || iy >= h {
                                seg.fill(T::zero());
                                continue;
                            }
                            seg[..lo].fill(T::zero());
                            seg[hi..].fill(T::zero());
                            if hi > lo {
                                let start = (iz * h + iy) * w + lo + kx - pad;
                                seg[lo..hi].copy_from_slice(&xc[start..start + (hi - lo)]);
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let [d, h, w] = g.dims;
    let [od, oh, ow] = g.out;
    let k = g.k;
    let pad = g.pad;
    let p = od * oh * ow;
    let mut row = 0;
    for c in 0..g.cin {
        let xc = &mut dx[c * d * h * w..(c + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = valid_x(kx, pad, w, ow);
                    let src = &cols[row * p..(row + 1) * p];
                    for oz in 0..od {
                        let iz = (oz + kz).wrapping_sub(pad);
                        if iz >= d {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy + ky).wrapping_sub(pad);
                            if iy >= h || hi <= lo {
                                continue;
                            }
                            let seg = &src[(oz * oh + oy) * ow + lo..(oz * oh + oy) * ow + hi];
                            let start = (iz * h + iy) * w + lo + kx - pad;
                            for (t, &v) in xc[start..start + (hi - lo)].iter_mut().zip(seg) {
                                *t += v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};

    fn delta_kernel() -> Tensor<f64> {
        let mut w = vec![0.0; 27];
        w[13] = 1.0;
        Tensor::from_vec(&[1, 1, 3, 3, 3], w).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut conv = Conv3d::from_params(delta_kernel(), Tensor::zeros(&[1]), Padding::Same).unwrap();
        let x: Vec<f64> = (0..2 * 64).map(|i| (i as f64 * 0.13).sin()).collect();
        let x = Tensor::from_vec(&[2, 1, 4, 4, 4], x).unwrap();
        let y = conv.forward(x.clone()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let w = Tensor::<f64>::zeros(&[2, 1, 3, 3, 3]);
        let b = Tensor::from_vec(&[2], vec![0.5, -1.5]).unwrap();
        let mut conv = Conv3d::from_params(w, b, Padding::Same).unwrap();
        let y = conv.forward(Tensor::full(&[1, 1, 3, 4, 5], 2.0)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 3, 4, 5]);
        assert!(y.data()[..60].iter().all(|&v| v == 0.5));
        assert!(y.data()[60..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn matches_direct_loop() {
        let mut rng = stream(3, StreamId::Init { sub: 0 });
        for padding in [Padding::Same, Padding::Valid] {
            let mut conv = Conv3d::<f64>::new(2, 3, 3, padding, &mut rng).unwrap();
            conv.bias.value.data_mut().copy_from_slice(&[0.1, 0.2, 0.3]);
            let (d, h, w) = (4, 5, 3);
            let x: Vec<f64> = (0..2 * d * h * w).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
            let xt = Tensor::from_vec(&[1, 2, d, h, w], x.clone()).unwrap();
            let y = conv.forward(xt).unwrap();
            let pad = if padding == Padding::Same { 1 } else { 0 };
            let [od, oh, ow] = conv.output_dims([d, h, w]).unwrap();
            let wt = conv.weight.value.data();
            for o in 0..3 {
                for z in 0..od {
                    for yy in 0..oh {
                        for xx in 0..ow {
                            let mut acc = conv.bias.value.data()[o];
                            for c in 0..2 {
                                for kz in 0..3 {
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            let iz = z as isize + kz as isize - pad;
                                            let iy = yy as isize + ky as isize - pad;
                                            let ix = xx as isize + kx as isize - pad;
                                            if iz < 0
                                                || iy < 0
                                                || ix < 0
                                                || iz >= d as isize
                                                || iy >= h as isize
                                                || ix >= w as isize
                                            {
                                                continue;
                                            }
                                            let xv = x[((c * d + iz as usize) * h + iy as usize) * w + ix as usize];
                                            acc += wt[(((o * 2 + c) * 3 + kz) * 3 + ky) * 3 + kx] * xv;
                                        }
                                    }
                                }
                            }
                            let got = y.data()[((o * od + z) * oh + yy) * ow + xx];
                            assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn even_kernel_rejected() {
        let mut rng = stream(0, StreamId::Init { sub: 0 });
        assert!(Conv3d::<f32>::new(1, 1, 2, Padding::Same, &mut rng).is_err());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut rng = stream(0, StreamId::Init { sub: 0 });
        let mut conv = Conv3d::<f32>::new(2, 1, 3, Padding::Same, &mut rng).unwrap();
        assert!(conv.forward(Tensor::zeros(&[1, 1, 3, 3, 3])).is_err());
    }
}
