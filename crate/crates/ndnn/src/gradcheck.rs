//! Central finite-difference gradient checks for the layer set.
//!
//! Each check builds a tiny random instance of a layer, projects its output
//! onto a fixed random direction to obtain a scalar loss, and compares the
//! analytic input and parameter gradients against central differences of
//! that loss. The error reported is norm-wise:
//! `|analytic - numeric| / max(|analytic|, |numeric|)`.

use rand::Rng as _;

use crate::activation::Relu;
use crate::conv::{Conv3d, Padding};
use crate::dense::Dense;
use crate::error::Result;
use crate::loss::softmax_xent;
use crate::norm::BatchNorm;
use crate::pool::MaxPool3d;
use crate::real::Real;
use crate::rng::{stream, Rng, StreamId};
use crate::sequential::{Flatten, Layer, Sequential};
use crate::tensor::Tensor;
use crate::Mode;

pub const STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub op: &'static str,
    pub rel_error: f64,
    pub coordinates: usize,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Central differences of `loss` at `x`. The actual representable step is
/// used as the denominator so 32-bit rounding of `x ± h` does not bias it.
pub fn numeric_gradient<T: Real>(x: &[T], h: f64, mut loss: impl FnMut(&[T]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let x0 = x[i];
        let xp = T::from_f64_lossy(x0.as_f64() + h);
        let xm = T::from_f64_lossy(x0.as_f64() - h);
        work[i] = xp;
        let lp = loss(&work);
        work[i] = xm;
        let lm = loss(&work);
        work[i] = x0;
        out.push((lp - lm) / (xp.as_f64() - xm.as_f64()));
    }
    out
}

fn random_vec<T: Real>(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<T> {
    (0..n).map(|_| T::from_f64_lossy(rng.gen_range(lo..hi))).collect()
}

fn project<T: Real>(y: &Tensor<T>, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| a.as_f64() * b).sum()
}

/// Check input and parameter gradients of a layer stack in the given mode.
pub fn check_sequential<T: Real>(
    op: &'static str,
    net: &Sequential<T>,
    x: &Tensor<T>,
    mode: Mode,
    h: f64,
    seed: u64,
) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Other { tag: 7, sub: 0 });
    let mut probe = net.clone();
    let y = probe.forward(x.clone(), mode)?;
    let w: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gy = Tensor::from_vec(y.shape(), w.iter().map(|&v| T::from_f64_lossy(v)).collect())?;
    let dx = probe.backward(gy)?;

    let mut analytic: Vec<f64> = dx.data().iter().map(|v| v.as_f64()).collect();
    let mut numeric = numeric_gradient(x.data(), h, |xs| {
        let mut n = net.clone();
        let xt = Tensor::from_vec(x.shape(), xs.to_vec()).expect("same shape");
        project(&n.forward(xt, mode).expect("forward"), &w)
    });

    let param_count = probe.params_mut().len();
    for pi in 0..param_count {
        let grad: Vec<f64> = {
            let mut ps = probe.params_mut();
            let p = &mut ps[pi];
            let g = p.grad_mut().to_vec();
            g.iter().map(|v| v.as_f64()).collect()
        };
        let base: Vec<T> = {
            let mut n = net.clone();
            let ps = n.params_mut();
            ps[pi].value.data().to_vec()
        };
        let num = numeric_gradient(&base, h, |vals| {
            let mut n = net.clone();
            n.params_mut()[pi].value.data_mut().copy_from_slice(vals);
            project(&n.forward(x.clone(), mode).expect("forward"), &w)
        });
        analytic.extend(grad);
        numeric.extend(num);
    }
    Ok(GradReport { op, rel_error: relative_error(&analytic, &numeric), coordinates: analytic.len() })
}

pub fn check_conv3d<T: Real>(seed: u64) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Init { sub: 0 });
    let mut conv = Conv3d::<T>::new(2, 3, 3, Padding::Same, &mut rng)?;
    let b = random_vec(&mut rng, 3, -0.5, 0.5);
    conv.bias.value.data_mut().copy_from_slice(&b);
    let x = Tensor::from_vec(&[2, 2, 5, 5, 5], random_vec(&mut rng, 500, -1.0, 1.0))?;
    check_sequential("conv3d", &Sequential::new(vec![Layer::Conv3d(conv)]), &x, Mode::Train, STEP, seed)
}

pub fn check_dense<T: Real>(seed: u64) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Init { sub: 1 });
    let mut d = Dense::<T>::new(7, 4, &mut rng)?;
    let b = random_vec(&mut rng, 4, -0.5, 0.5);
    d.bias.value.data_mut().copy_from_slice(&b);
    let x = Tensor::from_vec(&[3, 7], random_vec(&mut rng, 21, -1.0, 1.0))?;
    check_sequential("dense", &Sequential::new(vec![Layer::Dense(d)]), &x, Mode::Train, STEP, seed)
}

pub fn check_relu<T: Real>(seed: u64) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Init { sub: 2 });
    // keep inputs away from the kink so the central difference is exact
    let x: Vec<T> = (0..60)
        .map(|_| {
            let mag = rng.gen_range(0.05..1.0);
            T::from_f64_lossy(if rng.gen::<bool>() { mag } else { -mag })
        })
        .collect();
    let x = Tensor::from_vec(&[2, 30], x)?;
    check_sequential("relu", &Sequential::new(vec![Layer::Relu(Relu::default())]), &x, Mode::Train, STEP, seed)
}

pub fn check_batchnorm<T: Real>(seed: u64) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Init { sub: 3 });
    let mut bn = BatchNorm::<T>::new(2);
    let g = random_vec(&mut rng, 2, 0.5, 1.5);
    let b = random_vec(&mut rng, 2, -0.5, 0.5);
    bn.gamma.value.data_mut().copy_from_slice(&g);
    bn.beta.value.data_mut().copy_from_slice(&b);
    let x = Tensor::from_vec(&[3, 2, 2, 2, 3], random_vec(&mut rng, 72, -2.0, 2.0))?;
    check_sequential("batchnorm", &Sequential::new(vec![Layer::BatchNorm(bn)]), &x, Mode::Train, STEP, seed)
}

pub fn check_maxpool<T: Real>(seed: u64) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Init { sub: 4 });
    // distinct values 0.01 apart so no perturbation changes an argmax
    let n = 2 * 5 * 5 * 4;
    let mut vals: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        vals.swap(i, j);
    }
    let x: Vec<T> = vals.iter().map(|&v| T::from_f64_lossy(v as f64 * 0.01 - 1.0)).collect();
    let x = Tensor::from_vec(&[1, 2, 5, 5, 4], x)?;
    check_sequential(
        "maxpool3d",
        &Sequential::new(vec![Layer::MaxPool3d(MaxPool3d::new(2)?)]),
        &x,
        Mode::Train,
        STEP,
        seed,
    )
}

pub fn check_softmax_xent<T: Real>(seed: u64) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Init { sub: 5 });
    let logits = Tensor::from_vec(&[4, 3], random_vec::<T>(&mut rng, 12, -2.0, 2.0))?;
    let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
    let out = softmax_xent(&logits, &labels)?;
    let analytic: Vec<f64> = out.grad.data().iter().map(|v| v.as_f64()).collect();
    let numeric = numeric_gradient(logits.data(), STEP, |z| {
        let t = Tensor::from_vec(&[4, 3], z.to_vec()).expect("shape");
        softmax_xent(&t, &labels).expect("xent").loss
    });
    Ok(GradReport { op: "softmax_xent", rel_error: relative_error(&analytic, &numeric), coordinates: analytic.len() })
}

/// A miniature stream: conv, relu, batchnorm, pool, flatten, dense.
pub fn check_stack<T: Real>(seed: u64) -> Result<GradReport> {
    let mut rng = stream(seed, StreamId::Init { sub: 6 });
    let conv = Conv3d::<T>::new(1, 2, 3, Padding::Same, &mut rng)?;
    let dense = Dense::<T>::new(2 * 2 * 2 * 2, 3, &mut rng)?;
    let net = Sequential::new(vec![
        Layer::Conv3d(conv),
        Layer::Relu(Relu::default()),
        Layer::BatchNorm(BatchNorm::new(2)),
        Layer::MaxPool3d(MaxPool3d::new(2)?),
        Layer::Flatten(Flatten::default()),
        Layer::Dense(dense),
    ]);
    let x = Tensor::from_vec(&[2, 1, 4, 4, 4], random_vec(&mut rng, 128, -1.0, 1.0))?;
    // the composed normalization is curved enough that h = 1e-3 leaves O(h^2)
    // truncation error near 1e-7; a smaller step isolates rounding
    check_sequential("stack", &net, &x, Mode::Train, 1e-4, seed)
}

/// Every check in a fixed order.
pub fn check_all<T: Real>(seed: u64) -> Result<Vec<GradReport>> {
    Ok(vec![
        check_conv3d::<T>(seed)?,
        check_dense::<T>(seed)?,
        check_relu::<T>(seed)?,
        check_batchnorm::<T>(seed)?,
        check_maxpool::<T>(seed)?,
        check_softmax_xent::<T>(seed)?,
    ])
}
