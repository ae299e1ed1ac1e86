use nalgebra::{DMatrix, DVector};

use super::special::f_upper_tail;
use crate::error::{Error, Result};

pub const RIDGE_CONDITION: f64 = 1e12;
pub const RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotellingOptions {
    /// Add `1e-6 · trace(S)/p` to the pooled covariance when its condition
    /// number exceeds `1e12`.
    pub ridge: bool,
}

impl Default for HotellingOptions {
    fn default() -> Self {
        Self { ridge: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotellingResult {
    pub t2: f64,
    pub f: f64,
    pub p_value: f64,
    pub df1: usize,
    pub df2: usize,
    pub ridged: bool,
}

/// Two-sample Hotelling T² test of equal means; rows are samples.
///
/// A pooled covariance of zero trace (every feature constant in both groups)
/// yields `T² = 0, p = 1`.
pub fn hotelling_t2(a: &DMatrix<f64>, b: &DMatrix<f64>, opts: HotellingOptions) -> Result<HotellingResult> {
    let p = a.ncols();
    if p == 0 || b.ncols() != p {
        return Err(Error::ShapeMismatch(format!("groups have {} and {} columns", a.ncols(), b.ncols())));
    }
    let (na, nb) = (a.nrows(), b.nrows());
    let df = na as i64 + nb as i64 - p as i64 - 1;
    if df < 1 || na < 2 || nb < 2 {
        return Err(Error::InsufficientSamples { df, needed_total: (p + 2).max(4) });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hotelling input".into()));
    }
    let mean_a = a.row_mean().transpose();
    let mean_b = b.row_mean().transpose();
    let scatter = |m: &DMatrix<f64>, mean: &DVector<f64>| {
        let mut c = m.clone();
        for mut row in c.row_iter_mut() {
            row -= mean.transpose();
        }
        c.transpose() * c
    };
    let mut s = (scatter(a, &mean_a) + scatter(b, &mean_b)) / (na + nb - 2) as f64;
    let d = &mean_a - &mean_b;
    let (df1, df2) = (p, df as usize);

    let trace = s.trace();
    if !(trace > 0.0) {
        return Ok(HotellingResult { t2: 0.0, f: 0.0, p_value: 1.0, df1, df2, ridged: false });
    }
    let mut ridged = false;
    if opts.ridge && condition_number(&s) > RIDGE_CONDITION {
        let lambda = RIDGE_SCALE * trace / p as f64;
        for i in 0..p {
            s[(i, i)] += lambda;
        }
        ridged = true;
    }
    let chol =
        s.clone().cholesky().ok_or_else(|| Error::Numerical("pooled covariance is not positive definite".into()))?;
    let q = d.dot(&chol.solve(&d));
    let n = (na + nb) as f64;
    let t2 = (na as f64 * nb as f64 / n) * q;
    let f = (df2 as f64 / (p as f64 * (n - 2.0))) * t2;
    if !t2.is_finite() {
        return Err(Error::Numerical("non-finite T² statistic".into()));
    }
    let p_value = f_upper_tail(f, df1 as f64, df2 as f64);
    Ok(HotellingResult { t2, f, p_value, df1, df2, ridged })
}

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite when the
/// smallest is not positive.
pub fn condition_number(s: &DMatrix<f64>) -> f64 {
    let eig = s.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample(rng: &mut rand::rngs::StdRng, n: usize, p: usize, shift: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, j| { let z: f64 = StandardNormal.sample(rng); z } + shift.get(j).copied().unwrap_or(0.0))
    }

    #[test]
    fn identical_groups_give_p_one() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let a = sample(&mut rng, 12, 3, &[]);
        let r = hotelling_t2(&a, &a, HotellingOptions::default()).unwrap();
        assert!(r.t2.abs() < 1e-20);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn planted_shift_is_detected() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let a = sample(&mut rng, 30, 2, &[3.0, 0.0]);
        let b = sample(&mut rng, 30, 2, &[]);
        let r = hotelling_t2(&a, &b, HotellingOptions::default()).unwrap();
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
    }

    #[test]
    fn df_violation_reports_needed_size() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let a = sample(&mut rng, 15, 29, &[]);
        let b = sample(&mut rng, 15, 29, &[]);
        match hotelling_t2(&a, &b, HotellingOptions::default()) {
            Err(Error::InsufficientSamples { df, needed_total }) => {
                assert_eq!(df, 0);
                assert_eq!(needed_total, 31);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flat_features_give_p_one() {
        let a = DMatrix::from_element(5, 3, 2.0);
        let r = hotelling_t2(&a, &a.clone(), HotellingOptions::default()).unwrap();
        assert_eq!((r.t2, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn collinear_features_trigger_ridge() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut a = sample(&mut rng, 10, 3, &[1.0]);
        let mut b = sample(&mut rng, 10, 3, &[]);
        for m in [&mut a, &mut b] {
            for i in 0..10 {
                m[(i, 2)] = 2.0 * m[(i, 0)];
            }
        }
        let r = hotelling_t2(&a, &b, HotellingOptions::default()).unwrap();
        assert!(r.ridged);
        assert!(r.p_value.is_finite());
        assert!(hotelling_t2(&a, &b, HotellingOptions { ridge: false }).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = DMatrix::from_element(4, 1, 1.0);
        a[(0, 0)] = f64::NAN;
        assert!(matches!(
            hotelling_t2(&a, &DMatrix::from_element(4, 1, 0.0), HotellingOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }
}
