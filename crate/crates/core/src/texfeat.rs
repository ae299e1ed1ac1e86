//! The 29-element texture/statistics descriptor of a volume partition.
//!
//! Layout of [`FeatureVector`]: for each direction (+x, +y, +z) and each
//! distance (in [`GlcmConfig::distances`] order) the four GLCM statistics
//! contrast, correlation, homogeneity, entropy (24 values), then SSIM, MSE,
//! voxel entropy, mean and population std.

use std::path::Path;

use crate::error::{Error, Result};
use crate::volgrid::Cube;

pub const FEATURE_LEN: usize = 29;
pub const GLCM_STAT_NAMES: [&str; 4] = ["contrast", "correlation", "homogeneity", "entropy"];
pub const ENTROPY_BINS: usize = 32;

/// Offset axis of a co-occurrence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
    Z,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::X, Direction::Y, Direction::Z];

    pub fn name(self) -> &'static str {
        match self {
            Direction::X => "x",
            Direction::Y => "y",
            Direction::Z => "z",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlcmConfig {
    pub gray_levels: usize,
    pub distances: [usize; 2],
}

impl Default for GlcmConfig {
    fn default() -> Self {
        Self { gray_levels: 8, distances: [1, 2] }
    }
}

impl GlcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gray_levels < 2 || self.gray_levels > 256 {
            return Err(Error::Config(format!("gray_levels must be in 2..=256, got {}", self.gray_levels)));
        }
        let [a, b] = self.distances;
        if a == 0 || b == 0 || a == b {
            return Err(Error::Config(format!("GLCM distances must be positive and distinct, got {a} and {b}")));
        }
        Ok(())
    }
}

/// Quantized cube: gray level per voxel, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCube {
    pub side: usize,
    pub labels: Vec<u8>,
}

impl LabelCube {
    pub fn new(side: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != side * side * side {
            return Err(Error::ShapeMismatch(format!("label cube of side {side} needs {} labels", side.pow(3))));
        }
        Ok(Self { side, labels })
    }
}

/// Uniform binning of the cube's own `[min, max]` into `levels` bins.
pub fn quantize(cube: &Cube, levels: usize) -> LabelCube {
    let (lo, hi) = min_max(&cube.data);
    quantize_range(cube, lo, hi, levels)
}

/// Uniform binning of `[lo, hi]`; values outside are clamped to the end bins
/// and a degenerate range maps everything to 0.
pub fn quantize_range(cube: &Cube, lo: f64, hi: f64, levels: usize) -> LabelCube {
    assert!((2..=256).contains(&levels), "levels must be in 2..=256");
    let width = hi - lo;
    let labels = cube
        .data
        .iter()
        .map(|&v| {
            if !(width > 0.0) {
                return 0;
            }
            let t = ((v as f64 - lo) / width * levels as f64).floor();
            t.clamp(0.0, (levels - 1) as f64) as u8
        })
        .collect();
    LabelCube { side: cube.side, labels }
}

/// Normalized symmetric co-occurrence matrix, row-major `levels × levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub p: Vec<f64>,
    /// Set when no voxel pair fits in the cube; `p` is then all zero.
    pub empty: bool,
}

impl Glcm {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }
}

pub fn glcm(cube: &LabelCube, levels: usize, dir: Direction, distance: usize) -> Glcm {
    assert!(distance >= 1, "GLCM distance must be at least 1");
    let s = cube.side;
    let mut counts = vec![0u64; levels * levels];
    let mut pairs = 0u64;
    if distance < s {
        let (dx, dy, dz) = match dir {
            Direction::X => (distance, 0, 0),
            Direction::Y => (0, distance, 0),
            Direction::Z => (0, 0, distance),
        };
        for z in 0..s - dz {
            for y in 0..s - dy {
                for x in 0..s - dx {
                    let a = cube.labels[x + s * (y + s * z)] as usize;
                    let b = cube.labels[(x + dx) + s * ((y + dy) + s * (z + dz))] as usize;
                    assert!(a < levels && b < levels, "label exceeds gray level count");
                    counts[a * levels + b] += 1;
                    counts[b * levels + a] += 1;
                    pairs += 2;
                }
            }
        }
    }
    let p =
        if pairs == 0 { vec![0.0; levels * levels] } else { counts.iter().map(|&c| c as f64 / pairs as f64).collect() };
    if pairs == 0 {
        log::warn!("GLCM distance {distance} leaves no voxel pair in a cube of side {s}");
    }
    Glcm { levels, p, empty: pairs == 0 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlcmStats {
    pub contrast: f64,
    pub correlation: f64,
    pub homogeneity: f64,
    pub entropy: f64,
}

impl GlcmStats {
    pub fn to_array(self) -> [f64; 4] {
        [self.contrast, self.correlation, self.homogeneity, self.entropy]
    }
}

pub fn glcm_stats(m: &Glcm) -> GlcmStats {
    let n = m.levels;
    let (mut contrast, mut homogeneity, mut entropy) = (0.0, 0.0, 0.0);
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let p = m.at(i, j);
            let d = i as f64 - j as f64;
            contrast += p * d * d;
            homogeneity += p / (1.0 + d.abs());
            if p > 0.0 {
                entropy -= p * p.log2();
            }
            mu_i += p * i as f64;
            mu_j += p * j as f64;
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let p = m.at(i, j);
            let (a, b) = (i as f64 - mu_i, j as f64 - mu_j);
            var_i += p * a * a;
            var_j += p * b * b;
            cov += p * a * b;
        }
    }
    let denom = (var_i * var_j).sqrt();
    let correlation = if denom > 1e-12 { (cov / denom).clamp(-1.0, 1.0) } else { 0.0 };
    GlcmStats { contrast, correlation, homogeneity, entropy }
}

fn check_shapes(a: &Cube, b: &Cube) -> Result<()> {
    if a.side != b.side || a.data.len() != b.data.len() {
        return Err(Error::ShapeMismatch(format!("cube sides {} and {}", a.side, b.side)));
    }
    Ok(())
}

/// Single-window SSIM with stabilizers derived from `range`, the dynamic
/// range of the reference volume (a non-positive range counts as 1).
pub fn ssim(cube: &Cube, reference: &Cube, range: f64) -> Result<f64> {
    check_shapes(cube, reference)?;
    let r = if range > 0.0 { range } else { 1.0 };
    let c1 = (0.01 * r).powi(2);
    let c2 = (0.03 * r).powi(2);
    let n = cube.data.len() as f64;
    let mx = cube.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = reference.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in cube.data.iter().zip(&reference.data) {
        let (da, db) = (a as f64 - mx, b as f64 - my);
        vx += da * da;
        vy += db * db;
        cxy += da * db;
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    Ok(((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
}

pub fn mse(cube: &Cube, reference: &Cube) -> Result<f64> {
    check_shapes(cube, reference)?;
    let s: f64 = cube.data.iter().zip(&reference.data).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    Ok(s / cube.data.len() as f64)
}

/// Shannon entropy (bits) of a 32-bin histogram over the values' own range.
pub fn voxel_entropy(values: &[f32]) -> f64 {
    let (lo, hi) = min_max(values);
    let width = hi - lo;
    if !(width > 0.0) {
        return 0.0;
    }
    let mut hist = [0usize; ENTROPY_BINS];
    for &v in values {
        let b = ((v as f64 - lo) / width * ENTROPY_BINS as f64).floor() as usize;
        hist[b.min(ENTROPY_BINS - 1)] += 1;
    }
    let n = values.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn min_max(values: &[f32]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub const SSIM: usize = 24;
    pub const MSE: usize = 25;
    pub const ENTROPY: usize = 26;
    pub const MEAN: usize = 27;
    pub const STD: usize = 28;

    /// Index of a GLCM statistic (`stat` in 0..4, see [`GLCM_STAT_NAMES`]).
    pub fn glcm_index(dir: Direction, distance_slot: usize, stat: usize) -> usize {
        assert!(distance_slot < 2 && stat < 4);
        let d = Direction::ALL.iter().position(|&x| x == dir).unwrap();
        (d * 2 + distance_slot) * 4 + stat
    }

    pub fn column_names() -> Vec<String> {
        let mut names = Vec::with_capacity(FEATURE_LEN);
        for dir in Direction::ALL {
            for slot in 1..=2 {
                for stat in GLCM_STAT_NAMES {
                    names.push(format!("{}_{}{}", stat, dir.name(), slot));
                }
            }
        }
        names.extend(["ssim", "mse", "voxel_entropy", "mean", "std"].map(String::from));
        names
    }
}

/// The full descriptor of `cube` against the template patch `reference`.
/// `range` is the template volume's dynamic range (the SSIM stabilizer scale).
pub fn feature_vector(cube: &Cube, reference: &Cube, range: f64, cfg: &GlcmConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    check_shapes(cube, reference)?;
    let labels = quantize(cube, cfg.gray_levels);
    let mut out = [0.0; FEATURE_LEN];
    let mut k = 0;
    for dir in Direction::ALL {
        for &d in &cfg.distances {
            let stats = glcm_stats(&glcm(&labels, cfg.gray_levels, dir, d));
            out[k..k + 4].copy_from_slice(&stats.to_array());
            k += 4;
        }
    }
    out[FeatureVector::SSIM] = ssim(cube, reference, range)?;
    out[FeatureVector::MSE] = mse(cube, reference)?;
    out[FeatureVector::ENTROPY] = voxel_entropy(&cube.data);
    let (m, s) = mean_std(&cube.data);
    out[FeatureVector::MEAN] = m;
    out[FeatureVector::STD] = s;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector".into()));
    }
    Ok(FeatureVector(out))
}

/// One row per partition: index followed by the 29 features.
pub fn write_feature_csv(path: impl AsRef<Path>, rows: &[(usize, FeatureVector)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["partition_index".to_string()];
    header.extend(FeatureVector::column_names());
    w.write_record(&header)?;
    for (idx, f) in rows {
        let mut rec = vec![idx.to_string()];
        rec.extend(f.0.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
