use std::path::{Path, PathBuf};

use ndnn::{stream, StreamId};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{CohortManifest, ManifestEntry};
use super::volume::{save_volume, Volume};
use crate::error::{Error, Result};
use crate::tabular::BiomarkerRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectKind {
    /// Additive intensity offset inside the region.
    IntensityShift,
    /// Added voxel-wise Gaussian noise inside the region.
    TextureRoughening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegion {
    pub center: [f64; 3],
    pub radius: f64,
    pub kind: EffectKind,
    pub magnitude: f64,
}

/// Per-class normal distributions for the six biomarkers plus a per-cell
/// missingness rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerProfile {
    pub means: [[f64; 6]; 2],
    pub stds: [[f64; 6]; 2],
    pub missing_rate: f64,
}

impl BiomarkerProfile {
    /// CN (class 0) versus AD (class 1) score ranges.
    pub fn cn_ad() -> Self {
        Self {
            means: [[76.155, 28.51, 0.03, 0.13, 29.09, 0.36], [75.64, 13.02, 4.39, 13.16, 23.31, 3.44]],
            stds: [[4.99, 4.89, 0.12, 0.59, 0.98, 0.95], [7.71, 5.23, 1.6, 6.71, 2.03, 3.27]],
            missing_rate: 0.1,
        }
    }

    /// sMCI (class 0) versus pMCI (class 1) score ranges.
    pub fn smci_pmci() -> Self {
        Self {
            means: [[75.44, 22.93, 1.24, 1.65, 27.65, 1.45], [74.54, 17.67, 1.87, 5.64, 26.62, 2.30]],
            stds: [[7.27, 5.78, 0.62, 3.00, 1.70, 2.40], [7.05, 5.14, 0.96, 5.15, 1.71, 3.11]],
            missing_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    /// Subjects of class 0 and class 1.
    pub n_per_class: [usize; 2],
    pub planted_regions: Vec<PlantedRegion>,
    /// Relative std of per-subject structure amplitudes and effect strength.
    pub jitter_std: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub class_names: [String; 2],
    pub biomarkers: Option<BiomarkerProfile>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidArgument(format!("phantom dims too small: {:?}", self.dims)));
        }
        if self.n_per_class.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument("each class needs at least one subject".into()));
        }
        if !(self.jitter_std >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument("jitter and noise std must be non-negative".into()));
        }
        for r in &self.planted_regions {
            let inside = r.center.iter().zip(&self.dims).all(|(&c, &d)| c >= 0.0 && c < d as f64);
            if !inside {
                return Err(Error::InvalidArgument(format!("planted center {:?} outside volume", r.center)));
            }
            if !(r.magnitude >= 0.0) {
                return Err(Error::InvalidArgument(format!("effect magnitude must be >= 0, got {}", r.magnitude)));
            }
            if !(r.radius >= 1.0) {
                return Err(Error::InvalidArgument(format!("region radius must be >= 1 voxel, got {}", r.radius)));
            }
        }
        if let Some(b) = &self.biomarkers {
            if !(0.0..1.0).contains(&b.missing_rate) {
                return Err(Error::InvalidArgument("biomarker missing rate must be in [0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub label: u8,
    pub volume: Volume,
    pub biomarkers: Option<BiomarkerRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCohort {
    pub class_names: [String; 2],
    pub subjects: Vec<Subject>,
    /// Noise-free base anatomy; the SSIM/MSE reference.
    pub template: Volume,
}

/// Smooth base anatomy split into components so per-subject jitter can
/// scale each one independently.
struct Anatomy {
    components: Vec<Vec<f32>>,
    nominal: Vec<f64>,
}

fn smoothstep_inside(r: f64, edge: f64) -> f64 {
    // 1 inside, 0 outside, linear over one voxel
    (edge + 0.5 - r).clamp(0.0, 1.0)
}

impl Anatomy {
    fn new(dims: [usize; 3]) -> Self {
        let n: usize = dims.iter().product();
        let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
        let semi = dims.map(|d| 0.42 * d as f64);
        let mut body = vec![0.0f32; n];
        let mut shell = vec![0.0f32; n];
        let mut ventricles = vec![0.0f32; n];
        let mut texture = vec![0.0f32; n];
        let vent_offset = 0.12 * dims[0] as f64;
        let vent_semi = [0.08 * dims[0] as f64, 0.18 * dims[1] as f64, 0.1 * dims[2] as f64];
        let mut i = 0;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = [x as f64, y as f64, z as f64];
                    let rel: f64 = (0..3).map(|a| ((p[a] - c[a]) / semi[a]).powi(2)).sum::<f64>().sqrt();
                    let r_mm = rel * semi[0].min(semi[1]).min(semi[2]);
                    let edge = semi[0].min(semi[1]).min(semi[2]);
                    let inside = smoothstep_inside(r_mm, edge);
                    body[i] = inside as f32;
                    // cortical rim: brighter band in the outer 20%
                    shell[i] = (inside * smoothstep_inside(-r_mm, -0.8 * edge)) as f32;
                    let mut v = 0.0f64;
                    for side in [-1.0, 1.0] {
                        let q = [p[0] - c[0] - side * vent_offset, p[1] - c[1], p[2] - c[2]];
                        let rv: f64 = (0..3).map(|a| (q[a] / vent_semi[a]).powi(2)).sum::<f64>().sqrt();
                        v = v.max(smoothstep_inside(rv * vent_semi[0], vent_semi[0]));
                    }
                    ventricles[i] = v as f32;
                    texture[i] = (inside * (p[0] / 4.0).sin() * (p[1] / 5.0).sin() * (p[2] / 6.0).sin()) as f32;
                    i += 1;
                }
            }
        }
        Self { components: vec![body, shell, ventricles, texture], nominal: vec![0.7, 0.25, -0.45, 0.08] }
    }

    fn render(&self, amplitudes: &[f64]) -> Vec<f32> {
        let n = self.components[0].len();
        let mut out = vec![0.0f32; n];
        for (comp, &a) in self.components.iter().zip(amplitudes) {
            for (o, &c) in out.iter_mut().zip(comp) {
                *o += (a * c as f64) as f32;
            }
        }
        out
    }
}

impl PhantomCohort {
    /// Pure function of the spec, including its seed.
    pub fn generate(spec: &PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims;
        let anatomy = Anatomy::new(dims);
        let template = Volume::new(dims, [1.0; 3], anatomy.render(&anatomy.nominal))?;
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;

        // voxel weights for each planted region
        let weights: Vec<Vec<(usize, f32)>> = spec.planted_regions.iter().map(|r| region_weights(dims, r)).collect();

        let total = spec.n_per_class[0] + spec.n_per_class[1];
        let mut subjects = Vec::with_capacity(total);
        for i in 0..total {
            let label = u8::from(i >= spec.n_per_class[0]);
            let mut rng = stream(spec.seed, StreamId::Phantom { sub: i as u32 });
            let amps: Vec<f64> = anatomy
                .nominal
                .iter()
                .map(|&a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a * (1.0 + spec.jitter_std * z)
                })
                .collect();
            let strengths: Vec<f64> = spec
                .planted_regions
                .iter()
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (1.0 + spec.jitter_std * z).max(0.0)
                })
                .collect();
            let mut vox = anatomy.render(&amps);
            if label == 1 {
                for ((region, w), s) in spec.planted_regions.iter().zip(&weights).zip(&strengths) {
                    let m = region.magnitude * s;
                    match region.kind {
                        EffectKind::IntensityShift => {
                            for &(idx, wt) in w {
                                vox[idx] += (m * wt as f64) as f32;
                            }
                        }
                        EffectKind::TextureRoughening => {
                            for &(idx, wt) in w {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                vox[idx] += (m * wt as f64 * z) as f32;
                            }
                        }
                    }
                }
            }
            if spec.noise_std > 0.0 {
                for v in vox.iter_mut() {
                    *v += noise.sample(&mut rng) as f32;
                }
            }
            let biomarkers = spec.biomarkers.as_ref().map(|p| sample_biomarkers(p, label, spec.seed, i as u32));
            subjects.push(Subject {
                id: format!("subj_{i:04}"),
                label,
                volume: Volume::new(dims, [1.0; 3], vox)?,
                biomarkers,
            });
        }
        Ok(Self { class_names: spec.class_names.clone(), subjects, template })
    }

    /// Write `<id>.vg3` files, `template.vg3` and `manifest.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(CohortManifest, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.subjects.len());
        for s in &self.subjects {
            let name = format!("{}.vg3", s.id);
            save_volume(&s.volume, dir.join(&name))?;
            entries.push(ManifestEntry { path: PathBuf::from(name), label: s.label, biomarkers: s.biomarkers.clone() });
        }
        let template = dir.join("template.vg3");
        save_volume(&self.template, &template)?;
        let manifest = CohortManifest::new(self.class_names.clone(), entries, dir.to_path_buf())?;
        manifest.save(dir.join("manifest.csv"))?;
        Ok((manifest, template))
    }
}

/// Generate and write a cohort; returns the manifest and template path.
pub fn generate_phantom_cohort(spec: &PhantomSpec, dir: impl AsRef<Path>) -> Result<(CohortManifest, PathBuf)> {
    PhantomCohort::generate(spec)?.write(dir)
}

fn region_weights(dims: [usize; 3], r: &PlantedRegion) -> Vec<(usize, f32)> {
    let reach = r.radius + 1.0;
    let lo = r.center.map(|c| (c - reach).floor().max(0.0) as usize);
    let hi = [0, 1, 2].map(|a| ((r.center[a] + reach).ceil() as usize).min(dims[a] - 1));
    let mut out = Vec::new();
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let d = ((x as f64 - r.center[0]).powi(2)
                    + (y as f64 - r.center[1]).powi(2)
                    + (z as f64 - r.center[2]).powi(2))
                .sqrt();
                let w = (r.radius + 1.0 - d).clamp(0.0, 1.0);
                if w > 0.0 {
                    out.push((x + dims[0] * (y + dims[1] * z), w as f32));
                }
            }
        }
    }
    out
}

fn sample_biomarkers(p: &BiomarkerProfile, label: u8, seed: u64, subject: u32) -> BiomarkerRecord {
    let mut rng = stream(seed, StreamId::Other { tag: 1, sub: subject });
    let c = label as usize;
    let mut values = [None; 6];
    for (i, v) in values.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = (p.means[c][i] + p.stds[c][i] * z).max(0.0);
        let missing = rng.gen::<f64>() < p.missing_rate;
        if !missing {
            *v = Some((x * 100.0).round() / 100.0);
        }
    }
    if values.iter().all(Option::is_none) {
        values[0] = Some(p.means[c][0]);
    }
    BiomarkerRecord(values)
}
