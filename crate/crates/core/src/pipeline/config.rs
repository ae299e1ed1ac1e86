use std::path::{Path, PathBuf};

use ndnn::AdamConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::msnet::{FusionConfig, ModelSpec, PaddingMode, StreamConfig, TrainPlan};
use crate::statmap::{HotellingOptions, MapConfig, PatchOptions};
use crate::texfeat::GlcmConfig;
use crate::volgrid::{BiomarkerProfile, EffectKind, PhantomSpec, PlantedRegion};

/// Every knob of an experiment. Loaded from a TOML key-value file; missing
/// keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,

    pub dims: [usize; 3],
    pub source_subjects: [usize; 2],
    pub source_classes: [String; 2],
    pub transfer_subjects: [usize; 2],
    pub transfer_classes: [String; 2],
    pub regions: Vec<PlantedRegion>,
    /// Multiplier on every region magnitude for the transfer cohort.
    pub transfer_effect_scale: f64,
    pub jitter_std: f64,
    pub noise_std: f64,
    pub biomarker_missing_rate: f64,

    /// Train, validation and test fractions of the source cohort.
    pub source_split: [f64; 3],
    /// Train and test fractions of the transfer cohort.
    pub transfer_split: [f64; 2],
    /// Share of the transfer training split held out for epoch selection.
    pub transfer_val_fraction: f64,

    pub block_size: usize,
    pub gray_levels: usize,
    pub glcm_distances: [usize; 2],
    pub min_dist: f64,
    pub top_k: usize,
    pub ridge: bool,

    pub streams: usize,
    pub patch_size: usize,
    pub augment: bool,
    pub jitter_step: i64,
    pub biomarkers: bool,
    pub padding: PaddingMode,
    pub conv_channels: [usize; 5],
    pub fc_units: [usize; 3],
    pub fc_dropout: f64,
    pub head_units: [usize; 3],
    pub concat_dropout: f64,

    pub epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate for head fine-tuning; falls back to `lr`.
    pub finetune_lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,

    pub sweep_streams: Vec<usize>,
    pub sweep_patch_sizes: Vec<usize>,
    pub threads: usize,
}

/// Spheres centred on partition corners, so eight partition centres lie
/// 4.33 voxels from each.
pub fn default_regions() -> Vec<PlantedRegion> {
    let region = |center, kind| PlantedRegion { center, radius: 4.0, kind, magnitude: 0.6 };
    vec![
        region([19.5, 34.5, 19.5], EffectKind::IntensityShift),
        region([39.5, 19.5, 39.5], EffectKind::IntensityShift),
        region([29.5, 44.5, 29.5], EffectKind::TextureRoughening),
    ]
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let stream = StreamConfig::default();
        let fusion = FusionConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("run"),
            dims: [60, 60, 60],
            source_subjects: [40, 40],
            source_classes: ["CN".into(), "AD".into()],
            transfer_subjects: [16, 24],
            transfer_classes: ["sMCI".into(), "pMCI".into()],
            regions: default_regions(),
            transfer_effect_scale: 0.3,
            jitter_std: 0.3,
            noise_std: 0.08,
            biomarker_missing_rate: 0.1,
            source_split: [0.7, 0.1, 0.2],
            transfer_split: [0.7, 0.3],
            transfer_val_fraction: 0.1,
            block_size: 5,
            gray_levels: 8,
            glcm_distances: [1, 2],
            min_dist: 15.0,
            top_k: 50,
            ridge: true,
            streams: 10,
            patch_size: 19,
            augment: false,
            jitter_step: 3,
            biomarkers: false,
            padding: stream.padding,
            conv_channels: stream.conv_channels,
            fc_units: stream.fc_units,
            fc_dropout: stream.fc_dropout,
            head_units: fusion.head_units,
            concat_dropout: fusion.concat_dropout,
            epochs: 40,
            finetune_epochs: 40,
            batch_size: 5,
            lr: adam.lr,
            finetune_lr: None,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            sweep_streams: vec![2, 4, 6, 8, 10],
            sweep_patch_sizes: vec![9, 11, 15, 19],
            threads: 0,
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub streams: Option<usize>,
    pub patch_size: Option<usize>,
    pub augment: Option<bool>,
    pub biomarkers: Option<bool>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.streams {
            self.streams = v;
        }
        if let Some(v) = o.patch_size {
            self.patch_size = v;
        }
        if let Some(v) = o.augment {
            self.augment = v;
        }
        if let Some(v) = o.biomarkers {
            self.biomarkers = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum3: f64 = self.source_split.iter().sum();
        let sum2: f64 = self.transfer_split.iter().sum();
        if (sum3 - 1.0).abs() > 1e-9 || (sum2 - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split fractions must sum to 1 for each task".into()));
        }
        if self.source_split.iter().chain(&self.transfer_split).any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("split fractions must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.transfer_val_fraction) {
            return Err(Error::Config("transfer_val_fraction must be in [0, 1)".into()));
        }
        if self.top_k == 0 || self.streams == 0 {
            return Err(Error::Config("top_k and streams must be positive".into()));
        }
        if self.streams > self.top_k {
            return Err(Error::Config(format!("streams ({}) cannot exceed top_k ({})", self.streams, self.top_k)));
        }
        if !(self.min_dist >= 0.0) {
            return Err(Error::Config("min_dist must be non-negative".into()));
        }
        if !(self.transfer_effect_scale >= 0.0) {
            return Err(Error::Config("transfer_effect_scale must be non-negative".into()));
        }
        self.glcm().validate()?;
        self.model_spec().validate()?;
        for &p in &self.sweep_patch_sizes {
            let mut s = self.model_spec();
            s.patch_size = p;
            s.validate()?;
        }
        if self.sweep_streams.iter().any(|&l| l == 0 || l > self.top_k) {
            return Err(Error::Config("sweep stream counts must be in 1..=top_k".into()));
        }
        self.train_plan().validate()?;
        self.finetune_plan().adam.validate()?;
        self.source_phantom().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Stable digest of every setting except the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn run_id(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn glcm(&self) -> GlcmConfig {
        GlcmConfig { gray_levels: self.gray_levels, distances: self.glcm_distances }
    }

    pub fn map_config(&self) -> MapConfig {
        MapConfig { glcm: self.glcm(), hotelling: HotellingOptions { ridge: self.ridge }, threads: self.threads }
    }

    pub fn patch_options(&self, augment: bool) -> PatchOptions {
        PatchOptions { size: self.patch_size, augment, jitter_step: self.jitter_step }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            n_streams: self.streams,
            patch_size: self.patch_size,
            with_biomarkers: self.biomarkers,
            seed: self.seed,
            stream: StreamConfig {
                conv_channels: self.conv_channels,
                kernel: 3,
                padding: self.padding,
                fc_units: self.fc_units,
                fc_dropout: self.fc_dropout,
            },
            fusion: FusionConfig { concat_dropout: self.concat_dropout, head_units: self.head_units },
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn train_plan(&self) -> TrainPlan {
        TrainPlan { epochs: self.epochs, batch_size: self.batch_size, adam: self.adam(), seed: self.seed }
    }

    pub fn finetune_plan(&self) -> TrainPlan {
        let mut plan = TrainPlan { epochs: self.finetune_epochs, ..self.train_plan() };
        plan.adam.lr = self.finetune_lr.unwrap_or(self.lr);
        plan
    }

    pub fn source_phantom(&self) -> PhantomSpec {
        PhantomSpec {
            dims: self.dims,
            n_per_class: self.source_subjects,
            planted_regions: self.regions.clone(),
            jitter_std: self.jitter_std,
            noise_std: self.noise_std,
            seed: self.seed,
            class_names: self.source_classes.clone(),
            biomarkers: Some(BiomarkerProfile {
                missing_rate: self.biomarker_missing_rate,
                ..BiomarkerProfile::cn_ad()
            }),
        }
    }

    /// Disjoint subjects with the same regions at reduced strength.
    pub fn transfer_phantom(&self) -> PhantomSpec {
        let regions = self
            .regions
            .iter()
            .map(|r| PlantedRegion { magnitude: r.magnitude * self.transfer_effect_scale, ..r.clone() })
            .collect();
        PhantomSpec {
            n_per_class: self.transfer_subjects,
            planted_regions: regions,
            seed: self.seed ^ 0x9e37_79b9_7f4a_7c15,
            class_names: self.transfer_classes.clone(),
            biomarkers: Some(BiomarkerProfile {
                missing_rate: self.biomarker_missing_rate,
                ..BiomarkerProfile::smci_pmci()
            }),
            ..self.source_phantom()
        }
    }
}
