use ndnn::Padding;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BIOMARKER_WIDTH: usize = 6;
pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaddingMode {
    Same,
    Valid,
}

impl From<PaddingMode> for Padding {
    fn from(p: PaddingMode) -> Self {
        match p {
            PaddingMode::Same => Padding::Same,
            PaddingMode::Valid => Padding::Valid,
        }
    }
}

/// One convolutional stream: five convolutions with pooling after the 2nd,
/// 4th and 5th, then three dense layers; the last width is the stream's
/// embedding width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub conv_channels: [usize; 5],
    pub kernel: usize,
    pub padding: PaddingMode,
    pub fc_units: [usize; 3],
    pub fc_dropout: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            conv_channels: [32, 64, 64, 128, 128],
            kernel: 3,
            padding: PaddingMode::Same,
            fc_units: [128, 64, 8],
            fc_dropout: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub concat_dropout: f64,
    pub head_units: [usize; 3],
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { concat_dropout: 0.6, head_units: [64, 64, 32] }
    }
}

/// Everything needed to rebuild a model's architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_streams: usize,
    pub patch_size: usize,
    pub with_biomarkers: bool,
    pub seed: u64,
    pub stream: StreamConfig,
    pub fusion: FusionConfig,
}

impl ModelSpec {
    pub fn new(n_streams: usize, patch_size: usize, with_biomarkers: bool, seed: u64) -> Self {
        Self {
            n_streams,
            patch_size,
            with_biomarkers,
            seed,
            stream: StreamConfig::default(),
            fusion: FusionConfig::default(),
        }
    }

    pub fn concat_width(&self) -> usize {
        self.stream.fc_units[2] * self.n_streams + if self.with_biomarkers { BIOMARKER_WIDTH } else { 0 }
    }

    pub fn validate(&self) -> Result<ShapeTrace> {
        if self.n_streams == 0 {
            return Err(Error::Config("a model needs at least one stream".into()));
        }
        if self.patch_size % 2 == 0 {
            return Err(Error::Config(format!("patch size must be odd, got {}", self.patch_size)));
        }
        let s = &self.stream;
        if s.kernel % 2 == 0 || s.kernel == 0 {
            return Err(Error::Config(format!("kernel must be odd, got {}", s.kernel)));
        }
        if s.conv_channels.contains(&0) || s.fc_units.contains(&0) || self.fusion.head_units.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        for r in [s.fc_dropout, self.fusion.concat_dropout] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("dropout ratio must be in [0, 1), got {r}")));
            }
        }
        shape_trace(self)
    }
}

/// Spatial sizes through one stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    /// Spatial side after each of the three pools.
    pub pooled: [usize; 3],
    pub flatten_width: usize,
    pub concat_width: usize,
}

pub fn shape_trace(spec: &ModelSpec) -> Result<ShapeTrace> {
    let shrink = match spec.stream.padding {
        PaddingMode::Same => 0,
        PaddingMode::Valid => spec.stream.kernel - 1,
    };
    let mut side = spec.patch_size;
    let mut pooled = [0; 3];
    // convolutions per pooling stage: 2, 2, 1
    for (stage, convs) in [2usize, 2, 1].into_iter().enumerate() {
        for _ in 0..convs {
            side = side.checked_sub(shrink).filter(|&s| s > 0).ok_or_else(|| too_small(spec))?;
        }
        side /= 2;
        if side == 0 {
            return Err(too_small(spec));
        }
        pooled[stage] = side;
    }
    Ok(ShapeTrace {
        pooled,
        flatten_width: side.pow(3) * spec.stream.conv_channels[4],
        concat_width: spec.concat_width(),
    })
}

fn too_small(spec: &ModelSpec) -> Error {
    Error::Config(format!(
        "patch size {} is too small: a spatial dimension reaches 0 before the last pooling layer",
        spec.patch_size
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_trace() {
        let t = ModelSpec::new(50, 19, false, 0).validate().unwrap();
        assert_eq!(t.pooled, [9, 4, 2]);
        assert_eq!(t.flatten_width, 1024);
        assert_eq!(t.concat_width, 400);
        assert_eq!(ModelSpec::new(50, 19, true, 0).validate().unwrap().concat_width, 406);
    }

    #[test]
    fn small_patches() {
        assert_eq!(ModelSpec::new(1, 9, false, 0).validate().unwrap().pooled, [4, 2, 1]);
        assert!(ModelSpec::new(1, 7, false, 0).validate().is_err());
        assert!(ModelSpec::new(1, 10, false, 0).validate().is_err());
        assert!(ModelSpec::new(0, 19, false, 0).validate().is_err());
    }

    #[test]
    fn valid_padding_trace() {
        let mut s = ModelSpec::new(1, 23, false, 0);
        s.stream.padding = PaddingMode::Valid;
        // 23 -> 21 -> 19 -> 9 -> 7 -> 5 -> 2 -> 0
        assert!(s.validate().is_err());
        s.patch_size = 31;
        // 31 -> 27 -> 13 -> 9 -> 4 -> 2 -> 1
        assert_eq!(s.validate().unwrap().pooled, [13, 4, 1]);
    }
}
