use std::collections::HashMap;
use std::path::Path;

use ndnn::{
    softmax, stream, BatchNorm, Checkpoint, Conv3d, Dense, Dropout, Flatten, Layer, MaxPool3d, Mode, Relu, Sequential,
    StateEntry, StreamId, Tensor,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, ShapeTrace, BIOMARKER_WIDTH, N_CLASSES};
use super::data::Dataset;
use crate::error::{Error, Result};

/// Layers `0..STREAM_FC_START` of a stream are convolutional feature
/// extraction; the rest are its dense layers.
pub const STREAM_FC_START: usize = 17;
const HEAD_SUB: u32 = 1 << 20;
const DESCRIPTOR_FORMAT: &str = "msnet";

/// `L` independent convolutional streams whose embeddings are concatenated
/// (optionally with biomarkers) and classified by a dense head.
#[derive(Debug, Clone)]
pub struct MultiStreamModel {
    spec: ModelSpec,
    trace: ShapeTrace,
    pub streams: Vec<Sequential<f32>>,
    pub head: Sequential<f32>,
    /// Stream `i` reads the patch of landmark `assignment[i]`.
    assignment: Vec<usize>,
}

/// Model inputs for one batch, already routed to streams.
#[derive(Debug, Clone)]
pub struct Batch {
    pub streams: Vec<Tensor<f32>>,
    pub biomarkers: Option<Tensor<f32>>,
    pub labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    format: String,
    spec: ModelSpec,
    assignment: Vec<usize>,
}

fn build_stream(spec: &ModelSpec, trace: &ShapeTrace, index: u32) -> Result<Sequential<f32>> {
    let s = &spec.stream;
    let c = s.conv_channels;
    let pad = s.padding.into();
    let mut init = stream(spec.seed, StreamId::Init { sub: index });
    let mut conv =
        |cin, cout| -> Result<Layer<f32>> { Ok(Layer::Conv3d(Conv3d::new(cin, cout, s.kernel, pad, &mut init)?)) };
    let mut layers = vec![
        conv(1, c[0])?,
        Layer::Relu(Relu::default()),
        conv(c[0], c[1])?,
        Layer::Relu(Relu::default()),
        Layer::BatchNorm(BatchNorm::new(c[1])),
        Layer::MaxPool3d(MaxPool3d::new(2)?),
        conv(c[1], c[2])?,
        Layer::Relu(Relu::default()),
        conv(c[2], c[3])?,
        Layer::Relu(Relu::default()),
        Layer::BatchNorm(BatchNorm::new(c[3])),
        Layer::MaxPool3d(MaxPool3d::new(2)?),
        conv(c[3], c[4])?,
        Layer::Relu(Relu::default()),
        Layer::BatchNorm(BatchNorm::new(c[4])),
        Layer::MaxPool3d(MaxPool3d::new(2)?),
        Layer::Flatten(Flatten::default()),
    ];
    debug_assert_eq!(layers.len(), STREAM_FC_START);
    let f = s.fc_units;
    let drop = |j: u32| Dropout::new(s.fc_dropout, stream(spec.seed, StreamId::Dropout { sub: index * 4 + j }));
    layers.extend([
        Layer::Dense(Dense::new(trace.flatten_width, f[0], &mut init)?),
        Layer::Relu(Relu::default()),
        Layer::Dropout(drop(0)?),
        Layer::Dense(Dense::new(f[0], f[1], &mut init)?),
        Layer::Relu(Relu::default()),
        Layer::Dropout(drop(1)?),
        Layer::Dense(Dense::new(f[1], f[2], &mut init)?),
    ]);
    Ok(Sequential::new(layers))
}

fn build_head(spec: &ModelSpec, width: usize) -> Result<Sequential<f32>> {
    let mut init = stream(spec.seed, StreamId::Init { sub: HEAD_SUB });
    let h = spec.fusion.head_units;
    let drop = Dropout::new(spec.fusion.concat_dropout, stream(spec.seed, StreamId::Dropout { sub: HEAD_SUB }))?;
    Ok(Sequential::new(vec![
        Layer::Dropout(drop),
        Layer::Dense(Dense::new(width, h[0], &mut init)?),
        Layer::Relu(Relu::default()),
        Layer::Dense(Dense::new(h[0], h[1], &mut init)?),
        Layer::Relu(Relu::default()),
        Layer::Dense(Dense::new(h[1], h[2], &mut init)?),
        Layer::Relu(Relu::default()),
        Layer::Dense(Dense::new(h[2], N_CLASSES, &mut init)?),
    ]))
}

/// Build a model with the default stream and fusion configuration.
pub fn build_model(n_streams: usize, patch_size: usize, with_biomarkers: bool, seed: u64) -> Result<MultiStreamModel> {
    MultiStreamModel::new(ModelSpec::new(n_streams, patch_size, with_biomarkers, seed))
}

impl MultiStreamModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let trace = spec.validate()?;
        let streams = (0..spec.n_streams).map(|i| build_stream(&spec, &trace, i as u32)).collect::<Result<Vec<_>>>()?;
        let head = build_head(&spec, trace.concat_width)?;
        let mut assignment: Vec<usize> = (0..spec.n_streams).collect();
        assignment.shuffle(&mut stream(spec.seed, StreamId::Assignment));
        Ok(Self { spec, trace, streams, head, assignment })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn trace(&self) -> &ShapeTrace {
        &self.trace
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn param_count(&self) -> usize {
        self.streams.iter().map(Sequential::param_count).sum::<usize>() + self.head.param_count()
    }

    pub fn clear_cache(&mut self) {
        self.streams.iter_mut().for_each(Sequential::clear_cache);
        self.head.clear_cache();
    }

    /// True when no stream parameter can be updated.
    pub fn streams_frozen(&mut self) -> bool {
        self.streams.iter_mut().all(|s| s.params_mut().iter().all(|p| p.frozen))
    }

    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.n_landmarks != self.spec.n_streams {
            return Err(Error::ShapeMismatch(format!(
                "samples carry {} patches but the model has {} streams",
                ds.n_landmarks, self.spec.n_streams
            )));
        }
        if ds.patch_size != self.spec.patch_size {
            return Err(Error::ShapeMismatch(format!(
                "patch size {} does not match the model's {}",
                ds.patch_size, self.spec.patch_size
            )));
        }
        for s in &ds.samples {
            if s.cubes.len() != ds.n_landmarks {
                return Err(Error::ShapeMismatch(format!(
                    "sample of subject {} has {} patches",
                    s.subject,
                    s.cubes.len()
                )));
            }
            if self.spec.with_biomarkers && s.biomarkers.is_none() {
                return Err(Error::Data(format!("model expects biomarkers; subject {} has none", s.subject)));
            }
        }
        Ok(())
    }

    /// Gather samples `idx` of `ds` into per-stream input tensors.
    pub fn make_batch(&self, ds: &Dataset, idx: &[usize]) -> Result<Batch> {
        let s = ds.patch_size;
        let vox = s * s * s;
        let mut streams = Vec::with_capacity(self.spec.n_streams);
        for &landmark in &self.assignment {
            let mut data = Vec::with_capacity(idx.len() * vox);
            for &i in idx {
                data.extend_from_slice(&ds.samples[i].cubes[landmark].data);
            }
            streams.push(Tensor::from_vec(&[idx.len(), 1, s, s, s], data)?);
        }
        let biomarkers = if self.spec.with_biomarkers {
            let mut data = Vec::with_capacity(idx.len() * BIOMARKER_WIDTH);
            for &i in idx {
                let b = ds.samples[i].biomarkers.ok_or_else(|| Error::Data("model expects biomarkers".into()))?;
                data.extend_from_slice(&b);
            }
            Some(Tensor::from_vec(&[idx.len(), BIOMARKER_WIDTH], data)?)
        } else {
            None
        };
        let labels = idx.iter().map(|&i| ds.samples[i].label as usize).collect();
        Ok(Batch { streams, biomarkers, labels })
    }

    /// Stream embeddings concatenated with the biomarkers.
    pub fn fused_features(&mut self, batch: &Batch, mode: Mode) -> Result<Tensor<f32>> {
        if batch.streams.len() != self.streams.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} stream inputs for {} streams",
                batch.streams.len(),
                self.streams.len()
            )));
        }
        let mut parts = Vec::with_capacity(self.streams.len() + 1);
        for (net, x) in self.streams.iter_mut().zip(&batch.streams) {
            parts.push(net.forward(x.clone(), mode)?);
        }
        match (&batch.biomarkers, self.spec.with_biomarkers) {
            (Some(b), true) => parts.push(b.clone()),
            (None, false) => {}
            (None, true) => return Err(Error::Data("model expects biomarkers".into())),
            (Some(_), false) => return Err(Error::Data("model was built without biomarkers".into())),
        }
        let refs: Vec<&Tensor<f32>> = parts.iter().collect();
        Ok(Tensor::concat_cols(&refs)?)
    }

    /// Logits `[n, 2]`.
    pub fn forward(&mut self, batch: &Batch, mode: Mode) -> Result<Tensor<f32>> {
        let fused = self.fused_features(batch, mode)?;
        Ok(self.head.forward(fused, mode)?)
    }

    /// Back-propagate logit gradients through the head and, unless
    /// `head_only`, through every stream.
    pub fn backward(&mut self, grad_logits: Tensor<f32>, head_only: bool) -> Result<()> {
        let g = self.head.backward(grad_logits)?;
        if head_only {
            return Ok(());
        }
        let emb = self.spec.stream.fc_units[2];
        let mut widths = vec![emb; self.streams.len()];
        if self.spec.with_biomarkers {
            widths.push(BIOMARKER_WIDTH);
        }
        let parts = g.split_cols(&widths)?;
        for (net, gp) in self.streams.iter_mut().zip(parts) {
            net.backward(gp)?;
        }
        Ok(())
    }

    /// Eval-mode class probabilities for every sample.
    pub fn predict(&mut self, ds: &Dataset) -> Result<Vec<[f64; 2]>> {
        self.check_dataset(ds)?;
        let mut out = Vec::with_capacity(ds.len());
        let all: Vec<usize> = (0..ds.len()).collect();
        for chunk in all.chunks(16) {
            let batch = self.make_batch(ds, chunk)?;
            let probs = softmax(&self.forward(&batch, Mode::Eval)?)?;
            out.extend(probs.data().chunks(2).map(|r| [r[0] as f64, r[1] as f64]));
        }
        self.clear_cache();
        Ok(out)
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut ndnn::Param<f32>> {
        let mut v: Vec<&mut ndnn::Param<f32>> = self.streams.iter_mut().flat_map(|s| s.params_mut()).collect();
        v.extend(self.head.params_mut());
        v
    }

    pub fn to_checkpoint(&mut self) -> Result<Checkpoint> {
        let descriptor = serde_json::to_string(&Descriptor {
            format: DESCRIPTOR_FORMAT.into(),
            spec: self.spec.clone(),
            assignment: self.assignment.clone(),
        })
        .map_err(|e| Error::Data(format!("cannot encode model descriptor: {e}")))?;
        let mut entries = Vec::new();
        for (i, s) in self.streams.iter_mut().enumerate() {
            s.export_state(&format!("stream{i}."), &mut entries);
        }
        self.head.export_state("head.", &mut entries);
        Ok(Checkpoint { descriptor, entries })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let d: Descriptor = serde_json::from_str(&ckpt.descriptor)
            .map_err(|e| Error::Data(format!("checkpoint descriptor is not a model descriptor: {e}")))?;
        if d.format != DESCRIPTOR_FORMAT {
            return Err(Error::Data(format!("unexpected checkpoint format {:?}", d.format)));
        }
        let mut model = Self::new(d.spec)?;
        let mut sorted = d.assignment.clone();
        sorted.sort_unstable();
        if sorted != (0..model.spec.n_streams).collect::<Vec<_>>() {
            return Err(Error::Data("checkpoint stream assignment is not a permutation".into()));
        }
        model.assignment = d.assignment;
        let map: HashMap<&str, &StateEntry> = ckpt.entries.iter().map(|e| (e.name.as_str(), e)).collect();
        for (i, s) in model.streams.iter_mut().enumerate() {
            s.import_state(&format!("stream{i}."), &map)?;
        }
        model.head.import_state("head.", &map)?;
        Ok(model)
    }

    pub fn save(&mut self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Load a checkpoint and require a given architecture.
    pub fn load_expecting(
        path: impl AsRef<Path>,
        n_streams: usize,
        patch_size: usize,
        with_biomarkers: bool,
    ) -> Result<Self> {
        let m = Self::load(path)?;
        let s = m.spec();
        if (s.n_streams, s.patch_size, s.with_biomarkers) != (n_streams, patch_size, with_biomarkers) {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint architecture (streams {}, patch {}, biomarkers {}) differs from the requested (streams {n_streams}, patch {patch_size}, biomarkers {with_biomarkers})",
                s.n_streams, s.patch_size, s.with_biomarkers
            )));
        }
        Ok(m)
    }
}
