use std::collections::BTreeSet;
use std::path::Path;

use ndnn::{adam_step, softmax_xent, stream, AdamConfig, Mode, StreamId, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::ModelSpec;
use super::data::Dataset;
use super::model::{MultiStreamModel, STREAM_FC_START};
use crate::error::{Error, Result};
use crate::evalkit::decide;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self { epochs: 40, batch_size: 5, adam: AdamConfig::default(), seed: 0 }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("training needs at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        self.adam.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: MultiStreamModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

/// Parameter groups a freeze plan can hold fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    /// Convolution and batch-norm layers of every stream.
    StreamConv,
    /// The dense layers inside every stream.
    StreamFc,
    /// The fusion head.
    Head,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezePlan {
    pub frozen: BTreeSet<ParamGroup>,
}

impl FreezePlan {
    /// Freeze every stream; retrain only the fusion head.
    pub fn transfer() -> Self {
        Self { frozen: [ParamGroup::StreamConv, ParamGroup::StreamFc].into() }
    }

    pub fn none() -> Self {
        Self { frozen: BTreeSet::new() }
    }

    pub fn trainable(&self) -> BTreeSet<ParamGroup> {
        [ParamGroup::StreamConv, ParamGroup::StreamFc, ParamGroup::Head]
            .into_iter()
            .filter(|g| !self.frozen.contains(g))
            .collect()
    }

    pub fn apply(&self, model: &mut MultiStreamModel) {
        let conv = self.frozen.contains(&ParamGroup::StreamConv);
        let fc = self.frozen.contains(&ParamGroup::StreamFc);
        for s in &mut model.streams {
            for (i, layer) in s.layers.iter_mut().enumerate() {
                layer.set_frozen(if i < STREAM_FC_START { conv } else { fc });
            }
        }
        model.head.set_frozen(self.frozen.contains(&ParamGroup::Head));
    }
}

/// Where a training loop reads its head inputs from.
enum Source<'a> {
    Patches(&'a Dataset),
    /// Fixed eval-mode fused features, one row per sample.
    Cached {
        features: Tensor<f32>,
        labels: Vec<usize>,
    },
}

impl Source<'_> {
    fn len(&self) -> usize {
        match self {
            Source::Patches(d) => d.len(),
            Source::Cached { labels, .. } => labels.len(),
        }
    }

    fn logits(&self, model: &mut MultiStreamModel, idx: &[usize], mode: Mode) -> Result<(Tensor<f32>, Vec<usize>)> {
        match self {
            Source::Patches(d) => {
                let batch = model.make_batch(d, idx)?;
                let logits = model.forward(&batch, mode)?;
                Ok((logits, batch.labels))
            }
            Source::Cached { features, labels } => {
                let w = features.shape()[1];
                let mut rows = Vec::with_capacity(idx.len() * w);
                for &i in idx {
                    rows.extend_from_slice(&features.data()[i * w..(i + 1) * w]);
                }
                let x = Tensor::from_vec(&[idx.len(), w], rows)?;
                Ok((model.head.forward(x, mode)?, idx.iter().map(|&i| labels[i]).collect()))
            }
        }
    }
}

fn cache_features(model: &mut MultiStreamModel, ds: &Dataset) -> Result<Source<'static>> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut parts = Vec::new();
    for chunk in all.chunks(16) {
        let batch = model.make_batch(ds, chunk)?;
        parts.push(model.fused_features(&batch, Mode::Eval)?);
    }
    model.clear_cache();
    let refs: Vec<&Tensor<f32>> = parts.iter().collect();
    let features = Tensor::concat_rows(&refs)?;
    Ok(Source::Cached { features, labels: ds.labels().into_iter().map(usize::from).collect() })
}

/// Mini-batches of a shuffled epoch. A trailing batch of one sample joins
/// the previous batch, and a one-sample dataset is doubled, because batch
/// normalization needs two samples in training mode.
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    if order.len() == 1 {
        return vec![vec![order[0], order[0]]];
    }
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

fn evaluate(model: &mut MultiStreamModel, src: &Source) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..src.len()).collect();
    let (mut correct, mut loss) = (0usize, 0.0);
    for chunk in all.chunks(16) {
        let (logits, labels) = src.logits(model, chunk, Mode::Eval)?;
        let out = softmax_xent(&logits, &labels)?;
        loss += out.loss * chunk.len() as f64;
        for (row, &y) in out.probs.data().chunks(2).zip(&labels) {
            if decide([row[0] as f64, row[1] as f64]) as usize == y {
                correct += 1;
            }
        }
    }
    model.clear_cache();
    let n = src.len() as f64;
    Ok((100.0 * correct as f64 / n, loss / n))
}

fn run(mut model: MultiStreamModel, train: &Dataset, val: &Dataset, plan: &TrainPlan) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sets must be nonempty".into()));
    }
    model.check_dataset(train)?;
    model.check_dataset(val)?;
    let head_only = model.streams_frozen();
    let (train_src, val_src) = if head_only {
        (cache_features(&mut model, train)?, cache_features(&mut model, val)?)
    } else {
        (Source::Patches(train), Source::Patches(val))
    };
    let mut rng = stream(plan.seed, StreamId::Shuffle);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(plan.epochs);
    let mut best: Option<(f64, usize, MultiStreamModel)> = None;
    for epoch in 1..=plan.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for idx in batches(&order, plan.batch_size) {
            let (logits, labels) = train_src.logits(&mut model, &idx, Mode::Train)?;
            let out = softmax_xent(&logits, &labels)?;
            if !out.loss.is_finite() {
                return Err(Error::Numerical(format!("training loss diverged in epoch {epoch}")));
            }
            loss_sum += out.loss * idx.len() as f64;
            seen += idx.len();
            model.backward(out.grad, head_only)?;
            adam_step(&mut model.all_params_mut(), &plan.adam);
        }
        model.clear_cache();
        let (val_acc, val_loss) = evaluate(&mut model, &val_src)?;
        log.push(EpochLog { epoch, train_loss: loss_sum / seen as f64, val_acc, val_loss });
        if best.as_ref().map_or(true, |(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, log, best_epoch: Some(best_epoch) })
}

/// Train every unfrozen parameter; returns the best-validation-accuracy
/// model (ties keep the earlier epoch).
pub fn train(
    model: MultiStreamModel,
    train_set: &Dataset,
    val_set: &Dataset,
    plan: &TrainPlan,
) -> Result<TrainOutcome> {
    plan.validate()?;
    run(model, train_set, val_set, plan)
}

/// Apply `freeze` and continue training on new data. With every stream
/// frozen, streams run in evaluation mode once and only the head trains.
pub fn fine_tune(
    mut model: MultiStreamModel,
    freeze: &FreezePlan,
    train_set: &Dataset,
    val_set: &Dataset,
    plan: &TrainPlan,
) -> Result<TrainOutcome> {
    model.check_dataset(train_set)?;
    model.check_dataset(val_set)?;
    freeze.apply(&mut model);
    if plan.epochs == 0 {
        return Ok(TrainOutcome { model, log: Vec::new(), best_epoch: None });
    }
    plan.validate()?;
    run(model, train_set, val_set, plan)
}

/// One stream plus the fusion head trained on individual patches, each
/// labelled by its subject. `template` supplies patch size, layer widths and
/// seed.
pub fn single_stream_baseline(
    template: &ModelSpec,
    train_set: &Dataset,
    val_set: &Dataset,
    plan: &TrainPlan,
) -> Result<TrainOutcome> {
    let mut spec = template.clone();
    spec.n_streams = 1;
    let model = MultiStreamModel::new(spec)?;
    train(model, &train_set.single_patches(), &val_set.single_patches(), plan)
}

pub fn write_training_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_acc", "val_loss"])?;
    for e in log {
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.val_acc.to_string(), e.val_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
