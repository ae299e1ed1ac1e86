use std::collections::HashMap;

use crate::activation::{Dropout, Relu};
use crate::checkpoint::{AdamState, EntryKind, StateEntry};
use crate::conv::Conv3d;
use crate::dense::Dense;
use crate::error::{NnError, Result};
use crate::norm::BatchNorm;
use crate::param::Param;
use crate::pool::MaxPool3d;
use crate::real::Real;
use crate::tensor::Tensor;
use crate::Mode;

#[derive(Debug, Clone, Default)]
pub struct Flatten {
    in_shape: Vec<usize>,
}

impl Flatten {
    pub fn forward<T: Real>(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let n = *x.shape().first().ok_or_else(|| NnError::Shape("flatten of a scalar".into()))?;
        self.in_shape = x.shape().to_vec();
        let w = if n == 0 { 0 } else { x.len() / n };
        x.reshape(&[n, w])
    }

    pub fn backward<T: Real>(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        grad.reshape(&self.in_shape)
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv3d(Conv3d<T>),
    Relu(Relu),
    BatchNorm(BatchNorm<T>),
    MaxPool3d(MaxPool3d),
    Flatten(Flatten),
    Dense(Dense<T>),
    Dropout(Dropout),
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv3d(_) => "conv",
            Layer::Relu(_) => "relu",
            Layer::BatchNorm(_) => "bn",
            Layer::MaxPool3d(_) => "pool",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv3d(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::MaxPool3d(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Dropout(l) => Ok(l.forward(x, mode)),
        }
    }

    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv3d(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::MaxPool3d(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
            Layer::Dense(l) => l.backward(grad),
            Layer::Dropout(l) => l.backward(grad),
        }
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.named_params_mut().into_iter().for_each(|(_, p)| p.frozen = frozen);
    }

    fn clear_cache(&mut self) {
        match self {
            Layer::Conv3d(l) => l.clear_cache(),
            Layer::Relu(l) => l.clear_cache(),
            Layer::BatchNorm(l) => l.clear_cache(),
            Layer::MaxPool3d(l) => l.clear_cache(),
            Layer::Flatten(_) => {}
            Layer::Dense(l) => l.clear_cache(),
            Layer::Dropout(l) => l.clear_cache(),
        }
    }

    fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Param<T>)> {
        match self {
            Layer::Conv3d(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::Dense(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::BatchNorm(l) => vec![("gamma", &mut l.gamma), ("beta", &mut l.beta)],
            _ => Vec::new(),
        }
    }
}

/// Ordered stack of layers with cached activations for backward.
#[derive(Debug, Clone, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        for layer in &mut self.layers {
            x = layer.forward(x, mode)?;
            if cfg!(debug_assertions) && !x.all_finite() {
                return Err(NnError::NonFinite(layer.kind()));
            }
        }
        Ok(x)
    }

    pub fn backward(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(grad)?;
            if cfg!(debug_assertions) && !grad.all_finite() {
                return Err(NnError::NonFinite(layer.kind()));
            }
        }
        Ok(grad)
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.named_params_mut().into_iter().map(|(_, p)| p)).collect()
    }

    /// Parameters named `{prefix}{layer index}.{kind}.{field}`.
    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            for (field, p) in layer.named_params_mut() {
                out.push((format!("{prefix}{i}.{kind}.{field}"), p));
            }
        }
        out
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.params_mut().into_iter().for_each(|p| p.frozen = frozen);
    }

    pub fn param_count(&self) -> usize {
        let mut clone_free = 0;
        for layer in &self.layers {
            clone_free += match layer {
                Layer::Conv3d(l) => l.weight.len() + l.bias.len(),
                Layer::Dense(l) => l.weight.len() + l.bias.len(),
                Layer::BatchNorm(l) => l.gamma.len() + l.beta.len(),
                _ => 0,
            };
        }
        clone_free
    }
}

impl Sequential<f32> {
    /// Parameters, Adam state, freeze flags and batch-norm running statistics.
    pub fn export_state(&mut self, prefix: &str, out: &mut Vec<StateEntry>) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            for (field, p) in layer.named_params_mut() {
                out.push(StateEntry {
                    name: format!("{prefix}{i}.{kind}.{field}"),
                    shape: p.value.shape().to_vec(),
                    frozen: p.frozen,
                    kind: EntryKind::Param,
                    value: p.value.data().to_vec(),
                    adam: p.has_adam_state().then(|| AdamState {
                        m: p.adam_m.clone(),
                        v: p.adam_v.clone(),
                        step: p.step_count,
                    }),
                });
            }
            if let Layer::BatchNorm(bn) = layer {
                for (field, buf) in [("running_mean", &bn.running_mean), ("running_var", &bn.running_var)] {
                    out.push(StateEntry {
                        name: format!("{prefix}{i}.{kind}.{field}"),
                        shape: vec![buf.len()],
                        frozen: false,
                        kind: EntryKind::Buffer,
                        value: buf.clone(),
                        adam: None,
                    });
                }
            }
        }
    }

    pub fn import_state(&mut self, prefix: &str, entries: &HashMap<&str, &StateEntry>) -> Result<()> {
        fn lookup<'a>(entries: &HashMap<&str, &'a StateEntry>, name: &str, len: usize) -> Result<&'a StateEntry> {
            let e = entries.get(name).ok_or_else(|| NnError::Mismatch(format!("missing entry {name}")))?;
            if e.value.len() != len {
                return Err(NnError::Mismatch(format!(
                    "{name}: checkpoint has {} values, model expects {len}",
                    e.value.len()
                )));
            }
            Ok(e)
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            for (field, p) in layer.named_params_mut() {
                let name = format!("{prefix}{i}.{kind}.{field}");
                let e = lookup(entries, &name, p.len())?;
                if e.shape != p.value.shape() {
                    return Err(NnError::Mismatch(format!("{name}: shape {:?} vs {:?}", e.shape, p.value.shape())));
                }
                p.value.data_mut().copy_from_slice(&e.value);
                p.frozen = e.frozen;
                p.grad.clear();
                match &e.adam {
                    Some(a) => {
                        p.adam_m = a.m.clone();
                        p.adam_v = a.v.clone();
                        p.step_count = a.step;
                    }
                    None => {
                        p.adam_m.clear();
                        p.adam_v.clear();
                        p.step_count = 0;
                    }
                }
            }
            if let Layer::BatchNorm(bn) = layer {
                let c = bn.running_mean.len();
                let m = lookup(entries, &format!("{prefix}{i}.{kind}.running_mean"), c)?;
                let v = lookup(entries, &format!("{prefix}{i}.{kind}.running_var"), c)?;
                bn.running_mean.copy_from_slice(&m.value);
                bn.running_var.copy_from_slice(&v.value);
            }
        }
        Ok(())
    }
}
