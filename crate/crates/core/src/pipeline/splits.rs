use ndnn::{stream, StreamId};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Subject indices of each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: each class is shuffled with its own seeded stream and
/// cut at `round(n · f_train)` and `round(n · f_val)`; the rest is test.
pub fn stratified_split(labels: &[u8], train: f64, val: f64, seed: u64, tag: u16) -> Split {
    let mut out = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut stream(seed, StreamId::Other { tag, sub: class as u32 }));
        let n = idx.len();
        let n_train = ((n as f64 * train).round() as usize).min(n);
        let n_val = ((n as f64 * val).round() as usize).min(n - n_train);
        out.train.extend(&idx[..n_train]);
        out.val.extend(&idx[n_train..n_train + n_val]);
        out.test.extend(&idx[n_train + n_val..]);
    }
    for v in [&mut out.train, &mut out.val, &mut out.test] {
        v.sort_unstable();
    }
    out
}

/// Move a stratified share of `split.train` into `split.val`.
pub fn carve_validation(split: &mut Split, labels: &[u8], fraction: f64, seed: u64, tag: u16) {
    let train_labels: Vec<u8> = split.train.iter().map(|&i| labels[i]).collect();
    let inner = stratified_split(&train_labels, 1.0 - fraction, fraction, seed, tag);
    let pick = |v: &[usize]| v.iter().map(|&k| split.train[k]).collect::<Vec<_>>();
    let (train, val) = (pick(&inner.train), pick(&inner.val));
    split.train = train;
    split.val.extend(val);
    split.val.sort_unstable();
}
