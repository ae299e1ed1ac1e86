use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::ledger::{self, DirLock, LedgerEntry};
use super::splits::{carve_validation, stratified_split, Split};
use crate::error::{Error, Result};
use crate::evalkit::{
    self, auc, confusion, decide, is_collapsed, line_plot_svg, metrics, roc, MetricsReport, RocCurve,
};
use crate::msnet::{
    fine_tune, single_stream_baseline, train, write_training_log, Dataset, EpochLog, FreezePlan, MultiStreamModel,
};
use crate::statmap::{build_pvalue_map, distance, extract_patchset, select_landmarks, LandmarkSet, PValueMap};
use crate::tabular::{fit_stats, knn_impute, zscore_with, BiomarkerRecord, CohortTable};
use crate::volgrid::{load_volume, CohortManifest, PartitionGrid, PhantomCohort, Volume};

pub const KNN_K: usize = 6;

pub const SOURCE_DIR: &str = "source";
pub const TRANSFER_DIR: &str = "transfer";
pub const SPLITS_FILE: &str = "splits.json";
pub const PVALUE_MAP_FILE: &str = "maps/pvalue_map.csv";
pub const LANDMARKS_FILE: &str = "landmarks/landmarks.csv";
pub const SOURCE_MODEL: &str = "models/source.ndnn";
pub const TRANSFER_MODEL: &str = "models/transfer.ndnn";
pub const REPORT_FILE: &str = "report.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Streams,
    PatchSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Streams => "streams",
            Self::PatchSize => "patch_size",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    NoTransfer,
    SingleStream,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Self::NoTransfer => "no-transfer",
            Self::SingleStream => "single-stream",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Landmarks,
    Patches,
    Train,
    Finetune,
    Evaluate,
    Sweep(SweepAxis),
    Ablate(Ablation),
    Report,
}

impl Command {
    pub fn name(self) -> String {
        match self {
            Self::Synth => "synth".into(),
            Self::Landmarks => "landmarks".into(),
            Self::Patches => "patches".into(),
            Self::Train => "train".into(),
            Self::Finetune => "finetune".into(),
            Self::Evaluate => "evaluate".into(),
            Self::Sweep(a) => format!("sweep --axis {}", a.name()),
            Self::Ablate(w) => format!("ablate --which {}", w.name()),
            Self::Report => "report".into(),
        }
    }
}

/// What a command printed and wrote. Artifact paths are relative to the
/// output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub summary: Vec<String>,
    pub artifacts: BTreeMap<String, String>,
}

impl CommandOutput {
    fn note(&mut self, line: impl Into<String>) {
        let line = line.into();
        info!("{line}");
        self.summary.push(line);
    }

    fn artifact(&mut self, key: impl Into<String>, rel: &str) {
        self.artifacts.insert(key.into(), rel.to_string());
    }
}

/// Run one command against `cfg.out`: takes the directory lock, executes and
/// appends a ledger entry.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<CommandOutput> {
    cfg.validate()?;
    let out = cfg.out.clone();
    let _lock = DirLock::acquire(&out)?;
    let started = ledger::unix_now();
    let res = match cmd {
        Command::Synth => cmd_synth(cfg, &out),
        Command::Landmarks => cmd_landmarks(cfg, &out),
        Command::Patches => cmd_patches(cfg, &out),
        Command::Train => cmd_train(cfg, &out),
        Command::Finetune => cmd_finetune(cfg, &out),
        Command::Evaluate => cmd_evaluate(cfg, &out),
        Command::Sweep(axis) => cmd_sweep(cfg, &out, axis),
        Command::Ablate(which) => cmd_ablate(cfg, &out, which),
        Command::Report => cmd_report(cfg, &out),
    }?;
    ledger::append(
        &out,
        &LedgerEntry {
            run_id: cfg.run_id(),
            command: cmd.name(),
            config_hash: cfg.hash(),
            started_unix: started,
            finished_unix: ledger::unix_now(),
            artifacts: res.artifacts.clone(),
            config: cfg.clone(),
        },
    )?;
    Ok(res)
}

/// Process exit status for an error: 2 configuration, 3 data, 4 numerical.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::NonFinite(_) | Error::Numerical(_) => 4,
        Error::Nn(e) if matches!(e, ndnn::NnError::NonFinite(_)) => 4,
        _ => 3,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

fn out_path(out: &Path, rel: &str) -> Result<PathBuf> {
    let p = out.join(rel);
    ensure_parent(&p)?;
    Ok(p)
}

// ---------------------------------------------------------------- data

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub source: Split,
    pub transfer: Split,
}

pub fn make_splits(cfg: &RunConfig, source_labels: &[u8], transfer_labels: &[u8]) -> Splits {
    let [tr, va, _] = cfg.source_split;
    let source = stratified_split(source_labels, tr, va, cfg.seed, 1);
    let mut transfer = stratified_split(transfer_labels, cfg.transfer_split[0], 0.0, cfg.seed, 2);
    carve_validation(&mut transfer, transfer_labels, cfg.transfer_val_fraction, cfg.seed, 3);
    Splits { source, transfer }
}

pub fn load_splits(out: &Path) -> Result<Splits> {
    let path = out.join(SPLITS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read {} ({e}); run `synth` first", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("corrupt {}: {e}", path.display())))
}

/// A cohort read back from disk, with biomarkers imputed but not scaled.
#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub manifest: CohortManifest,
    pub volumes: Vec<Volume>,
    pub labels: Vec<u8>,
    pub template: Volume,
    pub biomarkers: Option<Vec<[f64; 6]>>,
}

pub fn load_cohort(out: &Path, name: &str) -> Result<LoadedCohort> {
    let dir = out.join(name);
    let mpath = dir.join("manifest.csv");
    if !mpath.exists() {
        return Err(Error::Data(format!("no cohort at {}; run `synth` first", dir.display())));
    }
    let manifest = CohortManifest::load(&mpath)?;
    let volumes = manifest.entries.iter().map(|e| load_volume(manifest.resolve(e))).collect::<Result<Vec<_>>>()?;
    let template = load_volume(dir.join("template.vg3"))?;
    let labels = manifest.labels();
    let biomarkers = if manifest.entries.iter().all(|e| e.biomarkers.is_some()) {
        let ids = manifest.entries.iter().map(|e| e.path.display().to_string()).collect();
        let recs: Vec<BiomarkerRecord> = manifest.entries.iter().filter_map(|e| e.biomarkers.clone()).collect();
        let filled = knn_impute(&CohortTable::new(ids, recs)?, KNN_K)?;
        Some(filled.records.iter().map(|r| r.values().expect("imputed records are complete")).collect())
    } else {
        None
    };
    Ok(LoadedCohort { manifest, volumes, labels, template, biomarkers })
}

pub fn load_landmarks(cfg: &RunConfig, out: &Path, n: usize) -> Result<LandmarkSet> {
    let path = out.join(LANDMARKS_FILE);
    if !path.exists() {
        return Err(Error::Data(format!("no landmark set at {}; run `landmarks` first", path.display())));
    }
    let set = LandmarkSet::read_csv(&path, cfg.min_dist, cfg.top_k)?;
    if set.len() < n {
        return Err(Error::Config(format!(
            "{n} streams requested but only {} landmarks are available; lower --streams",
            set.len()
        )));
    }
    Ok(set.truncated(n))
}

/// Train, validation and test datasets of one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Patch datasets for a split. Biomarkers are z-scored with statistics of
/// the training subjects; augmentation applies to the training split only.
pub fn task_data(cfg: &RunConfig, cohort: &LoadedCohort, split: &Split, landmarks: &[[i64; 3]]) -> Result<TaskData> {
    let bio = if cfg.biomarkers {
        let raw = cohort.biomarkers.as_ref().ok_or_else(|| {
            Error::Data("biomarkers requested but the manifest lacks biomarker columns for some subjects".into())
        })?;
        let train_vals: Vec<[f64; 6]> = split.train.iter().map(|&i| raw[i]).collect();
        Some(zscore_with(raw, &fit_stats(&train_vals)))
    } else {
        None
    };
    let build = |idx: &[usize], augment: bool| -> Result<Dataset> {
        let vols: Vec<&Volume> = idx.iter().map(|&i| &cohort.volumes[i]).collect();
        let labels: Vec<u8> = idx.iter().map(|&i| cohort.labels[i]).collect();
        let b: Option<Vec<[f64; 6]>> = bio.as_ref().map(|b| idx.iter().map(|&i| b[i]).collect());
        let ps = extract_patchset(&vols, landmarks, cfg.patch_options(augment))?;
        Dataset::from_patchset(ps, &labels, b.as_deref())
    };
    Ok(TaskData {
        train: build(&split.train, cfg.augment)?,
        val: build(&split.val, false)?,
        test: build(&split.test, false)?,
    })
}

/// Test-set outcome of one model.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<u8>,
    pub scores: Vec<f64>,
    pub roc: Option<RocCurve>,
    pub collapsed: bool,
}

pub fn evaluate_model(model: &mut MultiStreamModel, ds: &Dataset) -> Result<Evaluation> {
    let probs = model.predict(ds)?;
    let labels = ds.labels();
    let predictions: Vec<u8> = probs.iter().map(|&p| decide(p)).collect();
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let curve = roc(&scores, &labels).ok();
    let report = metrics(confusion(&predictions, &labels)?)?.with_auc(curve.as_ref().map(auc));
    let collapsed = is_collapsed(&predictions);
    Ok(Evaluation { report, predictions, scores, roc: curve, collapsed })
}

// ---------------------------------------------------------------- experiment steps

/// Source-task model trained from scratch.
pub fn train_source(cfg: &RunConfig, data: &TaskData) -> Result<(MultiStreamModel, Vec<EpochLog>)> {
    let model = MultiStreamModel::new(cfg.model_spec())?;
    let outcome = train(model, &data.train, &data.val, &cfg.train_plan())?;
    Ok((outcome.model, outcome.log))
}

/// Values and running statistics of every stream, by name.
fn stream_state(model: &mut MultiStreamModel) -> Result<Vec<(String, Vec<f32>)>> {
    Ok(model
        .to_checkpoint()?
        .entries
        .into_iter()
        .filter(|e| e.name.starts_with("stream"))
        .map(|e| (e.name, e.value))
        .collect())
}

/// Fine-tune the head of a source model on the transfer task; verifies the
/// frozen streams came through untouched.
pub fn finetune_transfer(
    cfg: &RunConfig,
    mut source: MultiStreamModel,
    data: &TaskData,
) -> Result<(MultiStreamModel, Vec<EpochLog>)> {
    let before = stream_state(&mut source)?;
    let outcome = fine_tune(source, &FreezePlan::transfer(), &data.train, &data.val, &cfg.finetune_plan())?;
    let mut model = outcome.model;
    if stream_state(&mut model)? != before {
        return Err(Error::Numerical("frozen stream parameters changed during fine-tuning".into()));
    }
    Ok((model, outcome.log))
}

pub fn train_scratch(cfg: &RunConfig, data: &TaskData) -> Result<(MultiStreamModel, Vec<EpochLog>)> {
    train_source(cfg, data)
}

/// Single-stream baseline on the task's individual patches; returns the
/// model and its per-patch test evaluation.
pub fn train_single_stream(cfg: &RunConfig, data: &TaskData) -> Result<(Evaluation, Vec<EpochLog>)> {
    let outcome = single_stream_baseline(&cfg.model_spec(), &data.train, &data.val, &cfg.train_plan())?;
    let mut model = outcome.model;
    let eval = evaluate_model(&mut model, &data.test.single_patches())?;
    Ok((eval, outcome.log))
}

fn write_eval(out: &Path, res: &mut CommandOutput, cfg: &RunConfig, task: &str, ev: &Evaluation) -> Result<()> {
    let mrel = format!("metrics/{task}.csv");
    evalkit::write_metrics_csv(out_path(out, &mrel)?, &[(cfg.run_id(), task.to_string(), ev.report.clone())])?;
    res.artifact(format!("metrics_{task}"), &mrel);
    if let Some(curve) = &ev.roc {
        let rrel = format!("roc/{task}.csv");
        evalkit::write_roc_csv(out_path(out, &rrel)?, curve)?;
        res.artifact(format!("roc_{task}"), &rrel);
    }
    let f = ev.report.csv_fields();
    res.note(format!(
        "{task}: acc {} sen {} spe {} f1 {} auc {}{}",
        f[0],
        f[1],
        f[2],
        f[3],
        f[4],
        if ev.collapsed { " (collapsed: constant predictions)" } else { "" }
    ));
    Ok(())
}

fn write_log(out: &Path, res: &mut CommandOutput, name: &str, log: &[EpochLog]) -> Result<()> {
    let rel = format!("logs/{name}.csv");
    write_training_log(out_path(out, &rel)?, log)?;
    res.artifact(format!("log_{name}"), &rel);
    Ok(())
}

// ---------------------------------------------------------------- commands

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let mut labels = Vec::new();
    for (name, spec) in [(SOURCE_DIR, cfg.source_phantom()), (TRANSFER_DIR, cfg.transfer_phantom())] {
        let cohort = PhantomCohort::generate(&spec)?;
        let (manifest, _) = cohort.write(out.join(name))?;
        res.artifact(format!("manifest_{name}"), &format!("{name}/manifest.csv"));
        res.artifact(format!("template_{name}"), &format!("{name}/template.vg3"));
        res.note(format!(
            "{name}: {} subjects ({} {}, {} {})",
            manifest.entries.len(),
            spec.n_per_class[0],
            spec.class_names[0],
            spec.n_per_class[1],
            spec.class_names[1]
        ));
        labels.push(manifest.labels());
    }
    let splits = make_splits(cfg, &labels[0], &labels[1]);
    let text = serde_json::to_string_pretty(&splits).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(out.join(SPLITS_FILE), text)?;
    res.artifact("splits", SPLITS_FILE);
    res.note(format!(
        "splits: source {}/{}/{} train/val/test, transfer {}/{}/{}",
        splits.source.train.len(),
        splits.source.val.len(),
        splits.source.test.len(),
        splits.transfer.train.len(),
        splits.transfer.val.len(),
        splits.transfer.test.len()
    ));
    Ok(res)
}

/// P-value map over the source training split and the selected landmarks.
pub fn compute_landmarks(
    cfg: &RunConfig,
    cohort: &LoadedCohort,
    split: &Split,
) -> Result<(PValueMap, LandmarkSet, bool)> {
    let group = |class: u8| -> Vec<&Volume> {
        split.train.iter().filter(|&&i| cohort.labels[i] == class).map(|&i| &cohort.volumes[i]).collect()
    };
    let (a, b) = (group(1), group(0));
    let grid = PartitionGrid::for_dims(cohort.template.dims(), cfg.block_size)?;
    let map = build_pvalue_map(&a, &b, &cohort.template, &grid, &cfg.map_config()).map_err(|e| match e {
        Error::InsufficientSamples { df, needed_total } => Error::Data(format!(
            "the source training split has {} + {} subjects, giving {df} denominator degrees of freedom; \
             the test needs at least {needed_total} training subjects in total: raise source_subjects or \
             the training fraction",
            a.len(),
            b.len()
        )),
        e => e,
    })?;
    let (set, short) = select_landmarks(&map, cfg.min_dist, cfg.top_k);
    Ok((map, set, short))
}

fn cmd_landmarks(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let cohort = load_cohort(out, SOURCE_DIR)?;
    let splits = load_splits(out)?;
    let (map, set, short) = compute_landmarks(cfg, &cohort, &splits.source)?;
    map.write_csv(out_path(out, PVALUE_MAP_FILE)?)?;
    set.write_csv(out_path(out, LANDMARKS_FILE)?)?;
    res.artifact("pvalue_map", PVALUE_MAP_FILE);
    res.artifact("landmarks", LANDMARKS_FILE);
    res.note(format!(
        "p-value map: {} partitions, min p {:.3e}, median p {:.3e}",
        map.len(),
        map.min_p().unwrap_or(f64::NAN),
        map.median_p().unwrap_or(f64::NAN)
    ));
    let c = set.centers();
    let closest = c
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| c[i + 1..].iter().map(move |&b| distance(a, b)))
        .fold(f64::INFINITY, f64::min);
    if closest < cfg.min_dist {
        return Err(Error::Numerical(format!("landmarks {closest:.2} voxels apart, below min_dist {}", cfg.min_dist)));
    }
    res.note(format!("{} landmarks selected (closest pair {closest:.2} voxels apart)", set.len()));
    if short {
        warn!("only {} landmarks satisfy the spacing constraint (top_k {})", set.len(), cfg.top_k);
        res.note(format!("warning: fewer than top_k = {} landmarks available", cfg.top_k));
    }
    let top = set.truncated(cfg.streams.min(set.len())).centers();
    for r in &cfg.regions {
        let near = top
            .iter()
            .map(|&l| {
                let d: f64 = (0..3).map(|k| (l[k] as f64 - r.center[k]).powi(2)).sum();
                d.sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        res.note(format!(
            "planted region at ({}, {}, {}): nearest of the top {} landmarks {near:.2} voxels away",
            r.center[0],
            r.center[1],
            r.center[2],
            top.len()
        ));
    }
    Ok(res)
}

fn cmd_patches(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let splits = load_splits(out)?;
    let landmarks = load_landmarks(cfg, out, cfg.streams)?.centers();
    let rel = "patches/summary.csv";
    let mut w = csv::Writer::from_path(out_path(out, rel)?)?;
    w.write_record(["cohort", "split", "subjects", "tuples", "landmarks", "patch_size"])?;
    for (name, split) in [(SOURCE_DIR, &splits.source), (TRANSFER_DIR, &splits.transfer)] {
        let cohort = load_cohort(out, name)?;
        let data = task_data(cfg, &cohort, split, &landmarks)?;
        for (part, idx, ds) in
            [("train", &split.train, &data.train), ("val", &split.val, &data.val), ("test", &split.test, &data.test)]
        {
            w.write_record([
                name.to_string(),
                part.to_string(),
                idx.len().to_string(),
                ds.len().to_string(),
                landmarks.len().to_string(),
                cfg.patch_size.to_string(),
            ])?;
            res.note(format!("{name} {part}: {} subjects, {} patch tuples", idx.len(), ds.len()));
        }
    }
    w.flush()?;
    res.artifact("patch_summary", rel);
    Ok(res)
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let splits = load_splits(out)?;
    let landmarks = load_landmarks(cfg, out, cfg.streams)?.centers();
    let cohort = load_cohort(out, SOURCE_DIR)?;
    let data = task_data(cfg, &cohort, &splits.source, &landmarks)?;
    let (mut model, log) = train_source(cfg, &data)?;
    model.save(out_path(out, SOURCE_MODEL)?)?;
    res.artifact("model_source", SOURCE_MODEL);
    write_log(out, &mut res, "source", &log)?;
    let ev = evaluate_model(&mut model, &data.test)?;
    write_eval(out, &mut res, cfg, "source", &ev)?;
    Ok(res)
}

fn load_source_model(cfg: &RunConfig, out: &Path) -> Result<MultiStreamModel> {
    let path = out.join(SOURCE_MODEL);
    if !path.exists() {
        return Err(Error::Data(format!("no source checkpoint at {}; run `train` first", path.display())));
    }
    MultiStreamModel::load_expecting(path, cfg.streams, cfg.patch_size, cfg.biomarkers)
}

fn cmd_finetune(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let splits = load_splits(out)?;
    let landmarks = load_landmarks(cfg, out, cfg.streams)?.centers();
    let cohort = load_cohort(out, TRANSFER_DIR)?;
    let data = task_data(cfg, &cohort, &splits.transfer, &landmarks)?;
    let source = load_source_model(cfg, out)?;
    let (mut model, log) = finetune_transfer(cfg, source, &data)?;
    res.note("frozen stream parameters verified unchanged");
    model.save(out_path(out, TRANSFER_MODEL)?)?;
    res.artifact("model_transfer", TRANSFER_MODEL);
    write_log(out, &mut res, "transfer", &log)?;
    let ev = evaluate_model(&mut model, &data.test)?;
    write_eval(out, &mut res, cfg, "transfer", &ev)?;
    Ok(res)
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let splits = load_splits(out)?;
    let landmarks = load_landmarks(cfg, out, cfg.streams)?.centers();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (task, dir, split, ckpt) in [
        ("source", SOURCE_DIR, &splits.source, SOURCE_MODEL),
        ("transfer", TRANSFER_DIR, &splits.transfer, TRANSFER_MODEL),
    ] {
        if !out.join(ckpt).exists() {
            continue;
        }
        let mut model = MultiStreamModel::load_expecting(out.join(ckpt), cfg.streams, cfg.patch_size, cfg.biomarkers)?;
        let cohort = load_cohort(out, dir)?;
        let data = task_data(cfg, &cohort, split, &landmarks)?;
        let ev = evaluate_model(&mut model, &data.test)?;
        write_eval(out, &mut res, cfg, task, &ev)?;
        rows.push((cfg.run_id(), task.to_string(), ev.report.clone()));
        if let Some(c) = ev.roc {
            curves.push((task.to_string(), c.points));
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no checkpoints to evaluate; run `train` first".into()));
    }
    evalkit::write_metrics_csv(out_path(out, "metrics/metrics.csv")?, &rows)?;
    res.artifact("metrics_all", "metrics/metrics.csv");
    if !curves.is_empty() {
        std::fs::write(
            out_path(out, "roc/roc.svg")?,
            line_plot_svg("ROC", "false positive rate", "true positive rate", &curves),
        )?;
        res.artifact("roc_plot", "roc/roc.svg");
    }
    Ok(res)
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub source: MetricsReport,
    pub transfer: MetricsReport,
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, axis: SweepAxis) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let splits = load_splits(out)?;
    let all = {
        let path = out.join(LANDMARKS_FILE);
        if !path.exists() {
            return Err(Error::Data(format!("no landmark set at {}; run `landmarks` first", path.display())));
        }
        LandmarkSet::read_csv(&path, cfg.min_dist, cfg.top_k)?
    };
    let source = load_cohort(out, SOURCE_DIR)?;
    let transfer = load_cohort(out, TRANSFER_DIR)?;
    let values = match axis {
        SweepAxis::Streams => &cfg.sweep_streams,
        SweepAxis::PatchSize => &cfg.sweep_patch_sizes,
    };
    let mut rows = Vec::new();
    for &v in values {
        let mut sub = cfg.clone();
        match axis {
            SweepAxis::Streams => sub.streams = v,
            SweepAxis::PatchSize => sub.patch_size = v,
        }
        if sub.streams > all.len() {
            res.note(format!("{} = {v}: skipped, only {} landmarks available", axis.name(), all.len()));
            continue;
        }
        let lm = all.truncated(sub.streams).centers();
        let sdata = task_data(&sub, &source, &splits.source, &lm)?;
        let (mut model, _) = train_source(&sub, &sdata)?;
        let s_ev = evaluate_model(&mut model, &sdata.test)?;
        let tdata = task_data(&sub, &transfer, &splits.transfer, &lm)?;
        let (mut tuned, _) = finetune_transfer(&sub, model, &tdata)?;
        let t_ev = evaluate_model(&mut tuned, &tdata.test)?;
        res.note(format!(
            "{} = {v}: source acc {:.2}, transfer acc {:.2}",
            axis.name(),
            s_ev.report.acc,
            t_ev.report.acc
        ));
        rows.push(SweepRow { value: v, source: s_ev.report, transfer: t_ev.report });
    }
    let rel = format!("sweeps/{}.csv", axis.name());
    let mut w = csv::Writer::from_path(out_path(out, &rel)?)?;
    w.write_record([
        "run_id",
        axis.name(),
        "source_acc",
        "transfer_acc",
        "transfer_sen",
        "transfer_spe",
        "transfer_f1",
        "transfer_auc",
    ])?;
    for r in &rows {
        let f = r.transfer.csv_fields();
        w.write_record([
            cfg.run_id(),
            r.value.to_string(),
            format!("{:.2}", r.source.acc),
            f[0].clone(),
            f[1].clone(),
            f[2].clone(),
            f[3].clone(),
            f[4].clone(),
        ])?;
    }
    w.flush()?;
    res.artifact(format!("sweep_{}", axis.name()), &rel);
    if !rows.is_empty() {
        let lo = rows.iter().map(|r| r.value).min().unwrap_or(0) as f64;
        let hi = rows.iter().map(|r| r.value).max().unwrap_or(0) as f64;
        let x = |v: usize| if hi > lo { (v as f64 - lo) / (hi - lo) } else { 0.5 };
        let series = vec![
            ("source".to_string(), rows.iter().map(|r| (x(r.value), r.source.acc / 100.0)).collect()),
            ("transfer".to_string(), rows.iter().map(|r| (x(r.value), r.transfer.acc / 100.0)).collect()),
        ];
        let svg_rel = format!("sweeps/{}.svg", axis.name());
        let title = format!("accuracy vs {} ({lo}..{hi})", axis.name());
        std::fs::write(out_path(out, &svg_rel)?, line_plot_svg(&title, axis.name(), "accuracy", &series))?;
        res.artifact(format!("sweep_{}_plot", axis.name()), &svg_rel);
    }
    Ok(res)
}

pub const ABLATION_HEADER: [&str; 8] = ["run_id", "variant", "acc", "sen", "spe", "f1", "auc", "collapsed"];

fn cmd_ablate(cfg: &RunConfig, out: &Path, which: Ablation) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let splits = load_splits(out)?;
    let landmarks = load_landmarks(cfg, out, cfg.streams)?.centers();
    let cohort = load_cohort(out, TRANSFER_DIR)?;
    let data = task_data(cfg, &cohort, &splits.transfer, &landmarks)?;
    let path = out.join(TRANSFER_MODEL);
    if !path.exists() {
        return Err(Error::Data(format!("no fine-tuned checkpoint at {}; run `finetune` first", path.display())));
    }
    let mut full = MultiStreamModel::load_expecting(path, cfg.streams, cfg.patch_size, cfg.biomarkers)?;
    let full_ev = evaluate_model(&mut full, &data.test)?;
    let (ablated, log) = match which {
        Ablation::NoTransfer => {
            let (mut m, log) = train_scratch(cfg, &data)?;
            (evaluate_model(&mut m, &data.test)?, log)
        }
        Ablation::SingleStream => train_single_stream(cfg, &data)?,
    };
    write_log(out, &mut res, &format!("ablation_{}", which.name()), &log)?;
    let rel = format!("ablations/{}.csv", which.name());
    let mut w = csv::Writer::from_path(out_path(out, &rel)?)?;
    w.write_record(ABLATION_HEADER)?;
    for (variant, ev) in [("full", &full_ev), (which.name(), &ablated)] {
        let mut rec = vec![cfg.run_id(), variant.to_string()];
        rec.extend(ev.report.csv_fields());
        rec.push(ev.collapsed.to_string());
        w.write_record(&rec)?;
        res.note(format!(
            "{variant}: acc {:.2}{}",
            ev.report.acc,
            if ev.collapsed { " (collapsed: constant predictions)" } else { "" }
        ));
    }
    w.flush()?;
    res.artifact(format!("ablation_{}", which.name()), &rel);
    Ok(res)
}

fn csv_to_markdown(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for rec in r.records() {
        let rec = rec?;
        let _ = writeln!(s, "| {} |", rec.iter().collect::<Vec<_>>().join(" | "));
    }
    Ok(s)
}

/// Markdown report assembled from the tables recorded in the ledger; the
/// latest entry for each artifact wins.
fn cmd_report(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let mut res = CommandOutput::default();
    let entries = ledger::read(out)?;
    if entries.is_empty() {
        return Err(Error::Data(format!("ledger in {} is empty; nothing to report", out.display())));
    }
    let mut latest: BTreeMap<String, (String, String)> = BTreeMap::new();
    for e in &entries {
        for (k, v) in &e.artifacts {
            latest.insert(k.clone(), (v.clone(), e.command.clone()));
        }
    }
    let mut md = format!("# Experiment report\n\nrun id `{}`, config hash `{}`\n\n", cfg.run_id(), cfg.hash());
    let sections = [("metrics_", "Metrics"), ("ablation_", "Ablations"), ("sweep_", "Sweeps")];
    for (prefix, title) in sections {
        let tables: Vec<_> = latest.iter().filter(|(k, (v, _))| k.starts_with(prefix) && v.ends_with(".csv")).collect();
        if tables.is_empty() {
            continue;
        }
        let _ = writeln!(md, "## {title}\n");
        for (_, (rel, cmd)) in tables {
            let _ = writeln!(md, "`{rel}` (from `{cmd}`)\n");
            md.push_str(&csv_to_markdown(&out.join(rel))?);
            md.push('\n');
        }
    }
    if let Some((rel, _)) = latest.get("landmarks") {
        let set = LandmarkSet::read_csv(out.join(rel), cfg.min_dist, cfg.top_k)?;
        let _ =
            writeln!(md, "## Landmarks\n\n{} landmarks in `{rel}`; first {}:\n", set.len(), cfg.streams.min(set.len()));
        md.push_str("| rank | x | y | z | p |\n|---|---|---|---|---|\n");
        for (i, l) in set.landmarks.iter().take(cfg.streams).enumerate() {
            let _ =
                writeln!(md, "| {} | {} | {} | {} | {:.3e} |", i + 1, l.center[0], l.center[1], l.center[2], l.p_value);
        }
        md.push('\n');
    }
    md.push_str("## Ledger\n\n| command | run id | finished (unix) |\n|---|---|---|\n");
    for e in &entries {
        let _ = writeln!(md, "| {} | {} | {} |", e.command, e.run_id, e.finished_unix);
    }
    std::fs::write(out.join(REPORT_FILE), md)?;
    res.artifact("report", REPORT_FILE);
    res.note(format!("report written to {}", out.join(REPORT_FILE).display()));
    Ok(res)
}
