//! End-to-end experiment orchestration over an output directory.

mod commands;
mod config;
pub mod ledger;
mod splits;

pub use commands::{
    compute_landmarks, evaluate_model, exit_code, finetune_transfer, load_cohort, load_landmarks, load_splits,
    make_splits, run, task_data, train_scratch, train_single_stream, train_source, Ablation, Command, CommandOutput,
    Evaluation, LoadedCohort, Splits, SweepAxis, SweepRow, TaskData, ABLATION_HEADER, KNN_K, LANDMARKS_FILE,
    PVALUE_MAP_FILE, REPORT_FILE, SOURCE_DIR, SOURCE_MODEL, SPLITS_FILE, TRANSFER_DIR, TRANSFER_MODEL,
};
pub use config::{default_regions, Overrides, RunConfig};
pub use ledger::{DirLock, LedgerEntry};
pub use splits::{carve_validation, stratified_split, Split};
