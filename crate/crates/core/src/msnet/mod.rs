//! Multi-stream 3D CNN over landmark patches with a fusion head, transfer
//! fine-tuning and the single-stream baseline.

mod config;
mod data;
mod model;
mod train;

pub use config::{
    shape_trace, FusionConfig, ModelSpec, PaddingMode, ShapeTrace, StreamConfig, BIOMARKER_WIDTH, N_CLASSES,
};
pub use data::{Dataset, Sample};
pub use model::{build_model, Batch, MultiStreamModel, STREAM_FC_START};
pub use train::{
    fine_tune, single_stream_baseline, train, write_training_log, EpochLog, FreezePlan, ParamGroup, TrainOutcome,
    TrainPlan,
};
