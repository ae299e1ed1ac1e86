//! Per-partition two-sample testing of texture features, landmark selection
//! from the resulting p-value map, and landmark patch extraction.

mod hotelling;
mod landmarks;
mod map;
pub mod special;

pub use hotelling::{condition_number, hotelling_t2, HotellingOptions, HotellingResult};
pub use landmarks::{
    distance, extract_patchset, jitter_centers, select_landmarks, Landmark, LandmarkSet, PatchOptions, PatchSet,
    PatchTuple, DEFAULT_JITTER_STEP, DEFAULT_MIN_DIST, DEFAULT_TOP_K,
};
pub use map::{build_pvalue_map, partition_features, MapConfig, PValueEntry, PValueMap};
