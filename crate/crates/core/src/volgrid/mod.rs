//! Volumes, the `.vg3` file format, partitioning, patch extraction and the
//! synthetic phantom cohorts used in place of clinical scans.

mod cube;
mod manifest;
mod partition;
mod phantom;
mod volume;

pub use cube::{block_cube, extract_cube, extract_cube_padded, Cube};
pub use manifest::{CohortManifest, ManifestEntry};
pub use partition::{partition, Block, PartitionGrid};
pub use phantom::{
    generate_phantom_cohort, BiomarkerProfile, EffectKind, PhantomCohort, PhantomSpec, PlantedRegion, Subject,
};
pub use volume::{load_volume, save_volume, Volume, VG3_MAGIC, VG3_VERSION};
