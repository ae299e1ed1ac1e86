//! Data-driven landmark discovery over 3D volumes and multi-stream
//! convolutional classification of the patches found at those landmarks.

pub mod error;
pub mod evalkit;
pub mod msnet;
pub mod pipeline;
pub mod statmap;
pub mod tabular;
pub mod texfeat;
pub mod volgrid;

pub use error::{Error, Result};
