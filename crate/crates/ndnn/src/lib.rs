//! Minimal deterministic tensor core for 3D convolutional networks.
//!
//! Layers cache what they need on `forward` and consume it on `backward`;
//! there is no general autograd graph. Storage is generic over [`Real`] so
//! the same code runs in 32-bit for training and 64-bit for gradient checks.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod norm;
pub mod param;
pub mod pool;
pub mod real;
pub mod rng;
pub mod sequential;
pub mod tensor;

pub use activation::{Dropout, Relu};
pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{Checkpoint, EntryKind, StateEntry};
pub use conv::{Conv3d, Padding};
pub use dense::Dense;
pub use error::{NnError, Result};
pub use loss::{softmax, softmax_xent, XentOutput};
pub use norm::BatchNorm;
pub use param::Param;
pub use pool::MaxPool3d;
pub use real::Real;
pub use rng::{stream, Rng, StreamId};
pub use sequential::{Flatten, Layer, Sequential};
pub use tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
