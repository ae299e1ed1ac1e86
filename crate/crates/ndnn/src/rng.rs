//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream derived
//! from `(seed, StreamId)`. ChaCha is counter based, so streams with
//! different ids never overlap and adding draws to one purpose never
//! perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for stream splitting. The numeric value is the ChaCha
/// stream id; `sub` distinguishes instances (layer index, stream index,
/// subject index) of the same purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Init { sub: u32 },
    Dropout { sub: u32 },
    Shuffle,
    Assignment,
    Phantom { sub: u32 },
    Split,
    Other { tag: u16, sub: u32 },
}

impl StreamId {
    fn code(self) -> u64 {
        let (tag, sub): (u64, u32) = match self {
            StreamId::Init { sub } => (1, sub),
            StreamId::Dropout { sub } => (2, sub),
            StreamId::Shuffle => (3, 0),
            StreamId::Assignment => (4, 0),
            StreamId::Phantom { sub } => (5, sub),
            StreamId::Split => (6, 0),
            StreamId::Other { tag, sub } => (0x100 + tag as u64, sub),
        };
        (tag << 32) | sub as u64
    }
}

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, id: StreamId) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.code());
    rng
}
