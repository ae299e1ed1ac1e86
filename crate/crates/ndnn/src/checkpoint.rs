//! Binary checkpoint format.
//!
//! ```text
//! "NDNN" | version: u16 | descriptor: u32 len + UTF-8 | entry count: u32
//! entry: name (u16 len + UTF-8) | flags: u8 | ndim: u8 | dims: ndim x u32
//!        | step: u64 | value: f32 x len | [adam m: f32 x len | adam v: f32 x len]
//! crc32 of every preceding byte: u32
//! ```
//! All integers and floats are little-endian. Flag bits: 1 = frozen,
//! 2 = buffer (not trainable), 4 = Adam moments present.

use std::io::Write;
use std::path::Path;

use crate::error::{NnError, Result};

pub const MAGIC: &[u8; 4] = b"NDNN";
pub const VERSION: u16 = 1;

const FLAG_FROZEN: u8 = 1;
const FLAG_BUFFER: u8 = 2;
const FLAG_ADAM: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Param,
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen: bool,
    pub kind: EntryKind,
    pub value: Vec<f32>,
    pub adam: Option<AdamState>,
}

/// Named model state plus a free-form architecture descriptor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub descriptor: String,
    pub entries: Vec<StateEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.descriptor.len() as u32).to_le_bytes());
        b.extend_from_slice(self.descriptor.as_bytes());
        b.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let name_len =
                u16::try_from(e.name.len()).map_err(|_| NnError::Config(format!("entry name too long: {}", e.name)))?;
            b.extend_from_slice(&name_len.to_le_bytes());
            b.extend_from_slice(e.name.as_bytes());
            let mut flags = 0u8;
            if e.frozen {
                flags |= FLAG_FROZEN;
            }
            if e.kind == EntryKind::Buffer {
                flags |= FLAG_BUFFER;
            }
            if e.adam.is_some() {
                flags |= FLAG_ADAM;
            }
            b.push(flags);
            b.push(e.shape.len() as u8);
            for &d in &e.shape {
                let d = u32::try_from(d).map_err(|_| NnError::Config(format!("dim {d} exceeds u32")))?;
                b.extend_from_slice(&d.to_le_bytes());
            }
            let n: usize = e.shape.iter().product();
            if n != e.value.len() {
                return Err(NnError::Shape(format!("{}: shape/value length mismatch", e.name)));
            }
            b.extend_from_slice(&e.adam.as_ref().map_or(0, |a| a.step).to_le_bytes());
            push_f32s(&mut b, &e.value);
            if let Some(a) = &e.adam {
                if a.m.len() != n || a.v.len() != n {
                    return Err(NnError::Shape(format!("{}: adam state length mismatch", e.name)));
                }
                push_f32s(&mut b, &a.m);
                push_f32s(&mut b, &a.v);
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(NnError::BadMagic);
        }
        if bytes.len() < 6 {
            return Err(NnError::Corrupt("truncated header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(NnError::Version { found: version, expected: VERSION });
        }
        if bytes.len() < 10 {
            return Err(NnError::Corrupt("truncated header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
        if crc32fast::hash(body) != stored {
            return Err(NnError::Corrupt("checksum mismatch (truncated or modified file)".into()));
        }
        let mut r = Reader { buf: body, pos: 6 };
        let dlen = r.u32()? as usize;
        let descriptor = String::from_utf8(r.take(dlen)?.to_vec())
            .map_err(|_| NnError::Corrupt("descriptor is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| NnError::Corrupt("entry name is not UTF-8".into()))?;
            let flags = r.u8()?;
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| NnError::Corrupt(format!("{name}: dims overflow")))?;
            let step = r.u64()?;
            let value = r.f32s(n)?;
            let adam =
                if flags & FLAG_ADAM != 0 { Some(AdamState { m: r.f32s(n)?, v: r.f32s(n)?, step }) } else { None };
            entries.push(StateEntry {
                name,
                shape,
                frozen: flags & FLAG_FROZEN != 0,
                kind: if flags & FLAG_BUFFER != 0 { EntryKind::Buffer } else { EntryKind::Param },
                value,
                adam,
            });
        }
        if r.pos != body.len() {
            return Err(NnError::Corrupt("trailing bytes after last entry".into()));
        }
        Ok(Self { descriptor, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn push_f32s(b: &mut Vec<u8>, v: &[f32]) {
    b.reserve(v.len() * 4);
    for x in v {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| NnError::Corrupt("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| NnError::Corrupt("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            descriptor: "streams=2".into(),
            entries: vec![
                StateEntry {
                    name: "a.weight".into(),
                    shape: vec![2, 3],
                    frozen: true,
                    kind: EntryKind::Param,
                    value: vec![1.0, -2.0, 3.5, f32::MIN_POSITIVE, 0.0, -0.0],
                    adam: Some(AdamState { m: vec![0.1; 6], v: vec![0.2; 6], step: 17 }),
                },
                StateEntry {
                    name: "a.running_mean".into(),
                    shape: vec![3],
                    frozen: false,
                    kind: EntryKind::Buffer,
                    value: vec![0.5, 0.25, 0.125],
                    adam: None,
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.entries[0].value[5].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 12] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(NnError::Corrupt(_))));
        }
    }

    #[test]
    fn flipped_byte_is_corruption() {
        let mut bytes = sample().to_bytes().unwrap();
        let i = bytes.len() - 10;
        bytes[i] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(NnError::Corrupt(_))));
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(NnError::Version { found: 9, expected: VERSION })));
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(NnError::BadMagic)));
    }
}
