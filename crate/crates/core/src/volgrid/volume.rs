use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const VG3_MAGIC: &[u8; 4] = b"VG3D";
pub const VG3_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 3 * 4 + 3 * 8;

/// Dense scalar grid, x-fastest: `index = x + nx * (y + ny * z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], voxels: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::InvalidVolume(format!("dims {dims:?} overflow")))?;
        if n != voxels.len() {
            return Err(Error::InvalidVolume(format!("dims {dims:?} need {n} voxels, got {}", voxels.len())));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!("spacing must be positive, got {spacing:?}")));
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!("voxel {i} is not finite")));
        }
        Ok(Self { dims, spacing, voxels })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, spacing: [1.0; 3], voxels: vec![0.0; dims.iter().product()] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    pub fn contains(&self, c: [i64; 3]) -> bool {
        c.iter().zip(&self.dims).all(|(&v, &d)| v >= 0 && (v as usize) < d)
    }

    /// `max - min` over all voxels.
    pub fn dynamic_range(&self) -> f64 {
        let (lo, hi) =
            self.voxels.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        (hi - lo) as f64
    }
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN + v.voxels.len() * 4);
    buf.extend_from_slice(VG3_MAGIC);
    buf.extend_from_slice(&VG3_VERSION.to_le_bytes());
    for &d in &v.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::DimOverflow { path: path.to_path_buf(), dims: v.dims.map(|d| d as u64) })?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for s in &v.spacing {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for x in &v.voxels {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    f.flush()?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != VG3_MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf() });
    }
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VG3_VERSION {
        return Err(Error::UnsupportedVersion { path: path.to_path_buf(), version });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let raw = [u32_at(6) as u64, u32_at(10) as u64, u32_at(14) as u64];
    let spacing = [f64_at(18), f64_at(26), f64_at(34)];
    let overflow = || Error::DimOverflow { path: path.to_path_buf(), dims: raw };
    let count = raw
        .iter()
        .try_fold(1u64, |a, &d| a.checked_mul(d))
        .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= usize::MAX as u64 - HEADER_LEN as u64))
        .ok_or_else(overflow)? as usize;
    let expected = HEADER_LEN + count * 4;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(Error::InvalidVolume(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            bytes.len() - expected
        )));
    }
    let voxels =
        bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Volume::new(raw.map(|d| d as usize), spacing, voxels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_2x2x2_has_eight_zero_floats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.vg3");
        save_volume(&Volume::zeros([2, 2, 2]), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 4);
        assert!(bytes[HEADER_LEN..].iter().all(|&b| b == 0));
        assert_eq!(&bytes[..4], b"VG3D");
    }

    #[test]
    fn errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.vg3");
        let v = Volume::new([2, 3, 1], [1.0, 1.0, 2.0], (0..6).map(|i| i as f32).collect()).unwrap();
        save_volume(&v, &p).unwrap();
        let good = std::fs::read(&p).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(load_volume(&p), Err(Error::BadMagic { .. })));

        std::fs::write(&p, &good[..good.len() - 3]).unwrap();
        assert!(matches!(load_volume(&p), Err(Error::Truncated { .. })));

        let mut huge = good.clone();
        for o in [6, 10, 14] {
            huge[o..o + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        std::fs::write(&p, &huge).unwrap();
        assert!(matches!(load_volume(&p), Err(Error::DimOverflow { .. })));

        let mut ver = good;
        ver[4] = 7;
        std::fs::write(&p, &ver).unwrap();
        assert!(matches!(load_volume(&p), Err(Error::UnsupportedVersion { version: 7, .. })));
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(Volume::new([2, 2, 2], [1.0; 3], vec![0.0; 7]).is_err());
        assert!(Volume::new([1, 1, 1], [0.0, 1.0, 1.0], vec![0.0]).is_err());
        assert!(Volume::new([1, 1, 1], [1.0; 3], vec![f32::NAN]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(
            dims in (1usize..5, 1usize..5, 1usize..5),
            seed in any::<u64>(),
            sx in 0.1f64..3.0,
        ) {
            let n = dims.0 * dims.1 * dims.2;
            let mut state = seed | 1;
            let voxels: Vec<f32> = (0..n).map(|_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                let bits = (state as u32) & 0xbfff_ffff; // never NaN/inf: exponent < 255
                f32::from_bits(bits)
            }).collect();
            let v = Volume::new([dims.0, dims.1, dims.2], [sx, 1.0, 0.5], voxels).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.vg3");
            save_volume(&v, &p).unwrap();
            let back = load_volume(&p).unwrap();
            prop_assert_eq!(back.dims(), v.dims());
            prop_assert_eq!(back.spacing().map(f64::to_bits), v.spacing().map(f64::to_bits));
            let a: Vec<u32> = back.voxels().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = v.voxels().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
