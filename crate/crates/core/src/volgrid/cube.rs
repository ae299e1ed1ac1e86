use super::volume::Volume;
use crate::error::{Error, Result};

/// Cubic patch of side `side`, x-fastest like [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub side: usize,
    pub data: Vec<f32>,
}

impl Cube {
    pub fn new(side: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != side * side * side {
            return Err(Error::ShapeMismatch(format!("cube of side {side} needs {} values", side * side * side)));
        }
        Ok(Self { side, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[x + self.side * (y + self.side * z)]
    }
}

/// `size`³ cube centred on `center`; positions outside the volume are 0.0.
pub fn extract_cube(v: &Volume, center: [i64; 3], size: usize) -> Result<Cube> {
    if size % 2 == 0 {
        return Err(Error::InvalidArgument(format!("cube size must be odd, got {size}")));
    }
    if !v.contains(center) {
        return Err(Error::InvalidArgument(format!("center {center:?} outside volume {:?}", v.dims())));
    }
    Ok(extract_cube_padded(v, center, size))
}

/// Like [`extract_cube`] but accepts any odd size and any center, including
/// centers outside the volume (jittered landmarks near a border).
pub fn extract_cube_padded(v: &Volume, center: [i64; 3], size: usize) -> Cube {
    let half = (size / 2) as i64;
    let dims = v.dims();
    let mut data = vec![0.0f32; size * size * size];
    let start = center.map(|c| c - half);
    // in-bounds x run, identical for every row
    let x0 = start[0].max(0);
    let x1 = (start[0] + size as i64).min(dims[0] as i64);
    let vox = v.voxels();
    for dz in 0..size {
        let z = start[2] + dz as i64;
        if z < 0 || z >= dims[2] as i64 {
            continue;
        }
        for dy in 0..size {
            let y = start[1] + dy as i64;
            if y < 0 || y >= dims[1] as i64 || x1 <= x0 {
                continue;
            }
            let src = v.index(x0 as usize, y as usize, z as usize);
            let dst = (x0 - start[0]) as usize + size * (dy + size * dz);
            let n = (x1 - x0) as usize;
            data[dst..dst + n].copy_from_slice(&vox[src..src + n]);
        }
    }
    Cube { side: size, data }
}

/// The `size`³ block whose lowest corner is `origin`; must lie inside `v`.
pub fn block_cube(v: &Volume, origin: [usize; 3], size: usize) -> Result<Cube> {
    let dims = v.dims();
    if (0..3).any(|a| origin[a] + size > dims[a]) {
        return Err(Error::InvalidArgument(format!("block at {origin:?} of size {size} exceeds volume {dims:?}")));
    }
    let mut data = Vec::with_capacity(size * size * size);
    for z in origin[2]..origin[2] + size {
        for y in origin[1]..origin[1] + size {
            let start = v.index(origin[0], y, z);
            data.extend_from_slice(&v.voxels()[start..start + size]);
        }
    }
    Ok(Cube { side: size, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3]) -> Volume {
        let n = dims.iter().product::<usize>();
        Volume::new(dims, [1.0; 3], (0..n).map(|i| i as f32 + 1.0).collect()).unwrap()
    }

    #[test]
    fn interior_cube_is_subarray() {
        let v = ramp([12, 11, 10]);
        let c = extract_cube(&v, [5, 6, 4], 5).unwrap();
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    assert_eq!(c.get(x, y, z), v.get(3 + x, 4 + y, 2 + z));
                }
            }
        }
    }

    #[test]
    fn corner_cube_is_zero_padded() {
        let v = ramp([12, 12, 12]);
        let c = extract_cube(&v, [0, 0, 0], 19).unwrap();
        for z in 0..19 {
            for y in 0..19 {
                for x in 0..19 {
                    let inside = x >= 9 && y >= 9 && z >= 9 && x - 9 < 12 && y - 9 < 12 && z - 9 < 12;
                    if inside {
                        assert_eq!(c.get(x, y, z), v.get(x - 9, y - 9, z - 9));
                    } else {
                        assert_eq!(c.get(x, y, z), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn size_one_is_center_voxel() {
        let v = ramp([4, 4, 4]);
        let c = extract_cube(&v, [1, 2, 3], 1).unwrap();
        assert_eq!(c.data, vec![v.get(1, 2, 3)]);
    }

    #[test]
    fn even_size_and_outside_center_rejected() {
        let v = ramp([4, 4, 4]);
        assert!(extract_cube(&v, [1, 1, 1], 4).is_err());
        assert!(extract_cube(&v, [4, 1, 1], 3).is_err());
        assert!(extract_cube(&v, [-1, 1, 1], 3).is_err());
    }

    #[test]
    fn padded_variant_handles_outside_centers() {
        let v = ramp([4, 4, 4]);
        let c = extract_cube_padded(&v, [-1, 0, 0], 3);
        // only x = -1 + 1 = 0 column overlaps
        assert_eq!(c.get(2, 1, 1), v.get(0, 0, 0));
        assert_eq!(c.get(1, 1, 1), 0.0);
        let far = extract_cube_padded(&v, [50, 50, 50], 3);
        assert!(far.data.iter().all(|&x| x == 0.0));
    }
}
