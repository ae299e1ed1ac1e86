use super::volume::Volume;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub index: usize,
    pub origin: [usize; 3],
    pub center: [usize; 3],
}

/// Non-overlapping cubic blocks tiling the largest block-aligned subvolume.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionGrid {
    pub block_size: usize,
    pub counts: [usize; 3],
    pub blocks: Vec<Block>,
}

impl PartitionGrid {
    pub fn for_dims(dims: [usize; 3], block: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::InvalidArgument("block size must be at least 1".into()));
        }
        if dims.iter().any(|&d| d < block) {
            return Err(Error::InvalidArgument(format!("block size {block} exceeds volume dims {dims:?}")));
        }
        let counts = dims.map(|d| d / block);
        let mut blocks = Vec::with_capacity(counts.iter().product());
        for bz in 0..counts[2] {
            for by in 0..counts[1] {
                for bx in 0..counts[0] {
                    let origin = [bx * block, by * block, bz * block];
                    blocks.push(Block { index: blocks.len(), origin, center: origin.map(|o| o + block / 2) });
                }
            }
        }
        Ok(Self { block_size: block, counts, blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Partition a volume into `block`³ cells; trailing voxels are dropped.
pub fn partition(v: &Volume, block: usize) -> Result<PartitionGrid> {
    PartitionGrid::for_dims(v.dims(), block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_scale_count() {
        let g = PartitionGrid::for_dims([155, 185, 150], 5).unwrap();
        assert_eq!(g.len(), 34_410);
    }

    #[test]
    fn small_counts() {
        assert_eq!(partition(&Volume::zeros([10, 10, 10]), 5).unwrap().len(), 8);
        assert_eq!(partition(&Volume::zeros([11, 10, 10]), 5).unwrap().len(), 8);
    }

    #[test]
    fn oversized_block_rejected() {
        assert!(partition(&Volume::zeros([4, 10, 10]), 5).is_err());
        assert!(partition(&Volume::zeros([4, 10, 10]), 0).is_err());
    }

    #[test]
    fn order_is_x_fastest_and_centers_in_block() {
        let g = PartitionGrid::for_dims([10, 10, 5], 5).unwrap();
        let centers: Vec<_> = g.blocks.iter().map(|b| b.center).collect();
        assert_eq!(centers, vec![[2, 2, 2], [7, 2, 2], [2, 7, 2], [7, 7, 2]]);
    }

    proptest! {
        #[test]
        fn count_is_product_of_floors(nx in 1usize..40, ny in 1usize..40, nz in 1usize..40, b in 1usize..8) {
            let dims = [nx, ny, nz];
            match PartitionGrid::for_dims(dims, b) {
                Ok(g) => {
                    prop_assert_eq!(g.len(), (nx / b) * (ny / b) * (nz / b));
                    for blk in &g.blocks {
                        for a in 0..3 {
                            prop_assert!(blk.center[a] < dims[a]);
                            prop_assert!(blk.origin[a] + b <= dims[a]);
                        }
                    }
                }
                Err(_) => prop_assert!(dims.iter().any(|&d| d < b)),
            }
        }
    }
}
