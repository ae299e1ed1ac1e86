use std::path::Path;

use nalgebra::DMatrix;

use super::hotelling::{hotelling_t2, HotellingOptions};
use crate::error::{Error, Result};
use crate::texfeat::{feature_vector, FeatureVector, GlcmConfig, FEATURE_LEN};
use crate::volgrid::{block_cube, PartitionGrid, Volume};

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub glcm: GlcmConfig,
    pub hotelling: HotellingOptions,
    /// Worker threads for feature extraction; 0 uses the available cores.
    pub threads: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { glcm: GlcmConfig::default(), hotelling: HotellingOptions::default(), threads: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValueEntry {
    pub partition_index: usize,
    pub center: [usize; 3],
    pub t2: f64,
    pub p_value: f64,
}

/// Per-partition test results sorted by ascending p-value, ties by
/// partition index.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMap {
    pub entries: Vec<PValueEntry>,
}

impl PValueMap {
    pub fn from_entries(mut entries: Vec<PValueEntry>) -> Self {
        sort_entries(&mut entries);
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_p(&self) -> Option<f64> {
        self.entries.first().map(|e| e.p_value)
    }

    pub fn median_p(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        let n = self.entries.len();
        let mid = |i: usize| self.entries[i].p_value;
        Some(if n % 2 == 1 { mid(n / 2) } else { 0.5 * (mid(n / 2 - 1) + mid(n / 2)) })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["partition_index", "cx", "cy", "cz", "t2", "p"])?;
        for e in &self.entries {
            w.write_record([
                e.partition_index.to_string(),
                e.center[0].to_string(),
                e.center[1].to_string(),
                e.center[2].to_string(),
                e.t2.to_string(),
                e.p_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Data(format!("bad p-value map row {:?}", rec)))
            };
            entries.push(PValueEntry {
                partition_index: num(0)? as usize,
                center: [num(1)? as usize, num(2)? as usize, num(3)? as usize],
                t2: num(4)?,
                p_value: num(5)?,
            });
        }
        Ok(Self::from_entries(entries))
    }
}

pub(crate) fn sort_entries(entries: &mut [PValueEntry]) {
    entries.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then(a.partition_index.cmp(&b.partition_index)));
}

/// Feature vectors of every partition of one volume, in partition order.
pub fn partition_features(
    v: &Volume,
    template: &Volume,
    grid: &PartitionGrid,
    cfg: &GlcmConfig,
) -> Result<Vec<FeatureVector>> {
    if v.dims() != template.dims() {
        return Err(Error::ShapeMismatch(format!(
            "volume dims {:?} differ from template dims {:?}",
            v.dims(),
            template.dims()
        )));
    }
    let range = template.dynamic_range();
    grid.blocks
        .iter()
        .map(|b| {
            let c = block_cube(v, b.origin, grid.block_size)?;
            let r = block_cube(template, b.origin, grid.block_size)?;
            feature_vector(&c, &r, range, cfg)
        })
        .collect()
}

fn all_features(
    vols: &[&Volume],
    template: &Volume,
    grid: &PartitionGrid,
    cfg: &MapConfig,
) -> Result<Vec<Vec<FeatureVector>>> {
    let threads = match cfg.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(vols.len().max(1));
    if threads <= 1 {
        return vols.iter().map(|v| partition_features(v, template, grid, &cfg.glcm)).collect();
    }
    let chunk = vols.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = vols
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter().map(|v| partition_features(v, template, grid, &cfg.glcm)).collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(vols.len());
        for h in handles {
            out.extend(h.join().expect("feature worker panicked")?);
        }
        Ok(out)
    })
}

/// Run the two-sample test on every partition of the grid.
///
/// `group_a` and `group_b` must share the template's dimensions. Zero-variance
/// partitions (background) get `p = 1`.
pub fn build_pvalue_map(
    group_a: &[&Volume],
    group_b: &[&Volume],
    template: &Volume,
    grid: &PartitionGrid,
    cfg: &MapConfig,
) -> Result<PValueMap> {
    cfg.glcm.validate()?;
    let (na, nb) = (group_a.len(), group_b.len());
    let df = na as i64 + nb as i64 - FEATURE_LEN as i64 - 1;
    if df < 1 || na < 2 || nb < 2 {
        return Err(Error::InsufficientSamples { df, needed_total: FEATURE_LEN + 2 });
    }
    let fa = all_features(group_a, template, grid, cfg)?;
    let fb = all_features(group_b, template, grid, cfg)?;
    let matrix =
        |feats: &[Vec<FeatureVector>], j: usize| DMatrix::from_fn(feats.len(), FEATURE_LEN, |i, k| feats[i][j].0[k]);
    let mut entries = Vec::with_capacity(grid.len());
    for (j, block) in grid.blocks.iter().enumerate() {
        let r = hotelling_t2(&matrix(&fa, j), &matrix(&fb, j), cfg.hotelling)?;
        entries.push(PValueEntry { partition_index: block.index, center: block.center, t2: r.t2, p_value: r.p_value });
    }
    Ok(PValueMap::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(seed: u64, dims: [usize; 3]) -> Volume {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let n = dims.iter().product();
        Volume::new(dims, [1.0; 3], (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identical_cohorts_give_unit_p() {
        let dims = [10, 10, 5];
        let vols: Vec<Volume> = (0..17).map(|s| noisy(s, dims)).collect();
        let refs: Vec<&Volume> = vols.iter().collect();
        let grid = PartitionGrid::for_dims(dims, 5).unwrap();
        let map = build_pvalue_map(&refs, &refs, &vols[0], &grid, &MapConfig::default()).unwrap();
        assert_eq!(map.len(), 4);
        for e in &map.entries {
            assert!((e.p_value - 1.0).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn df_violation_names_needed_total() {
        let dims = [5, 5, 5];
        let vols: Vec<Volume> = (0..10).map(|s| noisy(s, dims)).collect();
        let refs: Vec<&Volume> = vols.iter().collect();
        let grid = PartitionGrid::for_dims(dims, 5).unwrap();
        let err = build_pvalue_map(&refs[..5], &refs[5..], &vols[0], &grid, &MapConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { needed_total: 31, .. }), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let map = PValueMap::from_entries(vec![
            PValueEntry { partition_index: 1, center: [2, 7, 2], t2: 3.5, p_value: 0.25 },
            PValueEntry { partition_index: 0, center: [2, 2, 2], t2: 9.0, p_value: 0.01 },
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        map.write_csv(&path).unwrap();
        assert_eq!(PValueMap::read_csv(&path).unwrap(), map);
        assert_eq!(map.entries[0].partition_index, 0);
    }
}
