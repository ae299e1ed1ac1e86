use std::path::Path;

use super::map::{sort_entries, PValueMap};
use crate::error::{Error, Result};
use crate::volgrid::{extract_cube_padded, Cube, Volume};

pub const DEFAULT_MIN_DIST: f64 = 15.0;
pub const DEFAULT_TOP_K: usize = 50;
pub const DEFAULT_JITTER_STEP: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub center: [i64; 3],
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub landmarks: Vec<Landmark>,
    pub min_dist: f64,
    pub top_k: usize,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn centers(&self) -> Vec<[i64; 3]> {
        self.landmarks.iter().map(|l| l.center).collect()
    }

    /// The `n` most significant landmarks.
    pub fn truncated(&self, n: usize) -> Self {
        Self { landmarks: self.landmarks.iter().take(n).copied().collect(), ..self.clone() }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rank", "lx", "ly", "lz", "p"])?;
        for (rank, l) in self.landmarks.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                l.center[0].to_string(),
                l.center[1].to_string(),
                l.center[2].to_string(),
                l.p_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, min_dist: f64, top_k: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut landmarks = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::Data(format!("bad landmark row {rec:?}"));
            let int = |i: usize| rec.get(i).and_then(|s| s.parse::<i64>().ok()).ok_or_else(bad);
            let p = rec.get(4).and_then(|s| s.parse::<f64>().ok()).ok_or_else(bad)?;
            landmarks.push(Landmark { center: [int(1)?, int(2)?, int(3)?], p_value: p });
        }
        Ok(Self { landmarks, min_dist, top_k })
    }
}

pub fn distance(a: [i64; 3], b: [i64; 3]) -> f64 {
    let d2: i64 = (0..3).map(|i| (a[i] - b[i]).pow(2)).sum();
    (d2 as f64).sqrt()
}

/// Greedy scan in ascending p (ties by partition index): accept a candidate
/// when it lies at least `min_dist` from every accepted landmark, stopping at
/// `top_k`. The flag is set when fewer than `top_k` could be accepted.
pub fn select_landmarks(map: &PValueMap, min_dist: f64, top_k: usize) -> (LandmarkSet, bool) {
    let mut entries = map.entries.clone();
    sort_entries(&mut entries);
    let mut landmarks: Vec<Landmark> = Vec::with_capacity(top_k);
    for e in &entries {
        if landmarks.len() == top_k {
            break;
        }
        let c = e.center.map(|v| v as i64);
        if landmarks.iter().all(|l| distance(l.center, c) >= min_dist) {
            landmarks.push(Landmark { center: c, p_value: e.p_value });
        }
    }
    let short = landmarks.len() < top_k;
    if short {
        log::warn!("only {} of {top_k} landmarks satisfy the distance filter", landmarks.len());
    }
    (LandmarkSet { landmarks, min_dist, top_k }, short)
}

/// The 27 centers `center + (i, j, k)·step` for `i, j, k ∈ {-1, 0, 1}`,
/// x-fastest; index 13 is the landmark itself.
pub fn jitter_centers(center: [i64; 3], step: i64) -> [[i64; 3]; 27] {
    let mut out = [[0; 3]; 27];
    let mut n = 0;
    for k in -1..=1 {
        for j in -1..=1 {
            for i in -1..=1 {
                out[n] = [center[0] + i * step, center[1] + j * step, center[2] + k * step];
                n += 1;
            }
        }
    }
    out
}

/// One sample: `L` cubes in landmark order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTuple {
    pub subject: usize,
    /// Jitter offset index (13 for the unshifted tuple).
    pub jitter: usize,
    pub cubes: Vec<Cube>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub size: usize,
    pub n_landmarks: usize,
    pub tuples: Vec<PatchTuple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOptions {
    pub size: usize,
    pub augment: bool,
    pub jitter_step: i64,
}

impl Default for PatchOptions {
    fn default() -> Self {
        Self { size: 19, augment: false, jitter_step: DEFAULT_JITTER_STEP }
    }
}

/// Patch tuples for each volume. With augmentation every subject yields 27
/// tuples, each displacing all landmarks by the same offset.
pub fn extract_patchset(volumes: &[&Volume], landmarks: &[[i64; 3]], opts: PatchOptions) -> Result<PatchSet> {
    if opts.size % 2 == 0 || opts.size == 0 {
        return Err(Error::InvalidArgument(format!("patch size must be odd, got {}", opts.size)));
    }
    if landmarks.is_empty() {
        return Err(Error::InvalidArgument("no landmarks".into()));
    }
    let mut tuples = Vec::new();
    for (s, v) in volumes.iter().enumerate() {
        if let Some(l) = landmarks.iter().find(|l| !v.contains(**l)) {
            return Err(Error::InvalidArgument(format!("landmark {l:?} outside volume {:?}", v.dims())));
        }
        let offsets: Vec<usize> = if opts.augment { (0..27).collect() } else { vec![13] };
        for j in offsets {
            let cubes = landmarks
                .iter()
                .map(|&l| extract_cube_padded(v, jitter_centers(l, opts.jitter_step)[j], opts.size))
                .collect();
            tuples.push(PatchTuple { subject: s, jitter: j, cubes });
        }
    }
    Ok(PatchSet { size: opts.size, n_landmarks: landmarks.len(), tuples })
}

#[cfg(test)]
mod tests {
    use super::super::map::PValueEntry;
    use super::*;
    use crate::volgrid::extract_cube;
    use proptest::prelude::*;

    fn entry(i: usize, c: [usize; 3], p: f64) -> PValueEntry {
        PValueEntry { partition_index: i, center: c, t2: 0.0, p_value: p }
    }

    #[test]
    fn just_under_min_dist_is_rejected() {
        // 14.9 apart is not on the integer grid; use the squared-distance boundary
        let map = PValueMap::from_entries(vec![entry(0, [0, 0, 0], 0.01), entry(1, [14, 0, 0], 0.02)]);
        let (set, short) = select_landmarks(&map, 14.9, 2);
        assert_eq!(set.len(), 1);
        assert!(short);
        let map = PValueMap::from_entries(vec![entry(0, [0, 0, 0], 0.01), entry(1, [15, 0, 0], 0.02)]);
        assert_eq!(select_landmarks(&map, 15.0, 2).0.len(), 2);
    }

    #[test]
    fn jitter_product() {
        let j = jitter_centers([10, 10, 10], 3);
        assert_eq!(j.len(), 27);
        assert!(j.contains(&[7, 7, 7]) && j.contains(&[13, 13, 13]));
        assert_eq!(j[13], [10, 10, 10]);
        let mut uniq = j.to_vec();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 27);
        assert!(jitter_centers([4, 5, 6], 0).iter().all(|&c| c == [4, 5, 6]));
    }

    #[test]
    fn patchset_counts_and_content() {
        let dims = [30, 30, 30];
        let vols: Vec<Volume> = (0..3)
            .map(|s| Volume::new(dims, [1.0; 3], (0..27_000).map(|i| ((i * (s + 3)) % 101) as f32).collect()).unwrap())
            .collect();
        let refs: Vec<&Volume> = vols.iter().collect();
        let lms = [[15, 15, 15], [2, 3, 28]];
        let plain = extract_patchset(&refs, &lms, PatchOptions { size: 9, ..Default::default() }).unwrap();
        assert_eq!(plain.tuples.len(), 3);
        for t in &plain.tuples {
            for (j, c) in t.cubes.iter().enumerate() {
                assert_eq!(c, &extract_cube(refs[t.subject], lms[j], 9).unwrap());
            }
        }
        let aug = extract_patchset(&refs, &lms, PatchOptions { size: 9, augment: true, jitter_step: 3 }).unwrap();
        assert_eq!(aug.tuples.len(), 81);
        let t = &aug.tuples[0];
        assert_eq!(t.cubes[0], extract_cube(refs[0], [12, 12, 12], 9).unwrap());
        assert!(extract_patchset(&refs, &[[30, 0, 0]], PatchOptions::default()).is_err());
    }

    fn random_map(seed: u64, n: usize) -> PValueMap {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        PValueMap::from_entries(
            (0..n)
                .map(|i| {
                    let c = [rng.gen_range(0..40), rng.gen_range(0..40), rng.gen_range(0..40)];
                    // coarse p-values so ties occur
                    entry(i, c, rng.gen_range(0..20) as f64 / 20.0)
                })
                .collect(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn selection_respects_distance_and_order(seed in any::<u64>(), k in 1usize..20) {
            let map = random_map(seed, 120);
            let (set, _) = select_landmarks(&map, 15.0, k);
            prop_assert!(set.len() <= k);
            for w in set.landmarks.windows(2) {
                prop_assert!(w[0].p_value <= w[1].p_value);
            }
            for (i, a) in set.landmarks.iter().enumerate() {
                for b in &set.landmarks[i + 1..] {
                    prop_assert!(distance(a.center, b.center) >= 15.0);
                }
            }
        }

        #[test]
        fn selection_ignores_input_order(seed in any::<u64>()) {
            let map = random_map(seed, 80);
            let mut rev = map.clone();
            rev.entries.reverse();
            prop_assert_eq!(select_landmarks(&map, 15.0, 10), select_landmarks(&rev, 15.0, 10));
        }
    }
}
