//! Biomarker tables: kNN imputation of missing values and z-scoring.

use std::path::Path;

use crate::error::{Error, Result};

pub const BIOMARKER_FIELDS: [&str; 6] = ["age", "adas", "cdr_sb", "faq", "mmse", "npi_q"];

/// Age, ADAS, CDR-sb, FAQ, MMSE, NPI-Q; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct BiomarkerRecord(pub [Option<f64>; 6]);

impl BiomarkerRecord {
    pub fn is_complete(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    pub fn values(&self) -> Option<[f64; 6]> {
        let mut out = [0.0; 6];
        for (o, v) in out.iter_mut().zip(&self.0) {
            *o = (*v)?;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    pub ids: Vec<String>,
    pub records: Vec<BiomarkerRecord>,
}

/// Per-column mean and population std over observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl CohortTable {
    pub fn new(ids: Vec<String>, records: Vec<BiomarkerRecord>) -> Result<Self> {
        if ids.len() != records.len() {
            return Err(Error::ShapeMismatch(format!("{} ids for {} records", ids.len(), records.len())));
        }
        for (id, r) in ids.iter().zip(&records) {
            if r.0.iter().all(Option::is_none) {
                return Err(Error::Data(format!("record {id} has no observed biomarker")));
            }
            if r.0.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("record {id} has a non-finite biomarker")));
            }
        }
        Ok(Self { ids, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_stats(&self) -> ColumnStats {
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for c in 0..6 {
            let vals: Vec<f64> = self.records.iter().filter_map(|r| r.0[c]).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            mean[c] = m;
            std[c] = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64).sqrt();
        }
        ColumnStats { mean, std }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id"];
        header.extend(BIOMARKER_FIELDS);
        w.write_record(&header)?;
        for (id, r) in self.ids.iter().zip(&self.records) {
            let mut row = vec![id.clone()];
            row.extend(r.0.iter().map(|v| v.map_or_else(|| "NA".to_string(), |x| x.to_string())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fill every missing cell with the mean of that column over the `k`
/// nearest records that observe it.
///
/// Distances are Euclidean over z-scored columns observed in both records,
/// scaled by `sqrt(6 / shared)` so records with different missingness stay
/// comparable. Ties are broken by record order. Complete records are
/// returned unchanged.
pub fn knn_impute(table: &CohortTable, k: usize) -> Result<CohortTable> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    for (c, name) in BIOMARKER_FIELDS.iter().enumerate() {
        let observed = table.records.iter().filter(|r| r.0[c].is_some()).count();
        if observed < k {
            return Err(Error::Data(format!("column {name} has {observed} observed values, fewer than k = {k}")));
        }
    }
    let stats = table.column_stats();
    let z = |c: usize, v: f64| {
        if stats.std[c] > 0.0 {
            (v - stats.mean[c]) / stats.std[c]
        } else {
            0.0
        }
    };
    let mut out = table.clone();
    for (i, rec) in table.records.iter().enumerate() {
        if rec.is_complete() {
            continue;
        }
        let mut dists: Vec<(f64, usize)> = Vec::new();
        for (j, other) in table.records.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut sum = 0.0;
            let mut shared = 0;
            for c in 0..6 {
                if let (Some(a), Some(b)) = (rec.0[c], other.0[c]) {
                    let d = z(c, a) - z(c, b);
                    sum += d * d;
                    shared += 1;
                }
            }
            if shared > 0 {
                dists.push(((sum * 6.0 / shared as f64).sqrt(), j));
            }
        }
        if dists.is_empty() {
            return Err(Error::Data(format!(
                "record {} shares no observed column with any other record",
                table.ids[i]
            )));
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for c in 0..6 {
            if rec.0[c].is_some() {
                continue;
            }
            let neighbours: Vec<f64> = dists.iter().filter_map(|&(_, j)| table.records[j].0[c]).take(k).collect();
            if neighbours.is_empty() {
                return Err(Error::Data(format!(
                    "no comparable neighbour observes {} for record {}",
                    BIOMARKER_FIELDS[c], table.ids[i]
                )));
            }
            out.records[i].0[c] = Some(neighbours.iter().sum::<f64>() / neighbours.len() as f64);
        }
    }
    Ok(out)
}

/// Standardize complete records with statistics fitted elsewhere (the
/// training split); zero-variance columns map to 0.
pub fn zscore_with(values: &[[f64; 6]], stats: &ColumnStats) -> Vec<[f64; 6]> {
    values
        .iter()
        .map(|row| {
            let mut o = [0.0; 6];
            for c in 0..6 {
                o[c] = if stats.std[c] > 0.0 { (row[c] - stats.mean[c]) / stats.std[c] } else { 0.0 };
            }
            o
        })
        .collect()
}

/// Fit statistics on `values` and standardize them.
pub fn zscore(values: &[[f64; 6]]) -> (Vec<[f64; 6]>, ColumnStats) {
    let stats = fit_stats(values);
    (zscore_with(values, &stats), stats)
}

pub fn fit_stats(values: &[[f64; 6]]) -> ColumnStats {
    let n = values.len().max(1) as f64;
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for c in 0..6 {
        mean[c] = values.iter().map(|r| r[c]).sum::<f64>() / n;
        std[c] = (values.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt();
    }
    ColumnStats { mean, std }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(v: [Option<f64>; 6]) -> BiomarkerRecord {
        BiomarkerRecord(v)
    }

    fn table(records: Vec<BiomarkerRecord>) -> CohortTable {
        let ids = (0..records.len()).map(|i| format!("s{i}")).collect();
        CohortTable::new(ids, records).unwrap()
    }

    #[test]
    fn complete_table_is_unchanged() {
        let t = table(vec![
            rec([Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0), Some(6.0)]),
            rec([Some(2.0), Some(1.0), Some(3.5), Some(4.0), Some(5.5), Some(6.0)]),
        ]);
        assert_eq!(knn_impute(&t, 1).unwrap(), t);
    }

    #[test]
    fn missing_column_is_named() {
        let t = table(vec![
            rec([Some(1.0), None, Some(3.0), Some(4.0), Some(5.0), Some(6.0)]),
            rec([Some(2.0), None, Some(3.5), Some(4.0), Some(5.5), Some(6.0)]),
        ]);
        let err = knn_impute(&t, 1).unwrap_err().to_string();
        assert!(err.contains("adas"), "{err}");
    }

    #[test]
    fn empty_record_rejected() {
        assert!(CohortTable::new(vec!["a".into()], vec![rec([None; 6])]).is_err());
    }

    #[test]
    fn zscore_constant_column_is_zero() {
        let rows = vec![[1.0, 5.0, 0.0, 0.0, 0.0, 0.0], [3.0, 5.0, 0.0, 0.0, 0.0, 0.0]];
        let (z, _) = zscore(&rows);
        assert_eq!(z[0][1], 0.0);
        assert_eq!(z[0][0], -1.0);
        assert_eq!(z[1][0], 1.0);
    }

    #[test]
    fn zscore_of_standardized_column_is_identity() {
        let col = [-1.5, -0.5, 0.5, 1.5];
        let m = col.iter().sum::<f64>() / 4.0;
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 4.0).sqrt();
        let rows: Vec<[f64; 6]> = col.iter().map(|&v| [(v - m) / sd; 6]).collect();
        let (z, _) = zscore(&rows);
        for (a, b) in z.iter().zip(&rows) {
            for c in 0..6 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn train_stats_applied_to_test_split() {
        let train =
            vec![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [3.0, 2.0, 1.0, 0.0, 5.0, 7.0], [2.0, 8.0, 2.0, 1.0, 5.0, 9.0]];
        let test = vec![[10.0, -1.0, 0.5, 2.0, 4.0, 6.5]];
        let stats = fit_stats(&train);
        let z = zscore_with(&test, &stats);
        for c in 0..6 {
            let col: Vec<f64> = train.iter().map(|r| r[c]).collect();
            let m = col.iter().sum::<f64>() / 3.0;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 3.0).sqrt();
            let expect = if sd > 0.0 { (test[0][c] - m) / sd } else { 0.0 };
            assert!((z[0][c] - expect).abs() < 1e-12);
        }
    }

    fn random_table(seed: u64, n: usize, missing: f64) -> CohortTable {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut recs = Vec::new();
        for _ in 0..n {
            let mut v = [None; 6];
            for x in v.iter_mut() {
                if rng.gen::<f64>() >= missing {
                    *x = Some(rng.gen_range(0.0..30.0));
                }
            }
            if v.iter().all(Option::is_none) {
                v[2] = Some(1.0);
            }
            recs.push(rec(v));
        }
        table(recs)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn imputation_is_idempotent_and_bounded(seed in any::<u64>()) {
            let t = random_table(seed, 50, 0.2);
            let once = knn_impute(&t, 6).unwrap();
            let twice = knn_impute(&once, 6).unwrap();
            prop_assert_eq!(&once, &twice);
            for c in 0..6 {
                let obs: Vec<f64> = t.records.iter().filter_map(|r| r.0[c]).collect();
                let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for r in &once.records {
                    let v = r.0[c].unwrap();
                    prop_assert!(v >= lo && v <= hi);
                }
            }
        }
    }
}
