//! Choice data: ingestion from delimited text, subsampling, train/test
//! splitting, and train-only standardization.

mod schema;
mod summary;

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::engine::ChoiceBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use schema::{hex_digest, AttributeSpec, FeatureSchema, Variable};
pub use summary::{summarize, Summary, SummaryRow};

/// Per-column statistics used for z-scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub mean: f64,
    /// Population standard deviation; zero marks a constant column.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Z-score transform fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub stats: Vec<ColumnStats>,
}

impl Standardizer {
    pub fn fit(ds: &ChoiceDataset) -> Self {
        let n = ds.len() as f64;
        let stats = ds
            .columns
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let vals = ds.rows.iter().map(|r| r[c]);
                let mean = vals.clone().sum::<f64>() / n;
                let var = vals.clone().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let (min, max) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                ColumnStats {
                    column: name.clone(),
                    mean,
                    std: if max > min { var.sqrt() } else { 0.0 },
                    min,
                    max,
                }
            })
            .collect();
        Self { stats }
    }

    /// Constant columns pass through unchanged.
    pub fn apply(&self, c: usize, raw: f64) -> f64 {
        let s = &self.stats[c];
        if s.std > 0.0 {
            (raw - s.mean) / s.std
        } else {
            raw
        }
    }

    /// `d(standardized)/d(raw)` for column `c`.
    pub fn slope(&self, c: usize) -> f64 {
        let s = &self.stats[c];
        if s.std > 0.0 {
            1.0 / s.std
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based record number, header excluded.
    pub record: usize,
    pub column: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_read: usize,
    pub accepted: usize,
    /// Rows with an empty required field.
    pub dropped_missing: usize,
    /// Rows with an unparseable number or unknown choice.
    pub rejected: Vec<RejectedRow>,
}

/// Row count, seed, schema hash, and content hash of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub seed: Option<u64>,
    pub schema_hash: String,
    pub content_hash: String,
}

/// Raw observations plus an optional shared standardizer.
#[derive(Clone, Debug)]
pub struct ChoiceDataset {
    schema: Arc<FeatureSchema>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    choices: Vec<usize>,
    standardizer: Option<Arc<Standardizer>>,
    seed: Option<u64>,
}

/// One observation's per-alternative feature vectors and chosen index.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceObservation {
    pub x: Vec<Vec<f64>>,
    pub y: usize,
}

impl ChoiceDataset {
    /// Builds a dataset from raw rows in [`FeatureSchema::columns`] order.
    pub fn from_rows(schema: FeatureSchema, rows: Vec<Vec<f64>>, choices: Vec<usize>) -> Result<Self> {
        schema.validate()?;
        let columns = schema.columns();
        if rows.len() != choices.len() {
            return Err(Error::shape("dataset", &[rows.len()], &[choices.len()]));
        }
        for r in &rows {
            if r.len() != columns.len() {
                return Err(Error::shape("dataset-row", &[columns.len()], &[r.len()]));
            }
        }
        if let Some(&y) = choices.iter().find(|&&y| y >= schema.num_alternatives()) {
            return Err(Error::usage(format!("choice {y} out of range")));
        }
        Ok(Self {
            schema: Arc::new(schema),
            columns,
            rows,
            choices,
            standardizer: None,
            seed: None,
        })
    }

    /// Reads a comma-delimited file with a header row.
    pub fn ingest(path: &Path, schema: &FeatureSchema) -> Result<(Self, IngestReport)> {
        let file = std::fs::File::open(path)?;
        Self::ingest_reader(file, schema)
    }

    pub fn ingest_reader<R: std::io::Read>(reader: R, schema: &FeatureSchema) -> Result<(Self, IngestReport)> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        let find = |name: &str| {
            header.iter().position(|h| h.trim() == name).ok_or_else(|| {
                Error::config(format!("column `{name}` not found in header"))
            })
        };
        let columns = schema.columns();
        let positions = columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
        let choice_pos = find(&schema.choice_column)?;

        let mut report = IngestReport::default();
        let mut rows = Vec::new();
        let mut choices = Vec::new();
        'records: for (k, record) in rdr.records().enumerate() {
            let record = record?;
            report.records_read += 1;
            let cell = |p: usize| record.get(p).map(str::trim).unwrap_or("");
            if positions.iter().chain([&choice_pos]).any(|&p| cell(p).is_empty()) {
                report.dropped_missing += 1;
                continue;
            }
            let mut row = Vec::with_capacity(columns.len());
            for (name, &p) in columns.iter().zip(&positions) {
                match cell(p).parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => {
                        report.rejected.push(RejectedRow {
                            record: k + 1,
                            column: name.clone(),
                            value: cell(p).to_string(),
                        });
                        continue 'records;
                    }
                }
            }
            let Some(y) = schema.parse_choice(cell(choice_pos)) else {
                report.rejected.push(RejectedRow {
                    record: k + 1,
                    column: schema.choice_column.clone(),
                    value: cell(choice_pos).to_string(),
                });
                continue;
            };
            rows.push(row);
            choices.push(y);
        }
        report.accepted = rows.len();
        if !report.rejected.is_empty() {
            log::warn!("ingest rejected {} rows", report.rejected.len());
        }
        Ok((Self::from_rows(schema.clone(), rows, choices)?, report))
    }

    /// Writes raw values and choice indices in a form [`Self::ingest`] reads back.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.columns.clone();
        header.push(self.schema.choice_column.clone());
        w.write_record(&header)?;
        for (row, y) in self.rows.iter().zip(&self.choices) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn raw_rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_deref()
    }

    /// Fraction of observations choosing each alternative.
    pub fn choice_shares(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.schema.num_alternatives()];
        for &y in &self.choices {
            counts[y] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / self.len().max(1) as f64)
            .collect()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            choices: indices.iter().map(|&i| self.choices[i]).collect(),
            standardizer: self.standardizer.clone(),
            seed: self.seed,
        }
    }

    /// Uniform sample of `n` rows without replacement, original order kept.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(Error::usage(format!(
                "cannot subsample {n} rows from a dataset of {}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        let mut out = self.subset(&idx);
        out.seed = Some(seed);
        Ok(out)
    }

    /// Random train/test partition; the standardizer is fitted on train only
    /// and shared by both halves.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::usage(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n = self.len();
        let n_train = (train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::usage(format!(
                "fraction {train_fraction} of {n} rows leaves an empty split"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (a, b) = idx.split_at(n_train);
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        let mut train = self.subset(&a);
        let mut test = self.subset(&b);
        train.seed = Some(seed);
        test.seed = Some(seed);
        let st = Arc::new(Standardizer::fit(&train));
        train.standardizer = Some(st.clone());
        test.standardizer = Some(st);
        Ok((train, test))
    }

    /// Attaches an already-fitted standardizer, e.g. the training split's.
    pub fn with_standardizer(mut self, st: Arc<Standardizer>) -> Result<Self> {
        if st.stats.len() != self.columns.len()
            || st.stats.iter().zip(&self.columns).any(|(s, c)| &s.column != c)
        {
            return Err(Error::config("standardizer columns do not match dataset"));
        }
        self.standardizer = Some(st);
        Ok(self)
    }

    pub fn shared_standardizer(&self) -> Option<Arc<Standardizer>> {
        self.standardizer.clone()
    }

    /// Per-alternative feature vectors for a raw row.
    pub fn features_of(&self, raw: &[f64]) -> Vec<Vec<f64>> {
        let n_attr = self.schema.alternative_attributes.len();
        let n_alt = self.schema.num_alternatives();
        let value = |c: usize| match &self.standardizer {
            Some(st) => st.apply(c, raw[c]),
            None => raw[c],
        };
        let mut x = vec![vec![0.0; self.schema.feature_dim()]; n_alt];
        for (c, v) in self.schema.variables().iter().enumerate() {
            x[v.alternative][v.slot] = value(c);
        }
        let first_ind = self.columns.len() - self.schema.individual_attributes.len();
        for (k, c) in (first_ind..self.columns.len()).enumerate() {
            let z = value(c);
            for xi in x.iter_mut() {
                xi[n_attr + k] = z;
            }
        }
        x
    }

    pub fn observation(&self, n: usize) -> ChoiceObservation {
        ChoiceObservation {
            x: self.features_of(&self.rows[n]),
            y: self.choices[n],
        }
    }

    /// Feature batch built from arbitrary raw rows (labels taken from `labels`).
    pub fn batch_from_raw<T: Scalar>(&self, raw: &[Vec<f64>], labels: &[usize]) -> Result<ChoiceBatch<T>> {
        let n_alt = self.schema.num_alternatives();
        let d = self.schema.feature_dim();
        if raw.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let mut mats: Vec<Vec<T>> = vec![Vec::with_capacity(raw.len() * d); n_alt];
        for row in raw {
            for (alt, x) in self.features_of(row).into_iter().enumerate() {
                mats[alt].extend(x.into_iter().map(T::of));
            }
        }
        let features = mats
            .into_iter()
            .map(|m| Tensor::matrix(raw.len(), d, m))
            .collect::<Result<Vec<_>>>()?;
        ChoiceBatch::new(features, labels.to_vec())
    }

    /// Whole dataset as one feature batch.
    pub fn batch<T: Scalar>(&self) -> Result<ChoiceBatch<T>> {
        self.batch_from_raw(&self.rows, &self.choices)
    }

    /// Per-column raw means.
    pub fn raw_means(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        (0..self.columns.len())
            .map(|c| self.rows.iter().map(|r| r[c]).sum::<f64>() / n)
            .collect()
    }

    pub fn fingerprint(&self) -> DatasetFingerprint {
        let mut bytes = Vec::with_capacity(self.len() * (self.columns.len() + 1) * 8);
        for (row, y) in self.rows.iter().zip(&self.choices) {
            for v in row {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.extend_from_slice(&(*y as u64).to_le_bytes());
        }
        DatasetFingerprint {
            rows: self.len(),
            seed: self.seed,
            schema_hash: self.schema.hash(),
            content_hash: hex_digest(&bytes),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "driving_time,transit_time,biking_time,walking_time,driving_cost,transit_cost,age,male,vehicles,household_size,mode";

    fn csv_text(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    #[test]
    fn ingest_well_formed() {
        let text = csv_text(&[
            "10,20,30,40,1.5,2.0,30,1,1,2,drive",
            "12,25,31,60,2.5,1.0,45,0,2,4,pt",
            "5,15,12,20,0.5,1.5,22,1,0,1,walk",
        ]);
        let (ds, rep) = ChoiceDataset::ingest_reader(text.as_bytes(), &FeatureSchema::travel_mode_default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(rep.accepted, 3);
        assert_eq!(ds.choices(), &[0, 1, 3]);
        let obs = ds.observation(0);
        assert_eq!(obs.x[0], vec![10.0, 1.5, 30.0, 1.0, 1.0, 2.0]);
        assert_eq!(obs.x[2], vec![30.0, 0.0, 30.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn ingest_rejects_bad_numeric_and_drops_missing() {
        let text = csv_text(&[
            "10,20,30,40,1.5,2.0,30,1,1,2,drive",
            "12,abc,31,60,2.5,1.0,45,0,2,4,pt",
            "5,15,12,20,0.5,1.5,22,1,0,1,walk",
            "5,15,12,,0.5,1.5,22,1,0,1,walk",
        ]);
        let (ds, rep) = ChoiceDataset::ingest_reader(text.as_bytes(), &FeatureSchema::travel_mode_default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(rep.rejected[0].record, 2);
        assert_eq!(rep.rejected[0].column, "transit_time");
        assert_eq!(rep.dropped_missing, 1);
    }

    #[test]
    fn unknown_column_is_config_error() {
        let text = "a,b\n1,2";
        let err = ChoiceDataset::ingest_reader(text.as_bytes(), &FeatureSchema::travel_mode_default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    fn synthetic(n: usize) -> ChoiceDataset {
        let rows = (0..n)
            .map(|i| {
                let f = i as f64;
                vec![f, 2.0 * f, f % 7.0, f % 5.0, 0.5 * f, 3.0, f % 11.0, (i % 2) as f64, 1.0, f % 3.0]
            })
            .collect();
        let choices = (0..n).map(|i| i % 4).collect();
        ChoiceDataset::from_rows(FeatureSchema::travel_mode_default(), rows, choices).unwrap()
    }

    #[test]
    fn subsample_is_seeded() {
        let ds = synthetic(100);
        let a = ds.subsample(30, 5).unwrap();
        let b = ds.subsample(30, 5).unwrap();
        assert_eq!(a.raw_rows(), b.raw_rows());
        assert_eq!(a.len(), 30);
        assert_eq!(ds.subsample(100, 1).unwrap().raw_rows(), ds.raw_rows());
        assert!(matches!(ds.subsample(101, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn split_sizes() {
        let ds = synthetic(8000);
        let (tr, te) = ds.split(0.8, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (6400, 1600));
        let small = synthetic(10);
        let (tr, te) = small.split(0.9, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (9, 1));
        assert!(small.split(0.01, 1).is_err());
        assert!(small.split(1.0, 1).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let ds = synthetic(200);
        let (tr, te) = ds.split(0.7, 9).unwrap();
        let mut all: Vec<f64> = tr.raw_rows().iter().chain(te.raw_rows()).map(|r| r[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..200).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn standardized_training_features() {
        let ds = synthetic(500);
        let (tr, _) = ds.split(0.8, 2).unwrap();
        let st = tr.standardizer().unwrap();
        for c in 0..tr.columns().len() {
            let z: Vec<f64> = tr.raw_rows().iter().map(|r| st.apply(c, r[c])).collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if st.stats[c].std == 0.0 {
                continue;
            }
            assert!(mean.abs() < 1e-9, "{}", tr.columns()[c]);
            assert!((sd - 1.0).abs() < 1e-9);
        }
        // structural zeros stay zero
        let obs = tr.observation(0);
        assert_eq!(obs.x[2][1], 0.0);
        assert_eq!(obs.x[3][1], 0.0);
    }

    #[test]
    fn csv_roundtrip() {
        let ds = synthetic(50);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path).unwrap();
        let (back, rep) = ChoiceDataset::ingest(&path, ds.schema()).unwrap();
        assert_eq!(rep.rejected.len(), 0);
        assert_eq!(back.raw_rows(), ds.raw_rows());
        assert_eq!(back.choices(), ds.choices());
        assert_eq!(back.fingerprint(), ds.fingerprint());
    }

    #[test]
    fn shares() {
        let ds = synthetic(8);
        assert_eq!(ds.choice_shares(), vec![0.25; 4]);
    }
}
