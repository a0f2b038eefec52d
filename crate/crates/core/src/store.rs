//! Historical job data: an append-only line-delimited JSON log plus the
//! dataset splits and frontier curves computed from it.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::space::ConfigPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Completed,
    FailedOom,
    FailedInfra,
}

impl JobStatus {
    pub fn is_completed(self) -> bool {
        self == JobStatus::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub config: ConfigPoint,
    pub status: JobStatus,
    /// Aggregated throughput; present iff the job completed.
    pub metric: Option<f64>,
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<u64>,
    pub round: String,
    /// Predictor score at launch time, for jobs proposed by a searcher round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
}

impl JobRecord {
    pub fn completed_metric(&self) -> Option<f64> {
        if self.status.is_completed() {
            self.metric
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |why: &str| Err(StoreError::InvalidRecord(why.to_owned()));
        if !self.timestamp.is_finite() {
            return bad("timestamp must be finite");
        }
        match (self.status, self.metric) {
            (JobStatus::Completed, Some(m)) if m.is_finite() && m > 0.0 => Ok(()),
            (JobStatus::Completed, _) => bad("completed job needs a positive finite metric"),
            (_, Some(_)) => bad("failed job must not carry a metric"),
            (_, None) => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid job record: {0}")]
    InvalidRecord(String),
    #[error("timestamp {got} precedes the last stored timestamp {last}")]
    TimestampOrder { last: f64, got: f64 },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Append-only job history. The file holds one JSON record per line; a torn
/// final line (no trailing newline) is dropped on open.
#[derive(Debug, Default)]
pub struct JobStore {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<JobRecord>,
}

impl JobStore {
    pub fn in_memory() -> Self {
        JobStore::default()
    }

    /// Opens (creating if needed) a store file for appending.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let io_err = |source| StoreError::Io {
            path: path.display().to_string(),
            source,
        };
        let (records, good_len) = if path.exists() {
            let bytes = std::fs::read(path).map_err(io_err)?;
            let good = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            (parse_lines(path, &bytes[..good])?, good as u64)
        } else {
            (Vec::new(), 0)
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        if file.metadata().map_err(io_err)?.len() != good_len {
            file.set_len(good_len).map_err(io_err)?;
        }
        Ok(JobStore {
            path: Some(path.to_owned()),
            file: Some(file),
            records,
        })
    }

    /// Reads a store file without opening it for writing.
    pub fn load(path: impl AsRef<Path>) -> Result<Vec<JobRecord>, StoreError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let good = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        parse_lines(path, &bytes[..good])
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[JobRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn completed(&self) -> impl Iterator<Item = &JobRecord> {
        self.records.iter().filter(|r| r.status.is_completed())
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.records.last().map(|r| r.timestamp)
    }

    pub fn append(&mut self, record: JobRecord) -> Result<(), StoreError> {
        record.validate()?;
        if let Some(last) = self.last_timestamp() {
            if record.timestamp < last {
                return Err(StoreError::TimestampOrder {
                    last,
                    got: record.timestamp,
                });
            }
        }
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_string(&record)
                .map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
            line.push('\n');
            let path = self.path.as_ref().expect("file-backed store has a path");
            let io_err = |source| StoreError::Io {
                path: path.display().to_string(),
                source,
            };
            file.write_all(line.as_bytes()).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }
        self.records.push(record);
        Ok(())
    }
}

fn parse_lines(path: &Path, bytes: &[u8]) -> Result<Vec<JobRecord>, StoreError> {
    let corrupt = |line: usize, reason: String| StoreError::Corrupt {
        path: path.display().to_string(),
        line,
        reason,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| corrupt(0, e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r: JobRecord = serde_json::from_str(l).map_err(|e| corrupt(i + 1, e.to_string()))?;
            r.validate().map_err(|e| corrupt(i + 1, e.to_string()))?;
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    Random,
    Temporal,
    Scale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<JobRecord>,
    pub valid: Vec<JobRecord>,
    pub strategy: SplitStrategy,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("need at least 2 completed records, got {0}")]
    TooFew(usize),
    #[error("validation fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("record {0} has no scale tag")]
    MissingScale(usize),
    #[error("scale split leaves the {0} side empty")]
    EmptySide(&'static str),
}

fn completed_only(records: &[JobRecord]) -> Vec<JobRecord> {
    records.iter().filter(|r| r.status.is_completed()).cloned().collect()
}

fn valid_count(n: usize, fraction: f64) -> Result<usize, SplitError> {
    if n < 2 {
        return Err(SplitError::TooFew(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::BadFraction(fraction));
    }
    Ok(((n as f64 * fraction).round() as usize).clamp(1, n - 1))
}

/// Uniformly random partition of the completed records; both sides keep the
/// input order.
pub fn split_random(records: &[JobRecord], valid_fraction: f64, seed: u64) -> Result<DatasetSplit, SplitError> {
    let done = completed_only(records);
    let n_valid = valid_count(done.len(), valid_fraction)?;
    let mut idx: Vec<usize> = (0..done.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_valid = vec![false; done.len()];
    for &i in &idx[..n_valid] {
        in_valid[i] = true;
    }
    let (valid, train): (Vec<_>, Vec<_>) = done
        .into_iter()
        .zip(in_valid)
        .partition(|(_, v)| *v);
    Ok(DatasetSplit {
        train: train.into_iter().map(|(r, _)| r).collect(),
        valid: valid.into_iter().map(|(r, _)| r).collect(),
        strategy: SplitStrategy::Random,
    })
}

/// Oldest records train, newest validate. Equal timestamps keep input order.
pub fn split_temporal(records: &[JobRecord], valid_fraction: f64) -> Result<DatasetSplit, SplitError> {
    let mut done = completed_only(records);
    let n_valid = valid_count(done.len(), valid_fraction)?;
    done.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let valid = done.split_off(done.len() - n_valid);
    Ok(DatasetSplit {
        train: done,
        valid,
        strategy: SplitStrategy::Temporal,
    })
}

/// Train on `scale <= train_max`, validate on `scale >= valid_min`; records in
/// between are left out.
pub fn split_scale(records: &[JobRecord], train_max: u64, valid_min: u64) -> Result<DatasetSplit, SplitError> {
    let done = completed_only(records);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (i, r) in done.into_iter().enumerate() {
        let s = r.scale.ok_or(SplitError::MissingScale(i))?;
        if s <= train_max {
            train.push(r);
        } else if s >= valid_min {
            valid.push(r);
        }
    }
    if train.is_empty() {
        return Err(SplitError::EmptySide("train"));
    }
    if valid.is_empty() {
        return Err(SplitError::EmptySide("valid"));
    }
    Ok(DatasetSplit {
        train,
        valid,
        strategy: SplitStrategy::Scale,
    })
}

/// Running maximum: element `i` is the best metric among the first `i + 1`.
pub fn max_frontier(metrics: &[f64]) -> Vec<f64> {
    metrics
        .iter()
        .scan(f64::NEG_INFINITY, |best, &m| {
            *best = best.max(m);
            Some(*best)
        })
        .collect()
}

/// Frontier over completed records in launch order; failures are skipped.
pub fn record_frontier(records: &[JobRecord]) -> Vec<f64> {
    let metrics: Vec<f64> = records.iter().filter_map(JobRecord::completed_metric).collect();
    max_frontier(&metrics)
}

/// Elementwise mean of the frontiers of `permutations` random orderings of
/// `metrics`.
pub fn mean_permuted_frontier(metrics: &[f64], permutations: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; metrics.len()];
    let mut order = metrics.to_vec();
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        for (a, f) in acc.iter_mut().zip(max_frontier(&order)) {
            *a += f;
        }
    }
    acc.iter().map(|a| a / permutations.max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Value;
    use proptest::prelude::*;

    pub(crate) fn rec(metric: f64, ts: f64, scale: u64) -> JobRecord {
        JobRecord {
            config: ConfigPoint::new(vec![("x".into(), Value::Int(scale as i64))]),
            status: JobStatus::Completed,
            metric: Some(metric),
            timestamp: ts,
            scale: Some(scale),
            round: "random".into(),
            predicted: None,
        }
    }

    #[test]
    fn append_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.jsonl");
        let mut store = JobStore::open(&path).unwrap();
        store.append(rec(3.5, 0.0, 8)).unwrap();
        let mut failed = rec(1.0, 1.0, 8);
        failed.status = JobStatus::FailedOom;
        assert!(matches!(store.append(failed.clone()), Err(StoreError::InvalidRecord(_))));
        failed.metric = None;
        store.append(failed).unwrap();
        assert!(matches!(store.append(rec(1.0, 0.5, 8)), Err(StoreError::TimestampOrder { .. })));
        let loaded = JobStore::load(&path).unwrap();
        assert_eq!(loaded, store.records());
        assert_eq!(loaded.len(), 2);
    }

    #[test]
    fn many_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let mut store = JobStore::open(&path).unwrap();
        for i in 0..568 {
            store.append(rec(1.0 + i as f64, i as f64, 8)).unwrap();
        }
        drop(store);
        assert_eq!(JobStore::load(&path).unwrap().len(), 568);
    }

    #[test]
    fn torn_final_line_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let mut store = JobStore::open(&path).unwrap();
        store.append(rec(2.0, 0.0, 8)).unwrap();
        store.append(rec(3.0, 1.0, 8)).unwrap();
        drop(store);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"config":{"x":1},"status":"comp"#).unwrap();
        drop(f);
        assert_eq!(JobStore::load(&path).unwrap().len(), 2);
        let mut reopened = JobStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        reopened.append(rec(4.0, 2.0, 8)).unwrap();
        drop(reopened);
        assert_eq!(JobStore::load(&path).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(JobStore::load(&path), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn random_split_sizes() {
        let records: Vec<JobRecord> = (0..568).map(|i| rec(1.0 + i as f64, i as f64, 8)).collect();
        let s = split_random(&records, 145.0 / 568.0, 3).unwrap();
        assert_eq!((s.train.len(), s.valid.len()), (423, 145));
        assert_eq!(s, split_random(&records, 145.0 / 568.0, 3).unwrap());
        let two = split_random(&records[..2], 0.5, 0).unwrap();
        assert_eq!((two.train.len(), two.valid.len()), (1, 1));
        assert_eq!(split_random(&records[..1], 0.5, 0), Err(SplitError::TooFew(1)));
    }

    #[test]
    fn temporal_split() {
        let records: Vec<JobRecord> = (1..=10).rev().map(|i| rec(i as f64, i as f64, 8)).collect();
        let s = split_temporal(&records, 0.3).unwrap();
        let ts = |v: &[JobRecord]| v.iter().map(|r| r.timestamp).collect::<Vec<_>>();
        assert_eq!(ts(&s.train), (1..=7).map(f64::from).collect::<Vec<_>>());
        assert_eq!(ts(&s.valid), vec![8.0, 9.0, 10.0]);
        let flat: Vec<JobRecord> = (1..=10).map(|i| rec(i as f64, 0.0, 8)).collect();
        let s = split_temporal(&flat, 0.3).unwrap();
        assert_eq!(s.valid.iter().map(|r| r.metric.unwrap()).collect::<Vec<_>>(), vec![8.0, 9.0, 10.0]);
        let many: Vec<JobRecord> = (0..568).map(|i| rec(1.0, i as f64, 8)).collect();
        let s = split_temporal(&many, 145.0 / 568.0).unwrap();
        assert_eq!(s.train.len(), 423);
        assert!(s.train.iter().all(|r| r.timestamp < 423.0));
    }

    #[test]
    fn scale_split() {
        let records: Vec<JobRecord> = [8, 1024, 3072, 3500, 4096, 16384]
            .iter()
            .enumerate()
            .map(|(i, &s)| rec(1.0, i as f64, s))
            .collect();
        let s = split_scale(&records, 3072, 4096).unwrap();
        let scales = |v: &[JobRecord]| v.iter().map(|r| r.scale.unwrap()).collect::<Vec<_>>();
        assert_eq!(scales(&s.train), vec![8, 1024, 3072]);
        assert_eq!(scales(&s.valid), vec![4096, 16384]);
        let small: Vec<JobRecord> = (0..5).map(|i| rec(1.0, i as f64, 8)).collect();
        assert_eq!(split_scale(&small, 3072, 4096), Err(SplitError::EmptySide("valid")));
    }

    #[test]
    fn frontier_examples() {
        assert_eq!(max_frontier(&[3.0, 1.0, 5.0, 4.0]), vec![3.0, 3.0, 5.0, 5.0]);
        assert_eq!(max_frontier(&[2.5]), vec![2.5]);
    }

    #[test]
    fn permuted_frontier_matches_direct_average() {
        let metrics = [4.0, 1.0, 7.0, 3.0, 3.0, 9.0, 2.0];
        let seed = 12;
        let mean = mean_permuted_frontier(&metrics, 100, seed);
        // replay the same permutations independently
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order = metrics.to_vec();
        let mut direct = vec![0.0; metrics.len()];
        for _ in 0..100 {
            order.shuffle(&mut rng);
            let mut best = f64::NEG_INFINITY;
            for (i, m) in order.iter().enumerate() {
                best = best.max(*m);
                direct[i] += best / 100.0;
            }
        }
        for (a, b) in mean.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(*mean.last().unwrap(), 9.0);
    }

    proptest! {
        #[test]
        fn frontier_is_monotone(m in prop::collection::vec(0.0f64..100.0, 1..50)) {
            let f = max_frontier(&m);
            prop_assert!(f.windows(2).all(|w| w[1] >= w[0]));
            prop_assert_eq!(*f.last().unwrap(), m.iter().cloned().fold(f64::MIN, f64::max));
        }

        #[test]
        fn splits_partition_completed_records(n in 2usize..80, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let records: Vec<JobRecord> = (0..n).map(|i| rec(1.0 + i as f64, (i / 3) as f64, 8)).collect();
            for s in [split_random(&records, frac, seed).unwrap(), split_temporal(&records, frac).unwrap()] {
                let mut seen: Vec<f64> = s.train.iter().chain(&s.valid).map(|r| r.metric.unwrap()).collect();
                seen.sort_by(f64::total_cmp);
                prop_assert_eq!(seen, (0..n).map(|i| 1.0 + i as f64).collect::<Vec<_>>());
            }
        }
    }
}
