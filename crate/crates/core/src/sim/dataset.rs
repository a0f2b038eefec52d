//! Synthetic job histories drawn from a simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ExecError, Executor, JobContext};
use crate::space::SearchSpace;
use crate::store::JobRecord;

/// How launch timestamps relate to job configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum TimestampPolicy {
    /// Launch order independent of the configuration.
    Uniform,
    /// Smaller jobs tend to launch earlier. `jitter` is the standard
    /// deviation of Gaussian noise added to the normalized log2 scale.
    ScaleCorrelated { jitter: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub count: usize,
    pub seed: u64,
    pub policy: TimestampPolicy,
    /// Probability of keeping a sampled configuration that fails.
    pub failure_rate: f64,
    /// Timestamps are spread over `[0, horizon]`.
    pub horizon: f64,
    pub round: String,
    /// Rejection-sampling attempts allowed per requested record.
    pub attempts_per_record: usize,
}

impl DatasetOptions {
    pub fn new(count: usize, seed: u64) -> Self {
        DatasetOptions {
            count,
            seed,
            policy: TimestampPolicy::ScaleCorrelated { jitter: 0.15 },
            failure_rate: 0.0,
            horizon: 180.0,
            round: "dataset".into(),
            attempts_per_record: 1000,
        }
    }
}

/// Samples configurations uniformly, keeps all completed ones and a
/// `failure_rate` share of failures, then assigns launch timestamps and runs
/// each job at its timestamp. Records come back sorted by timestamp.
pub fn generate_dataset(
    space: &SearchSpace,
    executor: &dyn Executor,
    opts: &DatasetOptions,
) -> Result<Vec<JobRecord>, ExecError> {
    if opts.count == 0 {
        return Err(ExecError::InvalidParams("count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&opts.failure_rate) {
        return Err(ExecError::InvalidParams("failure_rate must be in [0, 1]".into()));
    }
    if !(opts.horizon.is_finite() && opts.horizon > 0.0) {
        return Err(ExecError::InvalidParams("horizon must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probe = JobContext::default();
    let max_attempts = opts.count.saturating_mul(opts.attempts_per_record);
    let mut picked = Vec::with_capacity(opts.count);
    let mut attempts = 0;
    while picked.len() < opts.count {
        if attempts == max_attempts {
            return Err(ExecError::Exhausted {
                wanted: opts.count,
                attempts,
            });
        }
        attempts += 1;
        let cfg = space.sample_with(&mut rng);
        let out = executor.execute(&cfg, &probe)?;
        let keep = out.metric.is_some() || rng.gen::<f64>() < opts.failure_rate;
        if keep {
            picked.push((cfg, out.scale));
        }
    }

    let mut times: Vec<f64> = (0..opts.count).map(|_| rng.gen::<f64>() * opts.horizon).collect();
    times.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = (0..opts.count).collect();
    if let TimestampPolicy::ScaleCorrelated { jitter } = opts.policy {
        let max_log = picked
            .iter()
            .filter_map(|(_, s)| s.map(|s| (s.max(1) as f64).log2()))
            .fold(1.0f64, f64::max);
        let keys: Vec<f64> = picked
            .iter()
            .map(|(_, s)| {
                let base = s.map_or(0.0, |s| (s.max(1) as f64).log2() / max_log);
                base + jitter * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    }

    let mut records = Vec::with_capacity(opts.count);
    for (slot, &i) in order.iter().enumerate() {
        let (cfg, _) = &picked[i];
        let ts = times[slot];
        let out = executor.execute(cfg, &JobContext { timestamp: ts })?;
        records.push(out.into_record(cfg.clone(), ts, &opts.round));
    }
    Ok(records)
}
