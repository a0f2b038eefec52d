//! Analytic stand-ins for a training cluster.
//!
//! An [`Executor`] turns a configuration into a job outcome. Two simulated
//! executors ship: a layer-wise FSDP recommendation-training cost model and an
//! LLM throughput model. Both are fictional and parameter-driven; they only
//! reproduce the qualitative trade-offs (memory versus communication,
//! parallelism overheads, precision speedups, drift over time).

pub mod dataset;
pub mod fsdp;
pub mod llm;

use std::path::Path;

pub use dataset::{generate_dataset, DatasetOptions, TimestampPolicy};
pub use fsdp::{FsdpSim, FsdpSimParams, Sharding, StorageReservation};
pub use llm::{HardwareSpec, LlmSim, LlmSimParams};

use crate::space::{ConfigPoint, SearchSpace};
use crate::store::{JobRecord, JobStatus};

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("executor unavailable: {0}")]
    Unavailable(String),
    #[error("job crashed: {0}")]
    Crashed(String),
    #[error("config not understood by executor `{executor}`: {reason}")]
    InvalidConfig { executor: String, reason: String },
    #[error("invalid simulator parameters: {0}")]
    InvalidParams(String),
    #[error("unknown executor `{0}` (known: fsdp, llm)")]
    UnknownExecutor(String),
    #[error("space too large for exhaustive search: {0} configurations (limit {1})")]
    TooLarge(String, u64),
    #[error("could not generate {wanted} records after {attempts} attempts")]
    Exhausted { wanted: usize, attempts: usize },
    #[error("{path}: {reason}")]
    ParamsFile { path: String, reason: String },
}

/// Per-launch information handed to an executor.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JobContext {
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecOutcome {
    pub status: JobStatus,
    pub metric: Option<f64>,
    pub scale: Option<u64>,
}

impl ExecOutcome {
    pub fn completed(metric: f64, scale: Option<u64>) -> Self {
        ExecOutcome {
            status: JobStatus::Completed,
            metric: Some(metric),
            scale,
        }
    }

    pub fn failed(status: JobStatus, scale: Option<u64>) -> Self {
        ExecOutcome {
            status,
            metric: None,
            scale,
        }
    }

    pub fn into_record(self, config: ConfigPoint, timestamp: f64, round: &str) -> JobRecord {
        JobRecord {
            config,
            status: self.status,
            metric: self.metric,
            timestamp,
            scale: self.scale,
            round: round.to_owned(),
            predicted: None,
        }
    }
}

/// Launches a job for a configuration and reports its aggregated metric.
///
/// Infeasible configurations are failed outcomes, not errors; `Err` means the
/// executor itself could not run the job.
pub trait Executor: Send + Sync {
    fn name(&self) -> &str;

    fn execute(&self, config: &ConfigPoint, ctx: &JobContext) -> Result<ExecOutcome, ExecError>;

    /// The same executor with measurement noise disabled.
    fn without_noise(&self) -> Box<dyn Executor>;
}

/// Builds a simulator by name from an optional TOML parameter file.
pub fn executor_by_name(name: &str, params: Option<&Path>) -> Result<Box<dyn Executor>, ExecError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| ExecError::ParamsFile {
            path: p.display().to_string(),
            reason: e.to_string(),
        })
    };
    let parse_err = |p: &Path, e: toml::de::Error| ExecError::ParamsFile {
        path: p.display().to_string(),
        reason: e.to_string(),
    };
    match name {
        "fsdp" => {
            let params = match params {
                Some(p) => toml::from_str(&read(p)?).map_err(|e| parse_err(p, e))?,
                None => FsdpSimParams::default(),
            };
            Ok(Box::new(FsdpSim::new(params)?))
        }
        "llm" => {
            let params = match params {
                Some(p) => toml::from_str(&read(p)?).map_err(|e| parse_err(p, e))?,
                None => LlmSimParams::default(),
            };
            Ok(Box::new(LlmSim::new(params)?))
        }
        other => Err(ExecError::UnknownExecutor(other.to_owned())),
    }
}

/// Evaluates every configuration of `space` and returns the best completed
/// one. The first configuration in enumeration order wins ties.
pub fn exhaustive_optimum(
    space: &SearchSpace,
    executor: &dyn Executor,
    limit: u64,
) -> Result<Option<(ConfigPoint, f64)>, ExecError> {
    match space.cardinality_u64() {
        Some(n) if n <= limit => {}
        _ => return Err(ExecError::TooLarge(space.cardinality().to_string(), limit)),
    }
    let ctx = JobContext::default();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for idx in space.enumerate() {
        let cfg = space.config_from_indices(&idx);
        if let Some(m) = executor.execute(&cfg, &ctx)?.metric {
            if best.as_ref().is_none_or(|(_, b)| m > *b) {
                best = Some((idx, m));
            }
        }
    }
    Ok(best.map(|(idx, m)| (space.config_from_indices(&idx), m)))
}

/// Default cap for [`exhaustive_optimum`].
pub const EXHAUSTIVE_LIMIT: u64 = 100_000;

/// Multiplicative per-step noise seed for one configuration.
pub(crate) fn config_noise_seed(seed: u64, config: &ConfigPoint) -> u64 {
    crate::seed::derive_seed(seed, &config.to_string())
}
