//! Layer-wise FSDP recommendation-training cost model.
//!
//! Per-GPU memory sums every dense layer's footprint under its sharding
//! strategy. Step time is compute plus per-layer collective cost plus a
//! penalty for embedding rows that spill to host memory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{config_noise_seed, ExecError, ExecOutcome, Executor, JobContext};
use crate::orchestrator::aggregate_metric;
use crate::space::{ConfigPoint, Value};
use crate::store::JobStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharding {
    NoShard,
    ShardGradOp,
    FullShard,
}

impl Sharding {
    pub fn parse(label: &str) -> Option<Self> {
        match label {
            "NO_SHARD" => Some(Sharding::NoShard),
            "SHARD_GRAD_OP" => Some(Sharding::ShardGradOp),
            "FULL_SHARD" => Some(Sharding::FullShard),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StorageReservation {
    /// Fraction of HBM reserved for dense layers; the rest holds embeddings.
    Fixed(f64),
    /// Embeddings get a fixed slice, dense layers get the remainder.
    MemoryBalanced,
}

impl StorageReservation {
    pub fn from_value(v: &Value) -> Option<Self> {
        match v {
            Value::Label(s) if s == "memory_balanced" => Some(StorageReservation::MemoryBalanced),
            Value::Label(s) => s.strip_prefix("fixed_")?.parse().ok().map(StorageReservation::Fixed),
            Value::Decimal(d) => Some(StorageReservation::Fixed(d.to_f64())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsdpSimParams {
    pub gpus: u64,
    pub hbm_gb: f64,
    /// bf16 parameter memory of each dense layer, GB.
    pub layer_param_gb: Vec<f64>,
    /// Gradient memory relative to parameter memory.
    pub grad_multiplier: f64,
    /// Optimizer-state memory relative to parameter memory.
    pub optimizer_multiplier: f64,
    pub activation_gb_per_sample: f64,
    pub runtime_overhead_gb: f64,
    pub embedding_demand_gb: f64,
    /// HBM left to embeddings under the memory-balanced policy.
    pub balanced_embedding_gb: f64,
    pub compute_fixed_s: f64,
    pub compute_per_sample_s: f64,
    /// Extra seconds per sample for a fully host-resident embedding table.
    pub host_penalty_per_sample_s: f64,
    pub bandwidth_gb_s: f64,
    pub comm_no_shard: f64,
    pub comm_shard_grad_op: f64,
    pub comm_full_shard: f64,
    pub steps: usize,
    pub percentile: f64,
    /// Per-step multiplicative noise amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for FsdpSimParams {
    fn default() -> Self {
        FsdpSimParams {
            gpus: 128,
            hbm_gb: 80.0,
            layer_param_gb: vec![0.8, 1.2, 1.6, 2.0, 2.4, 2.8, 3.2, 2.4, 1.6, 1.2, 0.8],
            grad_multiplier: 1.0,
            optimizer_multiplier: 6.0,
            activation_gb_per_sample: 0.02,
            runtime_overhead_gb: 2.0,
            embedding_demand_gb: 20.0,
            balanced_embedding_gb: 10.0,
            compute_fixed_s: 0.05,
            compute_per_sample_s: 0.0004,
            host_penalty_per_sample_s: 0.0002,
            bandwidth_gb_s: 50.0,
            comm_no_shard: 2.0,
            comm_shard_grad_op: 2.5,
            comm_full_shard: 3.0,
            steps: 2000,
            percentile: 90.0,
            noise: 0.02,
            seed: 0,
        }
    }
}

impl FsdpSimParams {
    pub fn validate(&self) -> Result<(), ExecError> {
        let bad = |m: &str| Err(ExecError::InvalidParams(m.to_owned()));
        let positive = [
            self.hbm_gb,
            self.grad_multiplier,
            self.optimizer_multiplier,
            self.activation_gb_per_sample,
            self.runtime_overhead_gb,
            self.embedding_demand_gb,
            self.balanced_embedding_gb,
            self.compute_fixed_s,
            self.compute_per_sample_s,
            self.host_penalty_per_sample_s,
            self.bandwidth_gb_s,
            self.comm_no_shard,
        ];
        if self.gpus < 2 {
            return bad("gpus must be at least 2");
        }
        if self.layer_param_gb.is_empty() {
            return bad("layer_param_gb must list at least one layer");
        }
        if positive.iter().chain(&self.layer_param_gb).any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("all sizes, times and multipliers must be positive and finite");
        }
        if !(self.comm_no_shard < self.comm_shard_grad_op && self.comm_shard_grad_op < self.comm_full_shard) {
            return bad("communication factors must increase NO_SHARD < SHARD_GRAD_OP < FULL_SHARD");
        }
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return bad("percentile must be in (0, 100]");
        }
        if !(0.0..0.05).contains(&self.noise) {
            return bad("noise must be in [0, 0.05)");
        }
        Ok(())
    }
}

/// Decoded FSDP configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FsdpJob {
    pub sharding: Vec<Sharding>,
    pub batch: u64,
    pub reservation: StorageReservation,
}

#[derive(Debug, Clone)]
pub struct FsdpSim {
    params: FsdpSimParams,
}

impl FsdpSim {
    pub fn new(params: FsdpSimParams) -> Result<Self, ExecError> {
        params.validate()?;
        Ok(FsdpSim { params })
    }

    pub fn params(&self) -> &FsdpSimParams {
        &self.params
    }

    fn invalid(reason: String) -> ExecError {
        ExecError::InvalidConfig {
            executor: "fsdp".into(),
            reason,
        }
    }

    /// Layer dimensions are every `*sharding*` assignment in config order.
    pub fn decode(&self, config: &ConfigPoint) -> Result<FsdpJob, ExecError> {
        let mut sharding = Vec::new();
        for (name, v) in config.iter().filter(|(n, _)| n.contains("sharding")) {
            let s = v
                .as_str()
                .and_then(Sharding::parse)
                .ok_or_else(|| Self::invalid(format!("{name}: unknown strategy {v}")))?;
            sharding.push(s);
        }
        if sharding.len() != self.params.layer_param_gb.len() {
            return Err(Self::invalid(format!(
                "config has {} sharding dimensions, params describe {} layers",
                sharding.len(),
                self.params.layer_param_gb.len()
            )));
        }
        let batch = config
            .get("local_batch_size")
            .and_then(Value::as_i64)
            .filter(|b| *b > 0)
            .ok_or_else(|| Self::invalid("missing positive local_batch_size".into()))?;
        let reservation = config
            .get("storage_reservation")
            .and_then(StorageReservation::from_value)
            .ok_or_else(|| Self::invalid("missing or unknown storage_reservation".into()))?;
        if let StorageReservation::Fixed(f) = reservation {
            if !(f > 0.0 && f < 1.0) {
                return Err(Self::invalid(format!("storage fraction {f} outside (0, 1)")));
            }
        }
        Ok(FsdpJob {
            sharding,
            batch: batch as u64,
            reservation,
        })
    }

    /// Per-GPU state memory of one layer, GB.
    pub fn layer_memory(&self, p: f64, s: Sharding) -> f64 {
        let n = self.params.gpus as f64;
        let grad_opt = (self.params.grad_multiplier + self.params.optimizer_multiplier) * p;
        match s {
            Sharding::NoShard => p + grad_opt,
            Sharding::ShardGradOp => p + grad_opt / n,
            Sharding::FullShard => (p + grad_opt) / n,
        }
    }

    /// Per-GPU collective time of one layer, seconds.
    pub fn layer_comm(&self, p: f64, s: Sharding) -> f64 {
        let factor = match s {
            Sharding::NoShard => self.params.comm_no_shard,
            Sharding::ShardGradOp => self.params.comm_shard_grad_op,
            Sharding::FullShard => self.params.comm_full_shard,
        };
        factor * p / self.params.bandwidth_gb_s
    }

    pub fn dense_memory(&self, job: &FsdpJob) -> f64 {
        let p = &self.params;
        let states: f64 = p
            .layer_param_gb
            .iter()
            .zip(&job.sharding)
            .map(|(&gb, &s)| self.layer_memory(gb, s))
            .sum();
        states + p.activation_gb_per_sample * job.batch as f64 + p.runtime_overhead_gb
    }

    /// (dense budget, HBM available to embeddings), GB.
    pub fn budgets(&self, reservation: StorageReservation) -> (f64, f64) {
        let hbm = self.params.hbm_gb;
        match reservation {
            StorageReservation::Fixed(f) => (f * hbm, (1.0 - f) * hbm),
            StorageReservation::MemoryBalanced => {
                let emb = self.params.balanced_embedding_gb.min(hbm);
                (hbm - emb, emb)
            }
        }
    }

    /// Noise-free step time, seconds.
    pub fn step_time(&self, job: &FsdpJob) -> f64 {
        let p = &self.params;
        let b = job.batch as f64;
        let (_, emb_hbm) = self.budgets(job.reservation);
        let host_fraction = ((p.embedding_demand_gb - emb_hbm) / p.embedding_demand_gb).max(0.0);
        let comm: f64 = p
            .layer_param_gb
            .iter()
            .zip(&job.sharding)
            .map(|(&gb, &s)| self.layer_comm(gb, s))
            .sum();
        p.compute_fixed_s + p.compute_per_sample_s * b + p.host_penalty_per_sample_s * host_fraction * b + comm
    }

    pub fn run(&self, config: &ConfigPoint) -> Result<ExecOutcome, ExecError> {
        let job = self.decode(config)?;
        let scale = Some(self.params.gpus);
        let (dense_budget, _) = self.budgets(job.reservation);
        if self.dense_memory(&job) > dense_budget {
            return Ok(ExecOutcome::failed(JobStatus::FailedOom, scale));
        }
        let t = self.step_time(&job);
        let samples = job.batch as f64 * self.params.gpus as f64;
        let qps = if self.params.noise == 0.0 {
            samples / t
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config_noise_seed(self.params.seed, config));
            let a = self.params.noise;
            let steps: Vec<f64> = (0..self.params.steps)
                .map(|_| samples / (t * (1.0 + rng.gen_range(-a..=a))))
                .collect();
            aggregate_metric(&steps, self.params.percentile).expect("steps > 0")
        };
        Ok(ExecOutcome::completed(qps, scale))
    }
}

impl Executor for FsdpSim {
    fn name(&self) -> &str {
        "fsdp"
    }

    fn execute(&self, config: &ConfigPoint, _ctx: &JobContext) -> Result<ExecOutcome, ExecError> {
        self.run(config)
    }

    fn without_noise(&self) -> Box<dyn Executor> {
        Box::new(FsdpSim {
            params: FsdpSimParams {
                noise: 0.0,
                ..self.params.clone()
            },
        })
    }
}
