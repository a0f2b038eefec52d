//! LLM pre-training throughput model, in words (tokens) per second.
//!
//! Throughput is ideal hardware FLOP rate times a product of parallelism
//! efficiencies divided by model FLOPs per token. Memory is checked per GPU
//! with weights and gradients sharded over TP x PP, optimizer states
//! additionally over DP, and activations over TP and CP.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExecError, ExecOutcome, Executor, JobContext};
use crate::seed::derive_seed;
use crate::space::{ConfigPoint, Value};
use crate::store::JobStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    /// Dense BF16 peak, TFLOP/s.
    pub peak_tflops: f64,
    pub hbm_gb: f64,
    /// FP8 speedup over BF16.
    pub fp8_multiplier: f64,
    /// Scales tensor-parallel overhead; lower means a faster scale-up link.
    pub tp_link_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSimParams {
    pub hardware: BTreeMap<String, HardwareSpec>,
    pub vocab: u64,
    pub base_mfu: f64,
    pub tp_overhead: f64,
    pub cp_overhead: f64,
    pub dp_overhead: f64,
    /// Tokens per GPU per step at which DP overhead equals `dp_overhead` per doubling.
    pub dp_reference_tokens: f64,
    /// GPU count above which jobs cross the slower inter-pod fabric.
    pub fabric_gpus: u64,
    pub fabric_penalty: f64,
    /// Largest allowed global batch, tokens per optimizer step.
    pub max_global_batch_tokens: u64,
    pub recompute_factor: f64,
    /// Activation bytes per token per model-dim unit per layer.
    pub activation_bytes: f64,
    pub checkpoint_activation_bytes: f64,
    pub memory_overhead_gb: f64,
    /// Timestamp at which drift reaches its full value.
    pub drift_horizon: f64,
    pub drift_global: f64,
    pub drift_fp8: f64,
    pub drift_cp: f64,
    /// Per-job multiplicative noise amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for LlmSimParams {
    fn default() -> Self {
        let hw = |peak, hbm, fp8, link| HardwareSpec {
            peak_tflops: peak,
            hbm_gb: hbm,
            fp8_multiplier: fp8,
            tp_link_factor: link,
        };
        LlmSimParams {
            hardware: BTreeMap::from([
                ("A100".to_owned(), hw(312.0, 80.0, 1.05, 1.4)),
                ("H100".to_owned(), hw(989.0, 80.0, 1.4, 1.0)),
                ("H200".to_owned(), hw(989.0, 141.0, 1.4, 0.9)),
            ]),
            vocab: 128_256,
            base_mfu: 0.55,
            tp_overhead: 0.12,
            cp_overhead: 0.15,
            dp_overhead: 0.002,
            dp_reference_tokens: 32_768.0,
            fabric_gpus: 2048,
            fabric_penalty: 0.02,
            max_global_batch_tokens: 1 << 25,
            recompute_factor: 1.33,
            activation_bytes: 34.0,
            checkpoint_activation_bytes: 2.0,
            memory_overhead_gb: 4.0,
            drift_horizon: 180.0,
            drift_global: 0.1,
            drift_fp8: 0.3,
            drift_cp: 0.25,
            noise: 0.02,
            seed: 0,
        }
    }
}

impl LlmSimParams {
    pub fn validate(&self) -> Result<(), ExecError> {
        let bad = |m: String| Err(ExecError::InvalidParams(m));
        if self.hardware.is_empty() {
            return bad("at least one hardware type is required".into());
        }
        for (name, h) in &self.hardware {
            if ![h.peak_tflops, h.hbm_gb, h.tp_link_factor].iter().all(|v| v.is_finite() && *v > 0.0) {
                return bad(format!("hardware {name}: values must be positive"));
            }
            if !(h.fp8_multiplier.is_finite() && h.fp8_multiplier > 1.0) {
                return bad(format!("hardware {name}: fp8_multiplier must exceed 1"));
            }
        }
        let nonneg = [
            self.tp_overhead,
            self.cp_overhead,
            self.dp_overhead,
            self.fabric_penalty,
            self.memory_overhead_gb,
            self.drift_global,
            self.drift_fp8,
            self.drift_cp,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("overheads and drift terms must be non-negative".into());
        }
        let positive = [
            self.base_mfu,
            self.dp_reference_tokens,
            self.activation_bytes,
            self.checkpoint_activation_bytes,
            self.drift_horizon,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.vocab == 0 || self.fabric_gpus == 0 || self.max_global_batch_tokens == 0
        {
            return bad("sizes and rates must be positive".into());
        }
        if self.base_mfu > 1.0 {
            return bad("base_mfu must be at most 1".into());
        }
        if !(self.recompute_factor.is_finite() && self.recompute_factor >= 1.0) {
            return bad("recompute_factor must be at least 1".into());
        }
        if !(0.0..0.05).contains(&self.noise) {
            return bad("noise must be in [0, 0.05)".into());
        }
        Ok(())
    }
}

/// Decoded LLM job configuration. DP degree is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmJob {
    pub layers: u64,
    pub model_dim: u64,
    pub heads: u64,
    pub ffn_dim: u64,
    pub micro_batches: u64,
    pub seq_len: u64,
    pub tp: u64,
    pub pp: u64,
    pub cp: u64,
    pub fp8: bool,
    pub checkpointing: bool,
    pub gpus: u64,
    pub hardware: String,
}

impl LlmJob {
    pub fn model_parallel(&self) -> u64 {
        self.tp * self.pp * self.cp
    }

    pub fn dp(&self) -> u64 {
        self.gpus / self.model_parallel()
    }

    /// Parameter count including input and output embeddings.
    pub fn params(&self, vocab: u64) -> f64 {
        let (l, d, f) = (self.layers as f64, self.model_dim as f64, self.ffn_dim as f64);
        l * (4.0 * d * d + 3.0 * d * f) + 2.0 * vocab as f64 * d
    }

    pub fn flops_per_token(&self, vocab: u64) -> f64 {
        let (l, d, s) = (self.layers as f64, self.model_dim as f64, self.seq_len as f64);
        6.0 * self.params(vocab) + 6.0 * l * d * s
    }

    pub fn tokens_per_gpu_step(&self) -> f64 {
        (self.micro_batches * self.seq_len) as f64 / self.cp as f64
    }

    pub fn global_batch_tokens(&self) -> u64 {
        self.micro_batches * self.seq_len * self.dp()
    }

    /// Full-layout validity; violations are infrastructure failures.
    pub fn layout_error(&self, max_global_batch_tokens: u64) -> Option<String> {
        if self.model_parallel() > self.gpus {
            return Some(format!("tp*pp*cp = {} exceeds {} GPUs", self.model_parallel(), self.gpus));
        }
        if !self.gpus.is_multiple_of(self.model_parallel()) {
            return Some("GPU count not divisible by tp*pp*cp".into());
        }
        if !self.heads.is_multiple_of(self.tp) || !self.model_dim.is_multiple_of(self.heads) {
            return Some("heads must divide model_dim and be divisible by tp".into());
        }
        if !self.layers.is_multiple_of(self.pp) {
            return Some("layers not divisible by pp".into());
        }
        if !self.seq_len.is_multiple_of(self.cp) {
            return Some("seq_len not divisible by cp".into());
        }
        if self.global_batch_tokens() > max_global_batch_tokens {
            return Some(format!("global batch of {} tokens exceeds the limit", self.global_batch_tokens()));
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct LlmSim {
    params: LlmSimParams,
}

impl LlmSim {
    pub fn new(params: LlmSimParams) -> Result<Self, ExecError> {
        params.validate()?;
        Ok(LlmSim { params })
    }

    pub fn params(&self) -> &LlmSimParams {
        &self.params
    }

    fn invalid(reason: String) -> ExecError {
        ExecError::InvalidConfig {
            executor: "llm".into(),
            reason,
        }
    }

    pub fn decode(&self, config: &ConfigPoint) -> Result<LlmJob, ExecError> {
        let get = |name: &str| config.get(name).ok_or_else(|| Self::invalid(format!("missing {name}")));
        let int = |name: &str| -> Result<u64, ExecError> {
            get(name)?
                .as_i64()
                .filter(|v| *v > 0)
                .map(|v| v as u64)
                .ok_or_else(|| Self::invalid(format!("{name} must be a positive integer")))
        };
        let fp8 = match get("precision")?.as_str() {
            Some("FP8") => true,
            Some("BF16") => false,
            _ => return Err(Self::invalid("precision must be BF16 or FP8".into())),
        };
        let checkpointing = match get("activation_checkpointing")? {
            Value::Bool(b) => *b,
            _ => return Err(Self::invalid("activation_checkpointing must be boolean".into())),
        };
        let hardware = get("hardware")?
            .as_str()
            .filter(|h| self.params.hardware.contains_key(*h))
            .ok_or_else(|| Self::invalid("unknown hardware type".into()))?
            .to_owned();
        Ok(LlmJob {
            layers: int("num_layers")?,
            model_dim: int("model_dim")?,
            heads: int("num_heads")?,
            ffn_dim: int("ffn_dim")?,
            micro_batches: int("micro_batches")?,
            seq_len: int("seq_len")?,
            tp: int("tp")?,
            pp: int("pp")?,
            cp: int("cp")?,
            fp8,
            checkpointing,
            gpus: int("gpus")?,
            hardware,
        })
    }

    /// Per-GPU memory demand, GB.
    pub fn memory_gb(&self, job: &LlmJob) -> f64 {
        let p = &self.params;
        let n = job.params(p.vocab);
        let shard = (job.tp * job.pp) as f64;
        let weights_grads = 4.0 * n / shard;
        let optimizer = 12.0 * n / (shard * job.dp() as f64);
        let per_token = if job.checkpointing {
            p.checkpoint_activation_bytes
        } else {
            p.activation_bytes
        };
        let in_flight = job.micro_batches.min(job.pp) as f64;
        let activations = (job.seq_len / job.cp) as f64 * job.model_dim as f64 * per_token
            * (job.layers / job.pp) as f64
            * in_flight
            / job.tp as f64;
        (weights_grads + optimizer + activations) / 1e9 + p.memory_overhead_gb
    }

    /// Product of parallelism efficiencies and recompute slowdown, in (0, 1].
    pub fn efficiency(&self, job: &LlmJob) -> f64 {
        let p = &self.params;
        let hw = &p.hardware[&job.hardware];
        let m = job.micro_batches as f64;
        let pp = job.pp as f64;
        let bubble = m / (m + pp - 1.0);
        let tp_frac = (job.tp as f64 - 1.0) / job.tp as f64;
        let tp_eff = 1.0 / (1.0 + p.tp_overhead * hw.tp_link_factor * tp_frac * 8192.0 / job.model_dim as f64);
        let cp_frac = (job.cp as f64 - 1.0) / job.cp as f64;
        let cp_eff = 1.0 / (1.0 + p.cp_overhead * cp_frac * 32_768.0 / job.seq_len as f64);
        let comm_ratio = p.dp_reference_tokens / job.tokens_per_gpu_step();
        let dp_eff = 1.0 / (1.0 + p.dp_overhead * (job.dp() as f64).log2() * comm_ratio);
        let fabric_eff = if job.gpus > p.fabric_gpus {
            let hops = (job.gpus as f64 / p.fabric_gpus as f64).log2();
            1.0 / (1.0 + p.fabric_penalty * hops * comm_ratio.sqrt())
        } else {
            1.0
        };
        let recompute = if job.checkpointing { p.recompute_factor } else { 1.0 };
        bubble * tp_eff * cp_eff * dp_eff * fabric_eff / recompute
    }

    pub fn drift(&self, job: &LlmJob, timestamp: f64) -> f64 {
        let p = &self.params;
        let t = (timestamp / p.drift_horizon).clamp(0.0, 1.0);
        let fp8 = if job.fp8 { p.drift_fp8 } else { 0.0 };
        let cp = if job.cp > 1 { p.drift_cp } else { 0.0 };
        t * (p.drift_global + fp8 + cp)
    }

    /// Noise-free, drift-free tokens per second.
    pub fn ideal_wps(&self, job: &LlmJob) -> f64 {
        let p = &self.params;
        let hw = &p.hardware[&job.hardware];
        let precision = if job.fp8 { hw.fp8_multiplier } else { 1.0 };
        job.gpus as f64 * hw.peak_tflops * 1e12 * p.base_mfu * precision * self.efficiency(job)
            / job.flops_per_token(p.vocab)
    }

    pub fn run(&self, config: &ConfigPoint, timestamp: f64) -> Result<ExecOutcome, ExecError> {
        let job = self.decode(config)?;
        let scale = Some(job.gpus);
        if job.layout_error(self.params.max_global_batch_tokens).is_some() {
            return Ok(ExecOutcome::failed(JobStatus::FailedInfra, scale));
        }
        if self.memory_gb(&job) > self.params.hardware[&job.hardware].hbm_gb {
            return Ok(ExecOutcome::failed(JobStatus::FailedOom, scale));
        }
        let mut wps = self.ideal_wps(&job) * (1.0 + self.drift(&job, timestamp));
        if self.params.noise > 0.0 {
            let key = format!("{config}@{}", timestamp.to_bits());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.params.seed, &key));
            wps *= 1.0 + rng.gen_range(-self.params.noise..=self.params.noise);
        }
        Ok(ExecOutcome::completed(wps, scale))
    }
}

impl Executor for LlmSim {
    fn name(&self) -> &str {
        "llm"
    }

    fn execute(&self, config: &ConfigPoint, ctx: &JobContext) -> Result<ExecOutcome, ExecError> {
        self.run(config, ctx.timestamp)
    }

    fn without_noise(&self) -> Box<dyn Executor> {
        Box::new(LlmSim {
            params: LlmSimParams {
                noise: 0.0,
                ..self.params.clone()
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gpus: i64, precision: &str) -> ConfigPoint {
        let ints = [
            ("num_layers", 32),
            ("model_dim", 4096),
            ("num_heads", 32),
            ("ffn_dim", 14336),
            ("micro_batches", 8),
            ("seq_len", 8192),
            ("tp", 4),
            ("pp", 2),
            ("cp", 1),
        ];
        let mut a: Vec<(String, Value)> = ints.iter().map(|(n, v)| (n.to_string(), Value::Int(*v))).collect();
        a.push(("precision".into(), Value::Label(precision.into())));
        a.push(("activation_checkpointing".into(), Value::Bool(false)));
        a.push(("gpus".into(), Value::Int(gpus)));
        a.push(("hardware".into(), Value::Label("H100".into())));
        ConfigPoint::new(a)
    }

    fn quiet() -> LlmSim {
        LlmSim::new(LlmSimParams {
            noise: 0.0,
            ..LlmSimParams::default()
        })
        .unwrap()
    }

    fn perfect() -> LlmSim {
        LlmSim::new(LlmSimParams {
            tp_overhead: 0.0,
            cp_overhead: 0.0,
            dp_overhead: 0.0,
            fabric_penalty: 0.0,
            max_global_batch_tokens: u64::MAX,
            noise: 0.0,
            ..LlmSimParams::default()
        })
        .unwrap()
    }

    #[test]
    fn doubling_gpus_doubles_wps_with_perfect_efficiency() {
        let sim = perfect();
        for g in [64, 1024, 4096] {
            let a = sim.run(&cfg(g, "BF16"), 0.0).unwrap().metric.unwrap();
            let b = sim.run(&cfg(2 * g, "BF16"), 0.0).unwrap().metric.unwrap();
            assert_eq!(b, 2.0 * a);
        }
    }

    #[test]
    fn fp8_beats_bf16() {
        let sim = quiet();
        for t in [0.0, 90.0, 180.0] {
            let bf = sim.run(&cfg(256, "BF16"), t).unwrap().metric.unwrap();
            let fp = sim.run(&cfg(256, "FP8"), t).unwrap().metric.unwrap();
            assert!(fp > bf);
        }
    }

    #[test]
    fn wps_matches_hand_computation() {
        let sim = perfect();
        let p = 32.0 * (4.0 * 4096.0f64.powi(2) + 3.0 * 4096.0 * 14336.0) + 2.0 * 128_256.0 * 4096.0;
        let flops = 6.0 * p + 6.0 * 32.0 * 4096.0 * 8192.0;
        let bubble = 8.0 / 9.0;
        let want = 256.0 * 989e12 * 0.55 * bubble / flops;
        let got = sim.run(&cfg(256, "BF16"), 0.0).unwrap().metric.unwrap();
        assert!((got - want).abs() / want < 1e-12);
    }

    #[test]
    fn failures_are_classified() {
        let sim = quiet();
        let out = sim.run(&cfg(4, "BF16"), 0.0).unwrap();
        assert_eq!(out.status, JobStatus::FailedInfra);
        assert_eq!(out.scale, Some(4));
        let mut big: Vec<(String, Value)> = cfg(8, "BF16").iter().map(|(n, v)| (n.to_owned(), v.clone())).collect();
        for (n, v) in big.iter_mut() {
            match n.as_str() {
                "num_layers" => *v = Value::Int(128),
                "model_dim" => *v = Value::Int(16384),
                "ffn_dim" => *v = Value::Int(53248),
                "tp" | "pp" => *v = Value::Int(1),
                _ => {}
            }
        }
        assert_eq!(sim.run(&ConfigPoint::new(big), 0.0).unwrap().status, JobStatus::FailedOom);
    }

    #[test]
    fn drift_grows_with_time_and_noise_is_bounded() {
        let sim = quiet();
        let early = sim.run(&cfg(256, "FP8"), 0.0).unwrap().metric.unwrap();
        let late = sim.run(&cfg(256, "FP8"), 180.0).unwrap().metric.unwrap();
        assert!((late / early - 1.4).abs() < 1e-12);
        let noisy = LlmSim::new(LlmSimParams::default()).unwrap();
        let n = noisy.run(&cfg(256, "FP8"), 0.0).unwrap().metric.unwrap();
        assert!((n / early - 1.0).abs() <= 0.02 + 1e-12);
        assert_eq!(n, noisy.run(&cfg(256, "FP8"), 0.0).unwrap().metric.unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = LlmSimParams::default();
        p.hardware.get_mut("H100").unwrap().fp8_multiplier = 1.0;
        assert!(LlmSim::new(p).is_err());
        assert!(LlmSim::new(LlmSimParams { noise: 0.1, ..LlmSimParams::default() }).is_err());
        assert!(LlmSim::new(LlmSimParams { base_mfu: 0.0, ..LlmSimParams::default() }).is_err());
    }
}
