//! REINFORCE search over a factorized categorical policy, top-k merging of
//! trial proposals, and the random-search baseline.

use std::collections::{HashMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::predictor::PredictorError;
use crate::space::{ConfigPoint, SearchSpace, SpaceError};

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid searcher configuration: {0}")]
    Config(String),
    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearcherConfig {
    pub trials: usize,
    pub samples_per_trial: usize,
    pub batch: usize,
    pub lr: f64,
    pub top_k: usize,
    pub baseline_decay: f64,
}

impl Default for SearcherConfig {
    fn default() -> Self {
        SearcherConfig {
            trials: 3,
            samples_per_trial: 2000,
            batch: 30,
            lr: 0.01,
            top_k: 50,
            baseline_decay: 0.9,
        }
    }
}

impl SearcherConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_owned()));
        if self.trials == 0 || self.samples_per_trial == 0 || self.batch == 0 || self.top_k == 0 {
            return bad("trials, samples_per_trial, batch and top_k must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Plain Adam, used for gradient ascent on policy logits.
#[derive(Debug, Clone, PartialEq)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn ascend(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] += lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + Self::EPS);
        }
    }
}

/// Independent softmax policy per dimension, with a reward baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    /// Flat logits; dimension `d` owns `offsets[d]..offsets[d + 1]`.
    logits: Vec<f64>,
    offsets: Vec<usize>,
    pub baseline: Option<f64>,
    pub lr: f64,
    pub baseline_decay: f64,
    adam: Adam,
}

impl PolicyState {
    pub fn new(space: &SearchSpace, lr: f64, baseline_decay: f64) -> Self {
        let mut offsets = vec![0];
        for d in space.dimensions() {
            offsets.push(offsets.last().unwrap() + d.value_count());
        }
        let n = *offsets.last().unwrap();
        PolicyState {
            logits: vec![0.0; n],
            offsets,
            baseline: None,
            lr,
            baseline_decay,
            adam: Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    pub fn dims(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn logits(&self, dim: usize) -> &[f64] {
        &self.logits[self.offsets[dim]..self.offsets[dim + 1]]
    }

    pub fn set_logits(&mut self, dim: usize, values: &[f64]) {
        self.logits[self.offsets[dim]..self.offsets[dim + 1]].copy_from_slice(values);
    }

    pub fn probabilities(&self, dim: usize) -> Vec<f64> {
        softmax(self.logits(dim))
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.dims())
            .map(|d| {
                let p = self.probabilities(d);
                WeightedIndex::new(&p).expect("softmax weights are valid").sample(rng)
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, space: &SearchSpace, rng: &mut R) -> ConfigPoint {
        space.config_from_indices(&self.sample_indices(rng))
    }

    /// One REINFORCE step from `(config, reward)` pairs.
    pub fn update(&mut self, space: &SearchSpace, batch: &[(ConfigPoint, f64)]) -> Result<(), SearchError> {
        let indexed = batch
            .iter()
            .map(|(c, r)| Ok((space.indices_of(c)?, *r)))
            .collect::<Result<Vec<_>, SearchError>>()?;
        self.update_indices(&indexed)
    }

    /// Ascends the batch-mean of `(reward - baseline) * grad log pi(sample)`,
    /// then moves the baseline toward the batch mean reward. A batch with zero
    /// advantage everywhere leaves the logits untouched.
    pub fn update_indices(&mut self, batch: &[(Vec<usize>, f64)]) -> Result<(), SearchError> {
        if batch.is_empty() {
            return Ok(());
        }
        if let Some((_, r)) = batch.iter().find(|(_, r)| !r.is_finite()) {
            return Err(SearchError::NonFiniteReward(*r));
        }
        let mean = batch.iter().map(|(_, r)| r).sum::<f64>() / batch.len() as f64;
        let baseline = *self.baseline.get_or_insert(mean);
        let probs: Vec<Vec<f64>> = (0..self.dims()).map(|d| self.probabilities(d)).collect();
        let mut grad = vec![0.0; self.logits.len()];
        let inv_n = 1.0 / batch.len() as f64;
        let mut any = false;
        for (idx, reward) in batch {
            let adv = reward - baseline;
            if adv == 0.0 {
                continue;
            }
            any = true;
            for (d, &choice) in idx.iter().enumerate() {
                let off = self.offsets[d];
                for (k, p) in probs[d].iter().enumerate() {
                    let indicator = if k == choice { 1.0 } else { 0.0 };
                    grad[off + k] += adv * (indicator - p) * inv_n;
                }
            }
        }
        if any {
            self.adam.ascend(&mut self.logits, &grad, self.lr);
        }
        self.baseline = Some(self.baseline_decay * baseline + (1.0 - self.baseline_decay) * mean);
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchProposal {
    pub config: ConfigPoint,
    pub predicted: f64,
    pub trial_seed: u64,
    pub trial_index: usize,
    pub sample_index: usize,
}

/// Scores a configuration; in the loop this wraps a fitted predictor.
pub type ScoreFn<'a> = dyn Fn(&ConfigPoint) -> Result<f64, PredictorError> + Sync + 'a;

/// Runs one REINFORCE trial and returns every sampled configuration with its
/// score, in sampling order.
pub fn reinforce_trial(
    space: &SearchSpace,
    score: &ScoreFn<'_>,
    seed: u64,
    trial_index: usize,
    config: &SearcherConfig,
) -> Result<Vec<SearchProposal>, SearchError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PolicyState::new(space, config.lr, config.baseline_decay);
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut out = Vec::with_capacity(config.samples_per_trial);
    while out.len() < config.samples_per_trial {
        let n = config.batch.min(config.samples_per_trial - out.len());
        let mut batch = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = policy.sample_indices(&mut rng);
            let cfg = space.config_from_indices(&idx);
            let reward = match cache.get(&idx) {
                Some(r) => *r,
                None => {
                    let r = score(&cfg)?;
                    cache.insert(idx.clone(), r);
                    r
                }
            };
            out.push(SearchProposal {
                config: cfg,
                predicted: reward,
                trial_seed: seed,
                trial_index,
                sample_index: out.len(),
            });
            batch.push((idx, reward));
        }
        policy.update_indices(&batch)?;
    }
    Ok(out)
}

/// Runs one trial per seed; trials are independent and run in parallel.
pub fn run_trials(
    space: &SearchSpace,
    score: &ScoreFn<'_>,
    seeds: &[u64],
    config: &SearcherConfig,
) -> Result<Vec<Vec<SearchProposal>>, SearchError> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| reinforce_trial(space, score, s, i, config))
        .collect()
}

/// Merges trials, keeps each distinct configuration once at its best score,
/// drops configurations already in `history`, and returns the `k` best by
/// score (ties: lower trial index, then lower sample index).
pub fn propose_topk(
    trials: &[Vec<SearchProposal>],
    history: &HashSet<ConfigPoint>,
    k: usize,
) -> Vec<SearchProposal> {
    let better = |a: &SearchProposal, b: &SearchProposal| {
        b.predicted
            .total_cmp(&a.predicted)
            .then(a.trial_index.cmp(&b.trial_index))
            .then(a.sample_index.cmp(&b.sample_index))
    };
    let mut best: HashMap<&ConfigPoint, &SearchProposal> = HashMap::new();
    for p in trials.iter().flatten() {
        if history.contains(&p.config) {
            continue;
        }
        best.entry(&p.config)
            .and_modify(|cur| {
                if better(p, cur).is_lt() {
                    *cur = p;
                }
            })
            .or_insert(p);
    }
    let mut merged: Vec<SearchProposal> = best.into_values().cloned().collect();
    merged.sort_by(better);
    merged.truncate(k);
    merged
}

/// `budget` independent uniform samples; duplicates are allowed.
pub fn random_search(space: &SearchSpace, budget: usize, seed: u64) -> Result<Vec<ConfigPoint>, SearchError> {
    if budget == 0 {
        return Err(SearchError::Config("random search budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..budget).map(|_| space.sample_with(&mut rng)).collect())
}
