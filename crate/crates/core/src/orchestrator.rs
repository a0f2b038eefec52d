//! The search loop: a random bootstrap round, then repeated rounds of
//! predictor fitting, REINFORCE search and launching the top proposals.
//!
//! The job store is the single source of truth. Round reports are rebuilt
//! from stored records, so reporting from a saved history reproduces them
//! exactly.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::CorrelationReport;
use crate::predictor::{Backend, ConfigScorer, Dataset, PredictorError};
use crate::searcher::{propose_topk, random_search, run_trials, SearchError, SearcherConfig};
use crate::seed::derive_seed;
use crate::sim::{ExecError, ExecOutcome, Executor, JobContext};
use crate::space::{ConfigPoint, SearchSpace};
use crate::store::{max_frontier, JobRecord, JobStatus, JobStore, StoreError};

pub const BOOTSTRAP_ROUND: &str = "bootstrap";

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("history is not trainable: {0}")]
    DegenerateHistory(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("no samples to aggregate")]
    Empty,
    #[error("percentile must be in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("non-finite sample")]
    NonFinite,
}

/// Nearest-rank percentile: element `ceil(p/100 * n)` (1-based) of the
/// ascending sort.
pub fn aggregate_metric(samples: &[f64], percentile: f64) -> Result<f64, AggregateError> {
    if samples.is_empty() {
        return Err(AggregateError::Empty);
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(AggregateError::BadPercentile(percentile));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(AggregateError::NonFinite);
    }
    let n = samples.len();
    let rank = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let mut v = samples.to_vec();
    let (_, x, _) = v.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub bootstrap: usize,
    pub rounds: usize,
    pub predictor: Backend,
    pub searcher: SearcherConfig,
    pub seed: u64,
    /// Maximum concurrent job executions.
    pub parallel: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            bootstrap: 480,
            rounds: 3,
            predictor: Backend::default(),
            searcher: SearcherConfig::default(),
            seed: 0,
            parallel: 1,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.bootstrap < 2 {
            return Err(LoopError::Config("bootstrap budget must be at least 2".into()));
        }
        if self.rounds == 0 {
            return Err(LoopError::Config("rounds must be at least 1".into()));
        }
        if self.parallel == 0 {
            return Err(LoopError::Config("parallel must be at least 1".into()));
        }
        self.searcher.validate()?;
        Ok(())
    }

    /// Upper bound on executed jobs.
    pub fn budget(&self) -> usize {
        self.bootstrap + self.rounds * self.searcher.top_k
    }
}

pub fn round_label(index: usize) -> String {
    format!("round-{index}")
}

fn next_timestamp(store: &JobStore) -> f64 {
    store.last_timestamp().map_or(0.0, |t| t.floor() + 1.0)
}

/// Executes `configs` with at most `parallel` concurrent jobs. Outcomes come
/// back in input order. Crashed jobs become infrastructure failures.
fn execute_all(
    executor: &dyn Executor,
    configs: &[ConfigPoint],
    first_timestamp: f64,
    parallel: usize,
) -> Result<Vec<ExecOutcome>, LoopError> {
    let run = |(i, c): (usize, &ConfigPoint)| {
        let ctx = JobContext {
            timestamp: first_timestamp + i as f64,
        };
        match executor.execute(c, &ctx) {
            Err(ExecError::Crashed(_)) => Ok(ExecOutcome::failed(JobStatus::FailedInfra, None)),
            other => other,
        }
    };
    let outcomes: Result<Vec<_>, ExecError> = if parallel <= 1 {
        configs.iter().enumerate().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| LoopError::Config(format!("thread pool: {e}")))?;
        pool.install(|| configs.par_iter().enumerate().map(run).collect())
    };
    Ok(outcomes?)
}

/// Launches `budget` uniformly random configurations and appends every
/// outcome, failures included.
pub fn run_bootstrap(
    space: &SearchSpace,
    executor: &dyn Executor,
    budget: usize,
    seed: u64,
    store: &mut JobStore,
    parallel: usize,
) -> Result<(), LoopError> {
    if budget == 0 {
        return Err(LoopError::Config("bootstrap budget must be at least 1".into()));
    }
    let configs = random_search(space, budget, seed)?;
    let t0 = next_timestamp(store);
    let outcomes = execute_all(executor, &configs, t0, parallel)?;
    for (i, (cfg, out)) in configs.into_iter().zip(outcomes).enumerate() {
        store.append(out.into_record(cfg, t0 + i as f64, BOOTSTRAP_ROUND))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaunchedJob {
    pub config: ConfigPoint,
    pub status: JobStatus,
    pub predicted: Option<f64>,
    pub actual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: String,
    pub launched: Vec<LaunchedJob>,
    /// Overall best-so-far after each launch of this round; `None` until a
    /// job has completed.
    pub frontier: Vec<Option<f64>>,
    pub best: Option<f64>,
    /// Predicted versus actual on this round's completed launches.
    pub correlation: Option<CorrelationReport>,
}

fn build_round(round: &str, records: &[&JobRecord], prior_best: Option<f64>) -> RoundReport {
    let mut running = prior_best;
    let mut frontier = Vec::with_capacity(records.len());
    let mut launched = Vec::with_capacity(records.len());
    let (mut pred, mut act) = (Vec::new(), Vec::new());
    for r in records {
        if let Some(m) = r.completed_metric() {
            running = Some(running.map_or(m, |b| b.max(m)));
            if let Some(p) = r.predicted {
                pred.push(p);
                act.push(m);
            }
        }
        frontier.push(running);
        launched.push(LaunchedJob {
            config: r.config.clone(),
            status: r.status,
            predicted: r.predicted,
            actual: r.completed_metric(),
        });
    }
    let best = records.iter().filter_map(|r| r.completed_metric()).reduce(f64::max);
    RoundReport {
        round: round.to_owned(),
        launched,
        frontier,
        best,
        correlation: CorrelationReport::compute(&pred, &act).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalReport {
    /// Bootstrap first, then search rounds, in launch order.
    pub rounds: Vec<RoundReport>,
    /// Running best over completed jobs in launch order.
    pub frontier: Vec<f64>,
    pub best_config: Option<ConfigPoint>,
    pub best_metric: Option<f64>,
    pub jobs: usize,
    pub failed: usize,
}

/// Rebuilds all round reports from stored records. Rounds are the maximal
/// runs of consecutive records sharing a round label.
pub fn report_from_records(records: &[JobRecord]) -> FinalReport {
    let mut rounds = Vec::new();
    let mut best: Option<f64> = None;
    let mut start = 0;
    while start < records.len() {
        let label = &records[start].round;
        let end = records[start..]
            .iter()
            .position(|r| &r.round != label)
            .map_or(records.len(), |p| start + p);
        let chunk: Vec<&JobRecord> = records[start..end].iter().collect();
        let report = build_round(label, &chunk, best);
        best = report.frontier.last().copied().flatten();
        rounds.push(report);
        start = end;
    }
    let metrics: Vec<f64> = records.iter().filter_map(JobRecord::completed_metric).collect();
    let best_record = records
        .iter()
        .filter(|r| r.completed_metric().is_some())
        .fold(None::<&JobRecord>, |b, r| match b {
            Some(b) if b.metric >= r.metric => Some(b),
            _ => Some(r),
        });
    FinalReport {
        rounds,
        frontier: max_frontier(&metrics),
        best_config: best_record.map(|r| r.config.clone()),
        best_metric: best_record.and_then(|r| r.metric),
        jobs: records.len(),
        failed: records.iter().filter(|r| !r.status.is_completed()).count(),
    }
}

/// Fits a predictor on all completed history, searches it with REINFORCE,
/// and launches the top novel proposals in descending predicted order.
pub fn run_round(
    space: &SearchSpace,
    executor: &dyn Executor,
    store: &mut JobStore,
    config: &LoopConfig,
    round_index: usize,
) -> Result<RoundReport, LoopError> {
    config.validate()?;
    let data = Dataset::from_records(space, config.predictor.encoding(), store.completed())?;
    data.check_trainable().map_err(|e| LoopError::DegenerateHistory(e.to_string()))?;
    let label = round_label(round_index);
    let predictor = config
        .predictor
        .fit(&data, derive_seed(config.seed, &format!("{label}/predictor")))?;
    let scorer = ConfigScorer::new(space, &predictor)?;
    let score = |c: &ConfigPoint| scorer.score(c);
    let seeds: Vec<u64> = (0..config.searcher.trials)
        .map(|i| derive_seed(config.seed, &format!("{label}/trial-{i}")))
        .collect();
    let trials = run_trials(space, &score, &seeds, &config.searcher)?;
    let history: HashSet<ConfigPoint> = store.records().iter().map(|r| r.config.clone()).collect();
    let proposals = propose_topk(&trials, &history, config.searcher.top_k);

    let configs: Vec<ConfigPoint> = proposals.iter().map(|p| p.config.clone()).collect();
    let t0 = next_timestamp(store);
    let outcomes = execute_all(executor, &configs, t0, config.parallel)?;
    let first = store.len();
    for (i, (p, out)) in proposals.into_iter().zip(outcomes).enumerate() {
        let mut rec = out.into_record(p.config, t0 + i as f64, &label);
        rec.predicted = Some(p.predicted);
        store.append(rec)?;
    }
    let prior_best = store.records()[..first]
        .iter()
        .filter_map(JobRecord::completed_metric)
        .reduce(f64::max);
    let launched: Vec<&JobRecord> = store.records()[first..].iter().collect();
    Ok(build_round(&label, &launched, prior_best))
}

/// Bootstrap followed by `config.rounds` search rounds. On error the store
/// keeps every job launched so far.
pub fn run_loop(
    space: &SearchSpace,
    executor: &dyn Executor,
    store: &mut JobStore,
    config: &LoopConfig,
) -> Result<FinalReport, LoopError> {
    config.validate()?;
    run_bootstrap(
        space,
        executor,
        config.bootstrap,
        derive_seed(config.seed, BOOTSTRAP_ROUND),
        store,
        config.parallel,
    )?;
    for r in 1..=config.rounds {
        run_round(space, executor, store, config, r)?;
    }
    Ok(report_from_records(store.records()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `launch_index,round,actual_metric,frontier`; failed jobs leave
/// `actual_metric` empty.
pub fn frontier_csv(records: &[JobRecord]) -> String {
    let mut out = String::from("launch_index,round,actual_metric,frontier\n");
    let mut best: Option<f64> = None;
    for (i, r) in records.iter().enumerate() {
        let m = r.completed_metric();
        if let Some(m) = m {
            best = Some(best.map_or(m, |b| b.max(m)));
        }
        let _ = writeln!(out, "{i},{},{},{}", r.round, opt(m), opt(best));
    }
    out
}

/// `round,n,kendall,pearson,spearman` for every round with predictions;
/// undefined correlations leave the metric columns empty.
pub fn round_corr_csv(report: &FinalReport) -> String {
    let mut out = String::from("round,n,kendall,pearson,spearman\n");
    for r in report.rounds.iter().filter(|r| r.round != BOOTSTRAP_ROUND) {
        match &r.correlation {
            Some(c) => {
                let _ = writeln!(out, "{},{},{},{},{}", r.round, c.n, c.kendall, c.pearson, c.spearman);
            }
            None => {
                let n = r.launched.iter().filter(|j| j.actual.is_some()).count();
                let _ = writeln!(out, "{},{n},,,", r.round);
            }
        }
    }
    out
}
