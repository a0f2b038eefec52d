//! Predictor-guided search for distributed-training co-design
//! hyperparameters.
//!
//! A [`space::SearchSpace`] declares the knobs. Jobs launched through a
//! [`sim::Executor`] land in a [`store::JobStore`]. Each round fits a
//! [`predictor::Predictor`] on the history, searches it with REINFORCE
//! ([`searcher`]) and launches the most promising unseen configurations
//! ([`orchestrator`]). [`metrics`] holds the rank-correlation statistics used
//! to judge predictors.

pub mod metrics;
pub mod orchestrator;
pub mod predictor;
pub mod searcher;
pub mod seed;
pub mod sim;
pub mod space;
pub mod store;

pub use metrics::{kendall_tau, pearson, spearman, CorrelationReport};
pub use orchestrator::{aggregate_metric, run_loop, FinalReport, LoopConfig, RoundReport};
pub use predictor::{Backend, Dataset, Predictor};
pub use searcher::{propose_topk, SearcherConfig};
pub use seed::derive_seed;
pub use sim::{exhaustive_optimum, Executor};
pub use space::{ConfigPoint, Encoding, SearchSpace, Value};
pub use store::{JobRecord, JobStatus, JobStore};
