use cubicml::metrics::{CorrelationError, CurveError};
use cubicml::orchestrator::LoopError;
use cubicml::predictor::PredictorError;
use cubicml::searcher::SearchError;
use cubicml::sim::ExecError;
use cubicml::space::SpaceError;
use cubicml::store::{SplitError, StoreError};

/// A failed command. `Usage` and `Io` exit with 2, `Data` with 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<SpaceError> for CliError {
    fn from(e: SpaceError) -> Self {
        match e {
            SpaceError::Io { .. } => CliError::Io(e.to_string()),
            SpaceError::LayoutMismatch(_) | SpaceError::ValueNotInSet { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::ParamsFile { .. } | ExecError::InvalidParams(_) | ExecError::UnknownExecutor(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::Config(_) => CliError::Usage(e.to_string()),
            PredictorError::Space(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Config(_) => CliError::Usage(e.to_string()),
            SearchError::Predictor(p) => p.into(),
            SearchError::Space(s) => s.into(),
            SearchError::NonFiniteReward(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<LoopError> for CliError {
    fn from(e: LoopError) -> Self {
        match e {
            LoopError::Config(_) => CliError::Usage(e.to_string()),
            LoopError::DegenerateHistory(_) => CliError::Data(e.to_string()),
            LoopError::Exec(x) => x.into(),
            LoopError::Store(x) => x.into(),
            LoopError::Predictor(x) => x.into(),
            LoopError::Search(x) => x.into(),
        }
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::BadFraction(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        match e {
            CurveError::BadSize { .. } | CurveError::NoPerturbations => CliError::Usage(e.to_string()),
            CurveError::Predictor(p) => p.into(),
            CurveError::Correlation(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorrelationError> for CliError {
    fn from(e: CorrelationError) -> Self {
        CliError::Data(e.to_string())
    }
}
