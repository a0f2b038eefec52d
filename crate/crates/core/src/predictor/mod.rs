//! Learned performance models mapping encoded configurations to a score.
//!
//! Two backends: an ensemble of ranking MLPs over one-hot features, and a
//! gradient-boosted regression-tree model over mixed features.

pub mod amsgrad;
pub mod gbdt;
pub mod loss;
pub mod mlp;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use amsgrad::AmsgradState;
pub use gbdt::{GbdtParams, GbdtPredictor};
pub use loss::{ranking_loss, ranking_loss_grad};
pub use mlp::{gradient_check, EnsemblePredictor, MlpConfig, MlpModel};

use crate::space::{ConfigPoint, Encoding, FeatureLayout, SearchSpace, SpaceError};
use crate::store::JobRecord;

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("need at least 2 training examples, got {0}")]
    TooFewExamples(usize),
    #[error("all training metrics are identical")]
    DegenerateTargets,
    #[error("feature layout mismatch: model expects {expected} slots, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("model was trained on a different encoding layout")]
    IncompatibleLayout,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid predictor configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("model file {path}: {reason}")]
    Persist { path: String, reason: String },
}

/// Encoded training examples sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: FeatureLayout,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(
        layout: FeatureLayout,
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self, PredictorError> {
        if features.len() != targets.len() {
            return Err(PredictorError::Config(format!(
                "{} feature rows but {} targets",
                features.len(),
                targets.len()
            )));
        }
        if let Some(x) = features.iter().find(|x| x.len() != layout.len()) {
            return Err(PredictorError::LayoutMismatch {
                expected: layout.len(),
                got: x.len(),
            });
        }
        if features.iter().flatten().chain(&targets).any(|v| !v.is_finite()) {
            return Err(PredictorError::NonFinite("training data".into()));
        }
        Ok(Dataset {
            layout,
            features,
            targets,
        })
    }

    /// Encodes completed records; records without a metric are skipped.
    pub fn from_records<'a>(
        space: &SearchSpace,
        encoding: Encoding,
        records: impl IntoIterator<Item = &'a JobRecord>,
    ) -> Result<Self, PredictorError> {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for r in records {
            if let Some(m) = r.completed_metric() {
                features.push(space.encode(encoding, &r.config)?);
                targets.push(m);
            }
        }
        Dataset::new(space.layout(encoding), features, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.targets.clone()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            layout: self.layout.clone(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    /// At least two examples with at least two distinct metrics.
    pub fn check_trainable(&self) -> Result<(), PredictorError> {
        if self.len() < 2 {
            return Err(PredictorError::TooFewExamples(self.len()));
        }
        if self.targets.iter().all(|t| *t == self.targets[0]) {
            return Err(PredictorError::DegenerateTargets);
        }
        Ok(())
    }
}

/// Which model to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum Backend {
    Mlp(MlpConfig),
    Gbdt(GbdtParams),
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Mlp(MlpConfig::default())
    }
}

impl Backend {
    pub fn encoding(&self) -> Encoding {
        match self {
            Backend::Mlp(_) => Encoding::OneHot,
            Backend::Gbdt(_) => Encoding::Mixed,
        }
    }

    pub fn fit(&self, data: &Dataset, seed: u64) -> Result<Predictor, PredictorError> {
        match self {
            Backend::Mlp(cfg) => EnsemblePredictor::fit(data, cfg, seed).map(Predictor::Ensemble),
            Backend::Gbdt(params) => {
                data.check_trainable()?;
                GbdtPredictor::fit(data, params, seed).map(Predictor::Gbdt)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum Predictor {
    Ensemble(EnsemblePredictor),
    Gbdt(GbdtPredictor),
}

impl Predictor {
    pub fn layout(&self) -> &FeatureLayout {
        match self {
            Predictor::Ensemble(e) => &e.layout,
            Predictor::Gbdt(g) => &g.layout,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, PredictorError> {
        match self {
            Predictor::Ensemble(e) => e.predict(x),
            Predictor::Gbdt(g) => g.predict(x),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictorError> {
        let path = path.as_ref();
        let err = |reason: String| PredictorError::Persist {
            path: path.display().to_string(),
            reason,
        };
        let text = serde_json::to_string(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictorError> {
        let path = path.as_ref();
        let err = |reason: String| PredictorError::Persist {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

/// A predictor bound to the space whose encoding it was trained on.
#[derive(Debug, Clone)]
pub struct ConfigScorer<'a> {
    space: &'a SearchSpace,
    predictor: &'a Predictor,
}

impl<'a> ConfigScorer<'a> {
    pub fn new(space: &'a SearchSpace, predictor: &'a Predictor) -> Result<Self, PredictorError> {
        let layout = predictor.layout();
        if *layout != space.layout(layout.encoding) {
            return Err(PredictorError::IncompatibleLayout);
        }
        Ok(ConfigScorer { space, predictor })
    }

    pub fn score(&self, config: &ConfigPoint) -> Result<f64, PredictorError> {
        let x = self.space.encode(self.predictor.layout().encoding, config)?;
        self.predictor.predict(&x)
    }
}
