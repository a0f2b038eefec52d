//! Least-squares gradient boosting over mixed numeric/categorical features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, PredictorError};
use crate::space::{FeatureLayout, SlotKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of rows each tree sees; 1.0 disables row sampling.
    pub subsample: f64,
    /// Fit on `ln(metric)` and exponentiate predictions.
    pub log_target: bool,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_trees: 300,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 2,
            subsample: 1.0,
            log_target: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum SplitRule {
    /// Go left when `x <= threshold`.
    Threshold { threshold: f64 },
    /// Go left when `x == level`.
    Equals { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

/// Regression tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let v = x[*feature];
                    let go_left = match rule {
                        SplitRule::Threshold { threshold } => v <= *threshold,
                        SplitRule::Equals { level } => v == *level,
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

struct Split {
    feature: usize,
    rule: SplitRule,
    gain: f64,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    r: &'a [f64],
    slots: &'a [SlotKind],
    params: &'a GbdtParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.r[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(&rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| {
            let v = self.x[i][split.feature];
            match split.rule {
                SplitRule::Threshold { threshold } => v <= threshold,
                SplitRule::Equals { level } => v == level,
            }
        });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            rule: split.rule,
            left,
            right,
        };
        id
    }

    /// Largest reduction in squared error; earlier features and smaller
    /// thresholds win ties.
    fn best_split(&self, rows: &[usize]) -> Option<Split> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| self.r[i]).sum();
        let base = total * total / n;
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<Split> = None;
        let mut consider = |feature: usize, rule: SplitRule, sl: f64, nl: usize| {
            let nr = rows.len() - nl;
            if nl < min_leaf || nr < min_leaf {
                return;
            }
            let sr = total - sl;
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - base;
            if gain > 1e-12 * (1.0 + base.abs()) && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Split { feature, rule, gain });
            }
        };
        let mut order: Vec<usize> = rows.to_vec();
        for (f, slot) in self.slots.iter().enumerate() {
            match slot {
                SlotKind::Numeric => {
                    order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
                    let mut sl = 0.0;
                    for k in 0..order.len() - 1 {
                        sl += self.r[order[k]];
                        let (lo, hi) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                        if lo < hi {
                            let threshold = lo + (hi - lo) / 2.0;
                            consider(f, SplitRule::Threshold { threshold }, sl, k + 1);
                        }
                    }
                }
                SlotKind::Categorical { levels } => {
                    let mut sums = vec![0.0; *levels];
                    let mut counts = vec![0usize; *levels];
                    for &i in rows {
                        let lv = self.x[i][f] as usize;
                        if lv < *levels {
                            sums[lv] += self.r[i];
                            counts[lv] += 1;
                        }
                    }
                    for lv in 0..*levels {
                        if counts[lv] > 0 && counts[lv] < rows.len() {
                            consider(f, SplitRule::Equals { level: lv as f64 }, sums[lv], counts[lv]);
                        }
                    }
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtPredictor {
    pub layout: FeatureLayout,
    pub params: GbdtParams,
    /// Mean training target (in the transformed space when `log_target`).
    pub initial: f64,
    pub trees: Vec<Tree>,
}

impl GbdtPredictor {
    pub fn fit(data: &Dataset, params: &GbdtParams, seed: u64) -> Result<Self, PredictorError> {
        if data.is_empty() {
            return Err(PredictorError::TooFewExamples(0));
        }
        if params.max_depth == 0 || !(params.subsample > 0.0 && params.subsample <= 1.0) {
            return Err(PredictorError::Config(
                "gbdt needs max_depth >= 1 and 0 < subsample <= 1".into(),
            ));
        }
        let targets: Vec<f64> = if params.log_target {
            if let Some(bad) = data.targets.iter().find(|t| **t <= 0.0) {
                return Err(PredictorError::Config(format!(
                    "log target needs positive metrics, found {bad}"
                )));
            }
            data.targets.iter().map(|t| t.ln()).collect()
        } else {
            data.targets.clone()
        };
        let n = targets.len();
        let initial = targets.iter().sum::<f64>() / n as f64;
        let mut model = GbdtPredictor {
            layout: data.layout.clone(),
            params: params.clone(),
            initial,
            trees: Vec::new(),
        };
        let mut fitted = vec![initial; n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample_n = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
        let mut all: Vec<usize> = (0..n).collect();
        for _ in 0..params.n_trees {
            let residual: Vec<f64> = targets.iter().zip(&fitted).map(|(t, f)| t - f).collect();
            if residual.iter().all(|r| *r == 0.0) {
                break;
            }
            let rows = if sample_n < n {
                all.shuffle(&mut rng);
                let mut rows = all[..sample_n].to_vec();
                rows.sort_unstable();
                rows
            } else {
                all.clone()
            };
            let mut builder = Builder {
                x: &data.features,
                r: &residual,
                slots: &data.layout.slots,
                params,
                nodes: Vec::new(),
            };
            builder.grow(rows, 0);
            let tree = Tree { nodes: builder.nodes };
            if tree.nodes.len() == 1 && sample_n == n {
                // no split improves the fit; later trees would be identical
                break;
            }
            for (f, x) in fitted.iter_mut().zip(&data.features) {
                *f += params.learning_rate * tree.predict(x);
            }
            model.trees.push(tree);
        }
        Ok(model)
    }

    /// Prediction in the transformed target space.
    pub fn raw_predict(&self, x: &[f64]) -> f64 {
        self.initial
            + self.params.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, PredictorError> {
        if x.len() != self.layout.len() {
            return Err(PredictorError::LayoutMismatch {
                expected: self.layout.len(),
                got: x.len(),
            });
        }
        let raw = self.raw_predict(x);
        Ok(if self.params.log_target { raw.exp() } else { raw })
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, PredictorError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}
