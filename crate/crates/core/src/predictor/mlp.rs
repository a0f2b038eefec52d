//! Single-hidden-layer rectifier network trained with a pairwise margin
//! ranking loss, and the ensemble built from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::amsgrad::AmsgradState;
use super::loss::{ranking_loss, ranking_loss_grad};
use super::{Dataset, PredictorError};
use crate::space::FeatureLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub members: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    /// Example pairs drawn per optimizer step.
    pub batch_pairs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub margin: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            members: 10,
            hidden: 1600,
            dropout: 0.5,
            epochs: 200,
            batch_pairs: 64,
            lr: 0.001,
            weight_decay: 0.005,
            margin: 0.001,
        }
    }
}

/// Parameters live in one flat buffer: `w1` (input-major, `input_dim x hidden`),
/// then `b1`, `w2`, and the scalar `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

/// Non-zero entries of a feature vector.
type Sparse = Vec<(usize, f64)>;

fn sparse(x: &[f64]) -> Sparse {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect()
}

impl MlpModel {
    pub fn param_count(input_dim: usize, hidden: usize) -> usize {
        input_dim * hidden + 2 * hidden + 1
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every layer.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count(input_dim, hidden));
        let a1 = 1.0 / (input_dim.max(1) as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        params.extend((0..input_dim * hidden + hidden).map(|_| rng.gen_range(-a1..a1)));
        params.extend((0..hidden + 1).map(|_| rng.gen_range(-a2..a2)));
        MlpModel {
            input_dim,
            hidden,
            params,
        }
    }

    fn b1_offset(&self) -> usize {
        self.input_dim * self.hidden
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.forward(&sparse(x), None, &mut h)
    }

    /// Writes post-rectifier hidden activations into `h` and returns the
    /// score. `mask` holds per-unit multipliers (0 or 1/(1-p)).
    fn forward(&self, x: &[(usize, f64)], mask: Option<&[f64]>, h: &mut [f64]) -> f64 {
        let hd = self.hidden;
        h.copy_from_slice(&self.params[self.b1_offset()..self.w2_offset()]);
        for &(i, xi) in x {
            let row = &self.params[i * hd..(i + 1) * hd];
            for (hj, w) in h.iter_mut().zip(row) {
                *hj += xi * w;
            }
        }
        let w2 = &self.params[self.w2_offset()..self.b2_offset()];
        let mut s = self.params[self.b2_offset()];
        match mask {
            Some(m) => {
                for j in 0..hd {
                    h[j] = h[j].max(0.0);
                    s += w2[j] * h[j] * m[j];
                }
            }
            None => {
                for j in 0..hd {
                    h[j] = h[j].max(0.0);
                    s += w2[j] * h[j];
                }
            }
        }
        s
    }

    /// Accumulates `dscore * d(score)/d(params)` into `grad`.
    fn backward(
        &self,
        x: &[(usize, f64)],
        mask: Option<&[f64]>,
        h: &[f64],
        dscore: f64,
        grad: &mut [f64],
    ) {
        let hd = self.hidden;
        let (b1o, w2o, b2o) = (self.b1_offset(), self.w2_offset(), self.b2_offset());
        grad[b2o] += dscore;
        let w2 = &self.params[w2o..b2o];
        let mut dz = vec![0.0; hd];
        for j in 0..hd {
            let m = mask.map_or(1.0, |m| m[j]);
            grad[w2o + j] += dscore * h[j] * m;
            if h[j] > 0.0 {
                dz[j] = dscore * w2[j] * m;
            }
        }
        for j in 0..hd {
            grad[b1o + j] += dz[j];
        }
        for &(i, xi) in x {
            let row = &mut grad[i * hd..(i + 1) * hd];
            for (g, d) in row.iter_mut().zip(&dz) {
                *g += xi * d;
            }
        }
    }

    /// Loss of one ordered pair without dropout, and its parameter gradient.
    pub fn pair_loss_and_grad(&self, xa: &[f64], xb: &[f64], label: f64, margin: f64) -> (f64, Vec<f64>) {
        let (sa_x, sb_x) = (sparse(xa), sparse(xb));
        let mut ha = vec![0.0; self.hidden];
        let mut hb = vec![0.0; self.hidden];
        let sa = self.forward(&sa_x, None, &mut ha);
        let sb = self.forward(&sb_x, None, &mut hb);
        let mut grad = vec![0.0; self.params.len()];
        let (ga, gb) = ranking_loss_grad(sa, sb, label, margin);
        if ga != 0.0 {
            self.backward(&sa_x, None, &ha, ga, &mut grad);
            self.backward(&sb_x, None, &hb, gb, &mut grad);
        }
        (ranking_loss(sa, sb, label, margin), grad)
    }
}

/// Compares analytic ranking-loss gradients with central finite differences
/// (step `1e-5`) and returns the largest relative error over all parameters.
///
/// When the pair sits within `1e-6` of the hinge kink the margin is nudged by
/// `1e-3` so that both derivatives are taken on the same linear piece.
pub fn gradient_check(model: &MlpModel, xa: &[f64], xb: &[f64], label: f64, margin: f64) -> f64 {
    let (sa, sb) = (model.predict(xa), model.predict(xb));
    let margin = if (-label * (sa - sb) + margin).abs() < 1e-6 {
        margin + 1e-3
    } else {
        margin
    };
    let (_, analytic) = model.pair_loss_and_grad(xa, xb, label, margin);
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = ranking_loss(probe.predict(xa), probe.predict(xb), label, margin);
        probe.params[i] = orig - h;
        let down = ranking_loss(probe.predict(xa), probe.predict(xb), label, margin);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

/// Trains one member for `config.epochs` epochs of `ceil(N / batch_pairs)`
/// steps each.
pub fn fit_member(data: &Dataset, config: &MlpConfig, seed: u64) -> Result<MlpModel, PredictorError> {
    let mut model = MlpModel::init(data.dim(), config.hidden, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_d40f);
    let mut opt = AmsgradState::new(model.params.len());
    let xs: Vec<Sparse> = data.features.iter().map(|x| sparse(x)).collect();
    let y = &data.targets;
    let n = data.len();
    let hd = config.hidden;
    let steps_per_epoch = n.div_ceil(config.batch_pairs);
    let keep = 1.0 - config.dropout;
    let use_dropout = config.dropout > 0.0;

    let mut grad = vec![0.0; model.params.len()];
    let (mut ha, mut hb) = (vec![0.0; hd], vec![0.0; hd]);
    let (mut ma, mut mb) = (vec![1.0; hd], vec![1.0; hd]);
    let draw_mask = |m: &mut [f64], rng: &mut ChaCha8Rng| {
        for v in m.iter_mut() {
            *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
    };

    for _epoch in 0..config.epochs {
        for _ in 0..steps_per_epoch {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let pairs: Vec<(usize, usize)> = (0..config.batch_pairs)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .filter(|&(a, b)| y[a] != y[b])
                .collect();
            if pairs.is_empty() {
                continue;
            }
            let scale = 1.0 / pairs.len() as f64;
            for &(a, b) in &pairs {
                let label = if y[a] > y[b] { 1.0 } else { -1.0 };
                let (mask_a, mask_b) = if use_dropout {
                    draw_mask(&mut ma, &mut rng);
                    draw_mask(&mut mb, &mut rng);
                    (Some(ma.as_slice()), Some(mb.as_slice()))
                } else {
                    (None, None)
                };
                let sa = model.forward(&xs[a], mask_a, &mut ha);
                let sb = model.forward(&xs[b], mask_b, &mut hb);
                let (ga, gb) = ranking_loss_grad(sa, sb, label, config.margin);
                if ga != 0.0 {
                    model.backward(&xs[a], mask_a, &ha, ga * scale, &mut grad);
                    model.backward(&xs[b], mask_b, &hb, gb * scale, &mut grad);
                }
            }
            opt.step(&mut model.params, &grad, config.lr, config.weight_decay)?;
        }
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(PredictorError::NonFinite("parameters diverged".into()));
    }
    Ok(model)
}

/// Ensemble of identically shaped ranking networks; the score is the mean of
/// member scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePredictor {
    pub layout: FeatureLayout,
    pub config: MlpConfig,
    pub member_seeds: Vec<u64>,
    pub members: Vec<MlpModel>,
}

impl EnsemblePredictor {
    /// Member `i` is initialized and trained from `seed + i`, all on the same data.
    pub fn fit(data: &Dataset, config: &MlpConfig, seed: u64) -> Result<Self, PredictorError> {
        data.check_trainable()?;
        if config.members == 0 {
            return Err(PredictorError::Config("ensemble needs at least one member".into()));
        }
        let member_seeds: Vec<u64> = (0..config.members as u64).map(|i| seed.wrapping_add(i)).collect();
        let members = member_seeds
            .par_iter()
            .map(|&s| fit_member(data, config, s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EnsemblePredictor {
            layout: data.layout.clone(),
            config: config.clone(),
            member_seeds,
            members,
        })
    }

    /// Member scores are summed in sorted order, so the result does not
    /// depend on member order.
    pub fn predict(&self, x: &[f64]) -> Result<f64, PredictorError> {
        if x.len() != self.layout.len() {
            return Err(PredictorError::LayoutMismatch {
                expected: self.layout.len(),
                got: x.len(),
            });
        }
        let sx = sparse(x);
        let mut h = vec![0.0; self.config.hidden];
        let mut scores: Vec<f64> = self
            .members
            .iter()
            .map(|m| {
                if h.len() != m.hidden {
                    h.resize(m.hidden, 0.0);
                }
                m.forward(&sx, None, &mut h)
            })
            .collect();
        scores.sort_by(f64::total_cmp);
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::spearman;
    use crate::space::{Encoding, SlotKind};

    fn dense_layout(d: usize) -> FeatureLayout {
        FeatureLayout {
            encoding: Encoding::OneHot,
            slots: vec![SlotKind::Numeric; d],
        }
    }

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn gradient_check_on_small_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..5 {
            let model = MlpModel::init(8, 16, seed);
            let xa = random_vec(&mut rng, 8);
            let xb = random_vec(&mut rng, 8);
            let (sa, sb) = (model.predict(&xa), model.predict(&xb));
            // order the pair so the hinge is active
            let label = if sa > sb { -1.0 } else { 1.0 };
            let err = gradient_check(&model, &xa, &xb, label, 0.001);
            assert!(err <= 1e-4, "seed {seed}: max rel error {err}");
            let xa2: Vec<f64> = xa.iter().map(|v| 2.0 * v).collect();
            let xb2: Vec<f64> = xb.iter().map(|v| 2.0 * v).collect();
            let err2 = gradient_check(&model, &xa2, &xb2, label, 0.001);
            assert!(err2 <= 1e-4, "seed {seed}: scaled inputs error {err2}");
        }
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        let model = MlpModel::init(4, 8, 3);
        let xa = vec![1.0, 0.0, 0.5, -0.5];
        let xb = vec![0.0, 1.0, -0.5, 0.5];
        let (sa, sb) = (model.predict(&xa), model.predict(&xb));
        let label = if sa > sb { 1.0 } else { -1.0 };
        // correctly ordered with a zero margin: no loss
        let (loss, grad) = model.pair_loss_and_grad(&xa, &xb, label, 0.0);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn ensemble_of_constant_members_returns_constant() {
        let mut m = MlpModel::init(3, 4, 0);
        let n = m.params.len();
        m.params.iter_mut().for_each(|p| *p = 0.0);
        m.params[n - 1] = 2.5;
        let e = EnsemblePredictor {
            layout: dense_layout(3),
            config: MlpConfig { hidden: 4, ..MlpConfig::default() },
            member_seeds: vec![0, 1, 2],
            members: vec![m.clone(), m.clone(), m],
        };
        assert_eq!(e.predict(&[1.0, 0.0, 1.0]).unwrap(), 2.5);
        assert!(matches!(e.predict(&[1.0]), Err(PredictorError::LayoutMismatch { .. })));
    }

    #[test]
    fn ensemble_score_ignores_member_order() {
        let members: Vec<MlpModel> = (0..5).map(|s| MlpModel::init(6, 10, s)).collect();
        let mut e = EnsemblePredictor {
            layout: dense_layout(6),
            config: MlpConfig { hidden: 10, ..MlpConfig::default() },
            member_seeds: (0..5).collect(),
            members,
        };
        let x = [0.3, -1.0, 0.0, 2.0, 0.5, 1.0];
        let before = e.predict(&x).unwrap();
        let mean = e.members.iter().map(|m| m.predict(&x)).sum::<f64>() / 5.0;
        assert!((before - mean).abs() < 1e-12);
        e.members.reverse();
        e.members.swap(0, 3);
        assert_eq!(e.predict(&x).unwrap(), before);
    }

    fn small_config() -> MlpConfig {
        MlpConfig {
            members: 3,
            hidden: 32,
            epochs: 150,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn ranks_a_monotone_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let make = |rng: &mut ChaCha8Rng, n: usize| {
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (x[0] * 1.5).exp() + x[0]).collect();
            Dataset::new(dense_layout(1), xs, ys).unwrap()
        };
        let train = make(&mut rng, 200);
        let test = make(&mut rng, 100);
        let model = EnsemblePredictor::fit(&train, &small_config(), 4).unwrap();
        let pred: Vec<f64> = test.features.iter().map(|x| model.predict(x).unwrap()).collect();
        let rho = spearman(&pred, &test.targets).unwrap();
        assert!(rho >= 0.95, "spearman {rho}");
    }

    #[test]
    fn orders_two_examples() {
        let data = Dataset::new(dense_layout(2), vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).unwrap();
        let model = EnsemblePredictor::fit(&data, &small_config(), 0).unwrap();
        assert!(model.predict(&[0.0, 1.0]).unwrap() > model.predict(&[1.0, 0.0]).unwrap());
    }

    #[test]
    fn degenerate_targets_are_rejected() {
        let data = Dataset::new(dense_layout(1), vec![vec![0.0], vec![1.0], vec![2.0]], vec![3.0; 3]).unwrap();
        assert!(matches!(
            EnsemblePredictor::fit(&data, &small_config(), 0),
            Err(PredictorError::DegenerateTargets)
        ));
    }

    #[test]
    fn fitting_is_deterministic() {
        let data = Dataset::new(
            dense_layout(2),
            (0..20).map(|i| vec![f64::from(i % 5), f64::from(i % 3)]).collect(),
            (0..20).map(|i| f64::from(i % 5) * 2.0 - f64::from(i % 3)).collect(),
        )
        .unwrap();
        let cfg = MlpConfig { epochs: 20, ..small_config() };
        let a = EnsemblePredictor::fit(&data, &cfg, 42).unwrap();
        let b = EnsemblePredictor::fit(&data, &cfg, 42).unwrap();
        assert_eq!(a, b);
    }
}
