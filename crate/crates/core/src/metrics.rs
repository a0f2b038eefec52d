//! Rank-correlation statistics and the training-set-size study.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::predictor::{Dataset, GbdtParams, GbdtPredictor, PredictorError};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrelationError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("non-finite input value")]
    NonFinite,
    #[error("correlation undefined: one side has zero variance")]
    Undefined,
}

fn check(x: &[f64], y: &[f64]) -> Result<(), CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CorrelationError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFinite);
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::Undefined);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall tau-b in O(n log n) (Knight's algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check(x, y)?;
    let n = x.len();
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let tie_pairs = |runs: &mut dyn Iterator<Item = u64>| runs.map(|t| t * (t - 1) / 2).sum::<u64>();
    let total = (n as u64) * (n as u64 - 1) / 2;

    let x_ties = tie_pairs(&mut run_lengths(&pairs, |a, b| a.0 == b.0));
    let joint_ties = tie_pairs(&mut run_lengths(&pairs, |a, b| a == b));

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);
    let y_ties = tie_pairs(&mut run_lengths(&ys, |a, b| a == b));

    let denom = ((total - x_ties) as f64) * ((total - y_ties) as f64);
    if denom == 0.0 {
        return Err(CorrelationError::Undefined);
    }
    let num = total as f64 - x_ties as f64 - y_ties as f64 + joint_ties as f64 - 2.0 * swaps as f64;
    Ok((num / denom.sqrt()).clamp(-1.0, 1.0))
}

fn run_lengths<'a, T>(
    v: &'a [T],
    same: impl Fn(&T, &T) -> bool + 'a,
) -> impl Iterator<Item = u64> + 'a {
    let mut i = 0;
    std::iter::from_fn(move || {
        if i >= v.len() {
            return None;
        }
        let mut j = i + 1;
        while j < v.len() && same(&v[j], &v[i]) {
            j += 1;
        }
        let len = (j - i) as u64;
        i = j;
        Some(len)
    })
}

/// Stable merge sort returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub kendall: f64,
    pub pearson: f64,
    pub spearman: f64,
    pub n: usize,
}

impl CorrelationReport {
    pub fn compute(predicted: &[f64], actual: &[f64]) -> Result<Self, CorrelationError> {
        Ok(CorrelationReport {
            kendall: kendall_tau(predicted, actual)?,
            pearson: pearson(predicted, actual)?,
            spearman: spearman(predicted, actual)?,
            n: predicted.len(),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CurveError {
    #[error("training size {size} must be at least 2 and below the pool size {pool}")]
    BadSize { size: usize, pool: usize },
    #[error("need at least one perturbation")]
    NoPerturbations,
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub size: usize,
    pub kendall: MeanStd,
    pub pearson: MeanStd,
    pub spearman: MeanStd,
}

/// Correlation versus training-set size. For each size, `perturbations`
/// random subsets of `pool` train a GBDT that is scored on the fixed `valid`
/// set.
pub fn learning_curve(
    pool: &Dataset,
    valid: &Dataset,
    sizes: &[usize],
    perturbations: usize,
    params: &GbdtParams,
    seed: u64,
) -> Result<Vec<CurvePoint>, CurveError> {
    if perturbations == 0 {
        return Err(CurveError::NoPerturbations);
    }
    for &size in sizes {
        if size < 2 || size > pool.len() {
            return Err(CurveError::BadSize {
                size,
                pool: pool.len(),
            });
        }
    }
    let actual = valid.targets();
    sizes
        .iter()
        .map(|&size| {
            let reports = (0..perturbations)
                .into_par_iter()
                .map(|p| {
                    let s = derive_seed(seed, &format!("curve/{size}/{p}"));
                    let mut idx: Vec<usize> = (0..pool.len()).collect();
                    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
                    idx.truncate(size);
                    idx.sort_unstable();
                    let subset = pool.subset(&idx);
                    let model = GbdtPredictor::fit(&subset, params, s)?;
                    let predicted = model.predict_batch(&valid.features)?;
                    Ok(CorrelationReport::compute(&predicted, &actual)?)
                })
                .collect::<Result<Vec<_>, CurveError>>()?;
            let pick = |f: fn(&CorrelationReport) -> f64| {
                MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>())
            };
            Ok(CurvePoint {
                size,
                kendall: pick(|r| r.kendall),
                pearson: pick(|r| r.pearson),
                spearman: pick(|r| r.spearman),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_kendall(x: &[f64], y: &[f64]) -> f64 {
        let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let sx = (x[i] - x[j]).signum() as i64 * i64::from(x[i] != x[j]);
                let sy = (y[i] - y[j]).signum() as i64 * i64::from(y[i] != y[j]);
                match (sx, sy) {
                    (0, 0) => {}
                    (0, _) => tx += 1,
                    (_, 0) => ty += 1,
                    _ if sx == sy => c += 1,
                    _ => d += 1,
                }
            }
        }
        (c - d) as f64 / (((c + d + tx) * (c + d + ty)) as f64).sqrt()
    }

    #[test]
    fn pearson_linear_cases() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 10]), Err(CorrelationError::Undefined));
        assert_eq!(pearson(&[1.0], &[2.0]), Err(CorrelationError::TooShort(1)));
    }

    #[test]
    fn spearman_monotone_and_reversed() {
        let x: Vec<f64> = (1..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + v.exp().sqrt()).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kendall_small_cases() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        let one_swap = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((one_swap - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&[1.0, 1.0], &[1.0, 2.0]), Err(CorrelationError::Undefined));
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn kendall_matches_pair_counting_on_tied_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(2..120);
            let x: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8))).collect();
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8))).collect();
            let fast = kendall_tau(&x, &y);
            let slow = brute_kendall(&x, &y);
            match fast {
                Ok(t) => assert!((t - slow).abs() < 1e-12, "{t} vs {slow}"),
                Err(_) => assert!(slow.is_nan()),
            }
        }
    }

    proptest! {
        #[test]
        fn correlations_are_symmetric_and_bounded(
            pairs in prop::collection::vec((0i32..20, 0i32..20), 3..60)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            for f in [pearson, spearman, kendall_tau] {
                match (f(&x, &y), f(&y, &x)) {
                    (Ok(a), Ok(b)) => {
                        prop_assert!((a - b).abs() < 1e-12);
                        prop_assert!((-1.0..=1.0).contains(&a));
                    }
                    (Err(a), Err(b)) => prop_assert_eq!(a, b),
                    _ => prop_assert!(false, "asymmetric failure"),
                }
            }
        }

        #[test]
        fn rank_correlations_invariant_under_monotone_maps(
            pairs in prop::collection::vec((0i32..50, 0i32..50), 3..60)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            let fx: Vec<f64> = x.iter().map(|v| (v / 7.0).exp()).collect();
            let ay: Vec<f64> = y.iter().map(|v| 3.0 * v - 2.0).collect();
            if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&fx, &y)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            if let (Ok(a), Ok(b)) = (kendall_tau(&x, &y), kendall_tau(&fx, &y)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            if let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&x, &ay)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
