//! k-fold evaluation and the learner wrappers it drives.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, ForestParams, RandomForest};
use super::linreg::fit_linreg;
use super::ovr::fit_ovr;
use super::LearnError;
use crate::data::Taxonomy;
use crate::rng::{derive_seed, stream_rng};

/// Stream offset for negative-downsampling seeds, kept apart from tree streams.
const SAMPLE_STREAM: u64 = 1 << 32;

/// Something that can be trained on one part of the data and scored on another.
pub trait Learner: Sync {
    type Target: Clone + Sync;

    fn name(&self) -> &str;

    fn metric(&self) -> &str;

    /// Trains on the first pair and scores on the second. `fold` is passed so
    /// learners can derive per-fold seeds.
    fn fit_score(
        &self,
        x_train: &[Vec<f64>],
        y_train: &[Self::Target],
        x_test: &[Vec<f64>],
        y_test: &[Self::Target],
        fold: usize,
    ) -> Result<f64, LearnError>;
}

/// Class counts before and after negative downsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceInfo {
    pub positives: usize,
    pub negatives: usize,
    pub negatives_kept: usize,
}

/// Indices to keep so that negatives number at most `ratio` times the
/// positives. Returned ascending. Nothing is dropped when there are no
/// positives or the ratio is already met.
pub fn downsample_negatives(y: &[usize], ratio: f64, seed: u64) -> Vec<usize> {
    let positives: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 0).collect();
    let mut negatives: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
    let cap = (ratio.max(0.0) * positives.len() as f64).floor() as usize;
    if positives.is_empty() || negatives.len() <= cap {
        return (0..y.len()).collect();
    }
    let mut rng = stream_rng(seed, 0);
    let (chosen, _) = negatives.partial_shuffle(&mut rng, cap);
    let mut keep: Vec<usize> = chosen.to_vec();
    keep.extend(positives);
    keep.sort_unstable();
    keep
}

/// Binary forest classifier scored by accuracy at a 0.5 threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestClassifier {
    pub params: ForestParams,
    /// Maximum negative:positive ratio in training data; `None` keeps all rows.
    pub negative_ratio: Option<f64>,
}

impl ForestClassifier {
    /// Fits on the (optionally downsampled) data. `tag` selects the sampling stream.
    pub fn fit(&self, x: &[Vec<f64>], y: &[usize], tag: u64) -> Result<(RandomForest, BalanceInfo), LearnError> {
        let positives = y.iter().filter(|&&c| c != 0).count();
        let negatives = y.len() - positives;
        let Some(ratio) = self.negative_ratio else {
            let f = fit_forest(x, y, 2, &self.params)?;
            return Ok((f, BalanceInfo { positives, negatives, negatives_kept: negatives }));
        };
        let keep = downsample_negatives(y, ratio, derive_seed(self.params.seed, SAMPLE_STREAM.wrapping_add(tag)));
        let xs: Vec<Vec<f64>> = keep.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<usize> = keep.iter().map(|&i| y[i]).collect();
        let f = fit_forest(&xs, &ys, 2, &self.params)?;
        let info = BalanceInfo {
            positives,
            negatives,
            negatives_kept: keep.len() - positives,
        };
        Ok((f, info))
    }
}

pub fn predict_class(forest: &RandomForest, x: &[f64]) -> Result<usize, LearnError> {
    let p = forest.predict_proba(x)?;
    Ok(usize::from(p[1] >= 0.5))
}

impl Learner for ForestClassifier {
    type Target = usize;

    fn name(&self) -> &str {
        "M_crime"
    }

    fn metric(&self) -> &str {
        "accuracy"
    }

    fn fit_score(&self, xt: &[Vec<f64>], yt: &[usize], xs: &[Vec<f64>], ys: &[usize], fold: usize) -> Result<f64, LearnError> {
        let (forest, _) = self.fit(xt, yt, fold as u64)?;
        let mut correct = 0usize;
        for (x, &y) in xs.iter().zip(ys) {
            correct += usize::from(predict_class(&forest, x)? == y);
        }
        Ok(correct as f64 / ys.len() as f64)
    }
}

/// Polynomial least squares scored by R².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinRegLearner {
    pub degree: usize,
}

/// Coefficient of determination. A constant target scores 1 when matched
/// exactly and 0 otherwise.
pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(pred).map(|(v, p)| (v - p).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

impl Learner for LinRegLearner {
    type Target = f64;

    fn name(&self) -> &str {
        "M_fine"
    }

    fn metric(&self) -> &str {
        "r2"
    }

    fn fit_score(&self, xt: &[Vec<f64>], yt: &[f64], xs: &[Vec<f64>], ys: &[f64], _fold: usize) -> Result<f64, LearnError> {
        let m = fit_linreg(xt, yt, self.degree)?;
        let pred: Vec<f64> = xs.iter().map(|x| m.predict(x)).collect::<Result<_, _>>()?;
        Ok(r_squared(ys, &pred))
    }
}

/// One-vs-rest forests scored by subset accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvRLearner {
    pub params: ForestParams,
    pub taxonomy: Taxonomy,
}

/// Labels whose probability reaches 0.5, ascending.
pub fn predicted_set(probs: &[f64]) -> Vec<usize> {
    (0..probs.len()).filter(|&l| probs[l] >= 0.5).collect()
}

fn same_set(pred: &[usize], truth: &[usize]) -> bool {
    let mut t = truth.to_vec();
    t.sort_unstable();
    t.dedup();
    pred == t.as_slice()
}

impl Learner for OvRLearner {
    type Target = Vec<usize>;

    fn name(&self) -> &str {
        "M_type"
    }

    fn metric(&self) -> &str {
        "subset_accuracy"
    }

    fn fit_score(
        &self,
        xt: &[Vec<f64>],
        yt: &[Vec<usize>],
        xs: &[Vec<f64>],
        ys: &[Vec<usize>],
        _fold: usize,
    ) -> Result<f64, LearnError> {
        let m = fit_ovr(xt, yt, &self.taxonomy, &self.params)?;
        let mut correct = 0usize;
        for (x, y) in xs.iter().zip(ys) {
            correct += usize::from(same_set(&predicted_set(&m.predict(x)?), y));
        }
        Ok(correct as f64 / ys.len() as f64)
    }
}

/// Test-fold indices: a seeded shuffle of `0..n` cut into `k` contiguous
/// folds, the first `n % k` folds one longer than the rest.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, LearnError> {
    if k < 2 {
        return Err(LearnError::Params(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(LearnError::Params(format!("k = {k} exceeds the {n} available rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// One model's fold scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub metric: String,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `fold_scores`.
    pub std: f64,
}

impl EvalRow {
    pub fn new(model: impl Into<String>, metric: impl Into<String>, fold_scores: Vec<f64>) -> Self {
        let n = fold_scores.len() as f64;
        let mean = fold_scores.iter().sum::<f64>() / n;
        let std = (fold_scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
        Self {
            model: model.into(),
            metric: metric.into(),
            fold_scores,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, model: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// Appends the rows of `other`; fold counts must agree.
    pub fn extend(&mut self, other: EvalReport) -> Result<(), LearnError> {
        if other.k != self.k {
            return Err(LearnError::Params(format!("fold counts differ: {} vs {}", self.k, other.k)));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for EvalReport {
    /// Fixed-width table: model, metric, mean, std, then one column per fold.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<8} {:<16} {:>7} {:>7}", "model", "metric", "mean", "std")?;
        for i in 1..=self.k {
            write!(f, " {:>7}", format!("fold{i}"))?;
        }
        writeln!(f)?;
        for r in &self.rows {
            write!(f, "{:<8} {:<16} {:>7.4} {:>7.4}", r.model, r.metric, r.mean, r.std)?;
            for s in &r.fold_scores {
                write!(f, " {s:>7.4}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Seeded k-fold evaluation; folds run in order.
pub fn cross_validate<L: Learner>(
    learner: &L,
    x: &[Vec<f64>],
    y: &[L::Target],
    k: usize,
    seed: u64,
) -> Result<EvalReport, LearnError> {
    if x.len() != y.len() {
        return Err(LearnError::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    let folds = kfold_partition(x.len(), k, seed)?;
    let mut in_test = vec![usize::MAX; x.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_test[i] = f;
        }
    }
    let mut scores = Vec::with_capacity(k);
    for (f, fold) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..x.len()).filter(|&i| in_test[i] != f).collect();
        let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let yt: Vec<L::Target> = train.iter().map(|&i| y[i].clone()).collect();
        let xs: Vec<Vec<f64>> = fold.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<L::Target> = fold.iter().map(|&i| y[i].clone()).collect();
        scores.push(learner.fit_score(&xt, &yt, &xs, &ys, f)?);
    }
    Ok(EvalReport {
        k,
        rows: vec![EvalRow::new(learner.name(), learner.metric(), scores)],
    })
}
