use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_params, grow, DecisionTree, Presorted, TreeParams};
use super::{check_xy, LearnError};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub m_try: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 5,
            m_try: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn tree_params(&self, n_features: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            m_try: self
                .m_try
                .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
                .max(1),
        }
    }
}

/// Bagged CART ensemble. Class probabilities are the mean of the trees'
/// leaf distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    params: ForestParams,
    n_classes: usize,
    n_features: usize,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Builds a forest from already-fitted trees (all must agree on shape).
    pub fn from_trees(params: ForestParams, trees: Vec<DecisionTree>) -> Result<Self, LearnError> {
        let first = trees.first().ok_or(LearnError::Empty)?;
        let (n_features, n_classes) = (first.n_features(), first.n_classes());
        if trees.iter().any(|t| t.n_features() != n_features || t.n_classes() != n_classes) {
            return Err(LearnError::Params("trees disagree on feature or class count".into()));
        }
        Ok(Self {
            params: ForestParams {
                n_trees: trees.len(),
                ..params
            },
            n_classes,
            n_features,
            trees,
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        if x.len() != self.n_features {
            return Err(LearnError::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut sum = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (s, p) in sum.iter_mut().zip(t.leaf(x)) {
                *s += p;
            }
        }
        let n = self.trees.len() as f64;
        Ok(sum.into_iter().map(|s| s / n).collect())
    }
}

/// Fits `params.n_trees` trees, tree `i` drawing its bootstrap sample and
/// feature subsets from stream `i` of `params.seed`.
pub fn fit_forest(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &ForestParams) -> Result<RandomForest, LearnError> {
    let d = check_xy(x, y.len())?;
    check_params(&params.tree_params(d), d, n_classes, y)?;
    fit_forest_presorted(&Presorted::new(x), y, n_classes, params)
}

pub(crate) fn fit_forest_presorted(
    data: &Presorted,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
) -> Result<RandomForest, LearnError> {
    if params.n_trees < 1 {
        return Err(LearnError::Params("n_trees must be >= 1".into()));
    }
    let tree_params = params.tree_params(data.n_features);
    check_params(&tree_params, data.n_features, n_classes, y)?;
    let n = data.n_rows;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(params.seed, i as u64);
            let mut weights = vec![0u32; n];
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1;
            }
            grow(data, y, &weights, n_classes, &tree_params, &mut rng)
        })
        .collect();
    Ok(RandomForest {
        params: *params,
        n_classes,
        n_features: data.n_features,
        trees,
    })
}
