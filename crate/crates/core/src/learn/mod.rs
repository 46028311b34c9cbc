//! From-scratch learners: CART trees, bagged forests, polynomial least
//! squares, a one-vs-rest wrapper and k-fold evaluation.

pub mod cv;
pub mod forest;
pub mod linreg;
pub mod ovr;
pub mod poly;
pub mod tree;

use thiserror::Error;

pub use cv::{
    cross_validate, downsample_negatives, kfold_partition, EvalReport, EvalRow, ForestClassifier, Learner,
    LinRegLearner, OvRLearner,
};
pub use forest::{fit_forest, ForestParams, RandomForest};
pub use linreg::{fit_linreg, LinearModel};
pub use ovr::{fit_ovr, predict_ovr, OvRModel};
pub use poly::{expanded_len, polynomial_features, PolynomialExpansion};
pub use tree::{fit_tree, DecisionTree, Node, TreeParams};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("empty training set")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Validates a design matrix against `n_y` targets and returns its width.
pub(crate) fn check_xy(x: &[Vec<f64>], n_y: usize) -> Result<usize, LearnError> {
    let first = x.first().ok_or(LearnError::Empty)?;
    if x.len() != n_y {
        return Err(LearnError::Dimension {
            expected: x.len(),
            got: n_y,
        });
    }
    let d = first.len();
    if d == 0 {
        return Err(LearnError::Params("rows have no features".into()));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(LearnError::Dimension {
                expected: d,
                got: row.len(),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite(format!("row {i}, column {j}")));
        }
    }
    Ok(d)
}
