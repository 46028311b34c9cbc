use serde::{Deserialize, Serialize};

use super::forest::{fit_forest_presorted, ForestParams, RandomForest};
use super::tree::Presorted;
use super::{check_xy, LearnError};
use crate::data::Taxonomy;
use crate::rng::derive_seed;

/// One binary forest per taxonomy label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvRModel {
    pub taxonomy: Taxonomy,
    pub per_label: Vec<RandomForest>,
    /// Labels that never occurred in training; their forests predict 0.
    pub absent_labels: Vec<String>,
}

/// Forest seed for label `index`.
pub fn label_seed(root: u64, index: usize) -> u64 {
    derive_seed(root, index as u64)
}

/// `label_sets[i]` holds the taxonomy indices present on row `i`.
pub fn fit_ovr(
    x: &[Vec<f64>],
    label_sets: &[Vec<usize>],
    taxonomy: &Taxonomy,
    params: &ForestParams,
) -> Result<OvRModel, LearnError> {
    check_xy(x, label_sets.len())?;
    if let Some(bad) = label_sets.iter().flatten().find(|&&l| l >= taxonomy.len()) {
        return Err(LearnError::Params(format!("label index {bad} outside the taxonomy")));
    }
    let data = Presorted::new(x);
    let mut per_label = Vec::with_capacity(taxonomy.len());
    let mut absent_labels = Vec::new();
    for (l, name) in taxonomy.labels().iter().enumerate() {
        let y: Vec<usize> = label_sets.iter().map(|s| usize::from(s.contains(&l))).collect();
        if !y.contains(&1) {
            absent_labels.push(name.clone());
        }
        let p = ForestParams {
            seed: label_seed(params.seed, l),
            ..*params
        };
        per_label.push(fit_forest_presorted(&data, &y, 2, &p)?);
    }
    Ok(OvRModel {
        taxonomy: taxonomy.clone(),
        per_label,
        absent_labels,
    })
}

impl OvRModel {
    /// Positive-class probability per label, each independent.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        self.per_label
            .iter()
            .map(|f| f.predict_proba(x).map(|p| p[1]))
            .collect()
    }
}

pub fn predict_ovr(model: &OvRModel, x: &[f64]) -> Result<Vec<f64>, LearnError> {
    model.predict(x)
}
