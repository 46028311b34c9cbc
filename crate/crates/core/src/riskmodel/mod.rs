//! The three-part risk model: crime occurrence, conditional fine size and
//! crime type, plus per-cell predictions built from them.

mod persist;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{PoiSet, Taxonomy};
use crate::features::{CellGrid, CellLabels, FeatureConfig, FeatureMatrix};
use crate::geogrid::Geohash;
use crate::learn::cv::{BalanceInfo, ForestClassifier, LinRegLearner, OvRLearner};
use crate::learn::{cross_validate, fit_linreg, fit_ovr, EvalReport, ForestParams, LearnError, LinearModel, OvRModel, RandomForest};
use crate::rng::derive_seed;

pub use persist::{FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("training error: {0}")]
    Training(String),
    #[error("feature schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model file: {0}")]
    Format(String),
    #[error("unsupported model format version {found} (this build reads {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("model file integrity check failed: {0}")]
    Integrity(String),
}

/// Lower edges of the USD fine brackets; the last bracket is open-ended.
pub fn default_brackets() -> Vec<f64> {
    vec![0.0, 1e3, 1e4, 1e5, 1e6, 1e7]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub forest: ForestParams,
    pub fine_degree: usize,
    /// Maximum negative:positive ratio for the crime model; `None` disables downsampling.
    pub negative_ratio: Option<f64>,
    pub cv_folds: usize,
    pub severity_brackets: Vec<f64>,
    pub top_k: usize,
    /// Optional label stored in the metadata. Left empty so that retraining
    /// produces byte-identical files.
    pub timestamp: Option<String>,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            fine_degree: 2,
            negative_ratio: Some(3.0),
            cv_folds: 10,
            severity_brackets: default_brackets(),
            top_k: 5,
            timestamp: None,
        }
    }
}

/// What a server needs to rebuild feature rows for arbitrary cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub precision: usize,
    pub config: FeatureConfig,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub timestamp: Option<String>,
    pub seed: u64,
    pub params: TrainParams,
    /// sha256 of the training features and labels.
    pub data_fingerprint: String,
    /// sha256 of the POI sets, when known; compared against serving data.
    pub poi_fingerprint: Option<String>,
    pub balance: BalanceInfo,
    pub n_cells: usize,
    /// Labels that never occurred among positive cells.
    pub absent_labels: Vec<String>,
    pub eval: EvalReport,
    /// Sub-models skipped during evaluation, with the reason.
    pub eval_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WccewsModel {
    pub m_crime: RandomForest,
    pub m_fine: LinearModel,
    pub m_type: OvRModel,
    pub feature_schema: Vec<String>,
    pub taxonomy: Taxonomy,
    pub features: FeatureSpec,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProb {
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityBin {
    pub lower_usd: f64,
    /// `None` for the open-ended top bracket.
    pub upper_usd: Option<f64>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPrediction {
    pub geohash: Geohash,
    pub p_crime: f64,
    /// Fine expected if a crime occurs in the cell.
    pub expected_fine_usd: f64,
    /// `p_crime * expected_fine_usd`.
    pub unconditional_fine_usd: f64,
    pub type_probs: Vec<LabelProb>,
    pub severity_histogram: Vec<SeverityBin>,
    pub top_risks: Vec<LabelProb>,
}

/// sha256 over the bit patterns of a feature matrix and its labels.
pub fn data_fingerprint(features: &FeatureMatrix, labels: &CellLabels) -> String {
    let mut h = Sha256::new();
    for name in &features.column_names {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
    }
    for row in &features.rows {
        for v in row {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    for (i, &p) in labels.crime_present.iter().enumerate() {
        h.update([u8::from(p)]);
        h.update(labels.log_fine[i].map_or(u64::MAX, f64::to_bits).to_le_bytes());
        h.update((labels.type_labels[i].len() as u64).to_le_bytes());
        for &t in &labels.type_labels[i] {
            h.update((t as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// sha256 over POI categories and coordinates, in the given order.
pub fn poi_fingerprint(sets: &[PoiSet]) -> String {
    let mut h = Sha256::new();
    for s in sets {
        h.update((s.category.len() as u64).to_le_bytes());
        h.update(s.category.as_bytes());
        h.update((s.points.len() as u64).to_le_bytes());
        for p in &s.points {
            h.update(p.lat().to_bits().to_le_bytes());
            h.update(p.lon().to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn check_brackets(b: &[f64]) -> Result<(), RiskError> {
    if b.first() != Some(&0.0) || b.windows(2).any(|w| w[0] >= w[1]) || b.iter().any(|v| !v.is_finite()) {
        return Err(RiskError::Training(
            "severity brackets must start at 0 and increase strictly".into(),
        ));
    }
    Ok(())
}

/// Trains all three sub-models and evaluates each with k-fold CV.
///
/// Seeds: the crime forest uses stream 0 of `params.forest.seed`, the type
/// forests stream 1, and the fold shuffles stream 2.
pub fn train_all(
    grid: &CellGrid,
    features: &FeatureMatrix,
    labels: &CellLabels,
    taxonomy: &Taxonomy,
    feature_config: FeatureConfig,
    categories: &[String],
    params: &TrainParams,
) -> Result<WccewsModel, RiskError> {
    let n = grid.len();
    if features.n_rows() != n || labels.crime_present.len() != n || labels.log_fine.len() != n || labels.type_labels.len() != n {
        return Err(RiskError::Training(format!(
            "grid has {n} cells but features have {} rows and labels {}",
            features.n_rows(),
            labels.crime_present.len()
        )));
    }
    let expected = crate::features::column_names(categories);
    if features.column_names != expected {
        return Err(RiskError::Schema(format!(
            "feature columns {:?} do not match categories {categories:?}",
            features.column_names
        )));
    }
    check_brackets(&params.severity_brackets)?;
    let positives: Vec<usize> = (0..n).filter(|&i| labels.crime_present[i]).collect();
    if positives.is_empty() {
        return Err(RiskError::Training(
            "no grid cell contains an incident; the crime and fine models need at least one positive cell".into(),
        ));
    }
    if let Some(i) = positives.iter().find(|&&i| labels.log_fine[i].is_none()) {
        return Err(RiskError::Training(format!("positive cell {} has no fine", grid.cells[*i])));
    }

    let seed = params.forest.seed;
    let crime = ForestClassifier {
        params: ForestParams {
            seed: derive_seed(seed, 0),
            ..params.forest
        },
        negative_ratio: params.negative_ratio,
    };
    let types = OvRLearner {
        params: ForestParams {
            seed: derive_seed(seed, 1),
            ..params.forest
        },
        taxonomy: taxonomy.clone(),
    };
    let fine = LinRegLearner {
        degree: params.fine_degree,
    };
    let cv_seed = derive_seed(seed, 2);

    let x = &features.rows;
    let y_crime: Vec<usize> = labels.crime_present.iter().map(|&p| usize::from(p)).collect();
    let x_pos: Vec<Vec<f64>> = positives.iter().map(|&i| x[i].clone()).collect();
    let y_fine: Vec<f64> = positives.iter().map(|&i| labels.log_fine[i].unwrap()).collect();
    let y_type: Vec<Vec<usize>> = positives.iter().map(|&i| labels.type_labels[i].clone()).collect();

    let (m_crime, balance) = crime.fit(x, &y_crime, u64::MAX)?;
    let m_fine = fit_linreg(&x_pos, &y_fine, params.fine_degree)?;
    let m_type = fit_ovr(&x_pos, &y_type, taxonomy, &types.params)?;

    let k = params.cv_folds;
    let mut eval = EvalReport { k, rows: Vec::new() };
    let mut eval_notes = Vec::new();
    if k >= 2 {
        if n >= k {
            eval.extend(cross_validate(&crime, x, &y_crime, k, cv_seed)?)?;
        } else {
            eval_notes.push(format!("M_crime: {n} cells, fewer than {k} folds"));
        }
        if positives.len() >= k {
            eval.extend(cross_validate(&fine, &x_pos, &y_fine, k, cv_seed)?)?;
            eval.extend(cross_validate(&types, &x_pos, &y_type, k, cv_seed)?)?;
        } else {
            let note = format!("{} positive cells, fewer than {k} folds", positives.len());
            eval_notes.push(format!("M_fine: {note}"));
            eval_notes.push(format!("M_type: {note}"));
        }
    }

    Ok(WccewsModel {
        m_crime,
        m_fine,
        feature_schema: features.column_names.clone(),
        taxonomy: taxonomy.clone(),
        features: FeatureSpec {
            precision: grid.precision,
            config: feature_config,
            categories: categories.to_vec(),
        },
        metadata: ModelMetadata {
            timestamp: params.timestamp.clone(),
            seed,
            params: params.clone(),
            data_fingerprint: data_fingerprint(features, labels),
            poi_fingerprint: None,
            balance,
            n_cells: n,
            absent_labels: m_type.absent_labels.clone(),
            eval,
            eval_notes,
        },
        m_type,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Mass of `log10(F) ~ N(mu, sigma)` in each bracket `[b_i, b_{i+1})`, the
/// last bracket unbounded. A zero `sigma` puts all mass on the bracket
/// holding `10^mu`.
pub fn severity_histogram(mu: f64, sigma: f64, brackets: &[f64]) -> Vec<SeverityBin> {
    let cdf = |usd: f64| -> f64 {
        if usd <= 0.0 {
            return 0.0;
        }
        let l = usd.log10();
        if sigma > 0.0 {
            normal_cdf((l - mu) / sigma)
        } else if mu < l {
            1.0
        } else {
            0.0
        }
    };
    let mut bins = Vec::with_capacity(brackets.len());
    for (i, &lo) in brackets.iter().enumerate() {
        let hi = brackets.get(i + 1).copied();
        let p = hi.map_or(1.0, cdf) - cdf(lo);
        bins.push(SeverityBin {
            lower_usd: lo,
            upper_usd: hi,
            probability: p.max(0.0),
        });
    }
    bins
}

/// The `k` most likely labels, descending; ties keep taxonomy order.
pub fn top_risks(type_probs: &[LabelProb], k: usize) -> Vec<LabelProb> {
    let mut order: Vec<usize> = (0..type_probs.len()).collect();
    order.sort_by(|&a, &b| type_probs[b].probability.total_cmp(&type_probs[a].probability));
    order.into_iter().take(k).map(|i| type_probs[i].clone()).collect()
}

impl WccewsModel {
    pub fn predict_cell(&self, features_row: &[f64], geohash: &Geohash) -> Result<CellPrediction, RiskError> {
        if features_row.len() != self.feature_schema.len() {
            return Err(RiskError::Schema(format!(
                "expected {} feature values, got {}",
                self.feature_schema.len(),
                features_row.len()
            )));
        }
        let p_crime = self.m_crime.predict_proba(features_row)?[1];
        let log_fine = self.m_fine.predict(features_row)?;
        let expected_fine_usd = 10f64.powf(log_fine);
        let type_probs: Vec<LabelProb> = self
            .taxonomy
            .labels()
            .iter()
            .zip(self.m_type.predict(features_row)?)
            .map(|(l, p)| LabelProb {
                label: l.clone(),
                probability: p,
            })
            .collect();
        let params = &self.metadata.params;
        Ok(CellPrediction {
            geohash: geohash.clone(),
            p_crime,
            expected_fine_usd,
            unconditional_fine_usd: p_crime * expected_fine_usd,
            severity_histogram: severity_histogram(log_fine, self.m_fine.residual_sigma, &params.severity_brackets),
            top_risks: top_risks(&type_probs, params.top_k),
            type_probs,
        })
    }

    /// sha256 of the serialized model, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

pub fn predict_cell(model: &WccewsModel, features_row: &[f64], geohash: &Geohash) -> Result<CellPrediction, RiskError> {
    model.predict_cell(features_row, geohash)
}
