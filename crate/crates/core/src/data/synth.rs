//! Seeded synthetic datasets with a planted generative model.
//!
//! Generation order:
//! 1. POIs uniform (in degrees) inside the box, category by category.
//! 2. Features for every grid cell through [`Featurizer`], the same code path
//!    training and serving use.
//! 3. Per cell, `p = logistic(bias + w . x)`; the cell is active with
//!    probability `p`. An active cell gets `1 + Poisson(rate - 1)` incidents
//!    (exactly one when `rate <= 1`, none when `rate == 0`), placed uniformly
//!    inside the cell.
//! 4. Each incident draws `log10(fine) ~ Normal(intercept + c . x, sigma)`,
//!    clamped to the floor, and one crime type from the softmax of the
//!    per-label logits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{write_incidents, write_poi, DataError, Incident, PoiSet, Taxonomy};
use crate::dataset::{DatasetManifest, PoiFile, GROUND_TRUTH_FILE, INCIDENTS_FILE, MANIFEST_FILE};
use crate::features::{build_grid, CellGrid, FeatureConfig, Featurizer};
use crate::geogrid::{encode, BBox, GeoPoint, Geohash};
use crate::rng::stream_rng;

const STREAM_POI: u64 = 0;
const STREAM_INCIDENTS: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiCount {
    pub category: String,
    pub count: usize,
}

/// Logistic model over named feature columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogisticSpec {
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
}

/// Linear model for log10 fines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    #[serde(default = "default_fine_sigma")]
    pub sigma: f64,
    #[serde(default = "default_fine_floor")]
    pub floor: f64,
}

fn default_fine_sigma() -> f64 {
    0.25
}

fn default_fine_floor() -> f64 {
    2.0
}

/// Logit for one crime type. Labels without a spec get logit 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub label: String,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub bbox: BBox,
    pub precision: usize,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub taxonomy: Taxonomy,
    pub poi: Vec<PoiCount>,
    pub crime: LogisticSpec,
    pub fine: LinearSpec,
    #[serde(default)]
    pub types: Vec<TypeSpec>,
    pub incident_rate: f64,
    pub seed: u64,
}

/// Planted truth for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub geohash: Geohash,
    pub features: Vec<f64>,
    pub p_crime: f64,
    /// Mean of the log10-fine distribution before clamping.
    pub log_fine_mean: f64,
    pub type_probs: Vec<f64>,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub column_names: Vec<String>,
    pub taxonomy: Taxonomy,
    /// Planted fine model as a dense vector aligned with `column_names`.
    pub fine_intercept: f64,
    pub fine_coefficients: Vec<f64>,
    pub cells: Vec<CellTruth>,
}

impl GroundTruth {
    /// Accuracy of the Bayes classifier `p >= 0.5` against the planted probabilities.
    pub fn bayes_accuracy(&self) -> f64 {
        let n = self.cells.len() as f64;
        self.cells.iter().map(|c| c.p_crime.max(1.0 - c.p_crime)).sum::<f64>() / n
    }

    pub fn prevalence(&self) -> f64 {
        self.cells.iter().filter(|c| c.active).count() as f64 / self.cells.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub grid: CellGrid,
    pub features: FeatureConfig,
    pub incidents: Vec<Incident>,
    pub poi_sets: Vec<PoiSet>,
    pub ground_truth: GroundTruth,
}

impl SynthOutput {
    /// Writes the dataset directory: manifest, incident and POI CSVs, and
    /// the ground truth as JSON.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DataError> {
        let io = |path: &Path| {
            let p = path.display().to_string();
            move |source| DataError::Io { path: p, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut manifest = DatasetManifest {
            bbox: self.grid.bbox,
            precision: self.grid.precision,
            features: self.features,
            taxonomy: self.ground_truth.taxonomy.clone(),
            incidents: INCIDENTS_FILE.into(),
            poi: Vec::new(),
        };
        let mut buf = Vec::new();
        write_incidents(&mut buf, &self.incidents)?;
        let path = dir.join(INCIDENTS_FILE);
        fs::write(&path, &buf).map_err(io(&path))?;
        for set in &self.poi_sets {
            let file = format!("poi_{}.csv", set.category);
            let mut buf = Vec::new();
            write_poi(&mut buf, set)?;
            let path = dir.join(&file);
            fs::write(&path, &buf).map_err(io(&path))?;
            manifest.poi.push(PoiFile {
                category: set.category.clone(),
                file,
            });
        }
        let path = dir.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, body + "\n").map_err(io(&path))?;
        let path = dir.join(GROUND_TRUTH_FILE);
        let body = serde_json::to_string(&self.ground_truth).expect("ground truth serializes");
        fs::write(&path, body).map_err(io(&path))?;
        Ok(())
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dense(names: &[String], weights: &BTreeMap<String, f64>, what: &str) -> Result<Vec<f64>, DataError> {
    let mut v = vec![0.0; names.len()];
    for (k, w) in weights {
        let j = names
            .iter()
            .position(|n| n == k)
            .ok_or_else(|| DataError::Config(format!("{what} references unknown feature {k:?}")))?;
        v[j] = *w;
    }
    Ok(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const FIRM_WORDS: [&str; 12] = [
    "Granite", "Harbor", "Meridian", "Summit", "Beacon", "Liberty", "Sterling", "Pioneer", "Atlas", "Crescent",
    "Keystone", "Northgate",
];
const FIRM_KINDS: [&str; 6] = ["Capital", "Securities", "Advisors", "Partners", "Holdings", "Financial"];
const FIRM_SUFFIX: [&str; 3] = ["LLC", "Inc.", "LP"];

fn respondent_name(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {}",
        FIRM_WORDS[rng.random_range(0..FIRM_WORDS.len())],
        FIRM_KINDS[rng.random_range(0..FIRM_KINDS.len())],
        FIRM_SUFFIX[rng.random_range(0..FIRM_SUFFIX.len())]
    )
}

fn uniform_in(rng: &mut ChaCha8Rng, b: &BBox) -> GeoPoint {
    let lat = b.min_lat() + rng.random::<f64>() * (b.max_lat() - b.min_lat());
    let lon = b.min_lon() + rng.random::<f64>() * (b.max_lon() - b.min_lon());
    GeoPoint::new(lat.min(b.max_lat()), lon.min(b.max_lon())).expect("inside a valid box")
}

/// Generates a dataset. Output is a pure function of `cfg`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput, DataError> {
    if !(cfg.incident_rate >= 0.0 && cfg.incident_rate.is_finite()) {
        return Err(DataError::Config(format!("incident_rate {} must be >= 0", cfg.incident_rate)));
    }
    if !(cfg.fine.sigma >= 0.0) {
        return Err(DataError::Config("fine sigma must be >= 0".into()));
    }
    let grid = build_grid(cfg.bbox, cfg.precision).map_err(|e| DataError::Config(e.to_string()))?;

    let mut rng = stream_rng(cfg.seed, STREAM_POI);
    let poi_sets = cfg
        .poi
        .iter()
        .map(|pc| PoiSet::new(pc.category.clone(), (0..pc.count).map(|_| uniform_in(&mut rng, &cfg.bbox)).collect()))
        .collect::<Result<Vec<_>, _>>()?;

    let featurizer = Featurizer::new(&poi_sets, cfg.features).map_err(|e| DataError::Config(e.to_string()))?;
    let features = featurizer.featurize(&grid);
    let names = features.column_names.clone();
    let crime_w = dense(&names, &cfg.crime.weights, "crime model")?;
    let fine_w = dense(&names, &cfg.fine.coefficients, "fine model")?;
    let n_labels = cfg.taxonomy.len();
    let mut type_bias = vec![0.0; n_labels];
    let mut type_w = vec![vec![0.0; names.len()]; n_labels];
    for ts in &cfg.types {
        let l = cfg
            .taxonomy
            .index_of(&ts.label)
            .ok_or_else(|| DataError::Config(format!("type spec for unknown label {:?}", ts.label)))?;
        type_bias[l] = ts.bias;
        type_w[l] = dense(&names, &ts.weights, "type model")?;
    }

    let mut rng = stream_rng(cfg.seed, STREAM_INCIDENTS);
    let extra = (cfg.incident_rate > 1.0)
        .then(|| Poisson::new(cfg.incident_rate - 1.0).expect("positive rate"));
    let noise = Normal::new(0.0, cfg.fine.sigma).expect("sigma validated");
    let first_day = NaiveDate::from_ymd_opt(super::HISTORY_START_YEAR, 1, 1).unwrap();
    let span_days = (NaiveDate::from_ymd_opt(2017, 12, 31).unwrap() - first_day).num_days();

    let mut incidents = Vec::new();
    let mut cells = Vec::with_capacity(grid.len());
    for (cell, x) in grid.cells.iter().zip(&features.rows) {
        let p = logistic(cfg.crime.bias + dot(&crime_w, x));
        let log_fine_mean = cfg.fine.intercept + dot(&fine_w, x);
        let logits: Vec<f64> = (0..n_labels).map(|l| type_bias[l] + dot(&type_w[l], x)).collect();
        let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|z| (z - max_logit).exp()).collect();
        let total: f64 = weights.iter().sum();
        let type_probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let active = rng.random::<f64>() < p;
        let n_incidents = match (active, cfg.incident_rate > 0.0) {
            (true, true) => 1 + extra.as_ref().map_or(0, |d| d.sample(&mut rng) as usize),
            _ => 0,
        };
        let cell_box = cell.bbox();
        for _ in 0..n_incidents {
            let location = loop {
                let p = uniform_in(&mut rng, &cell_box);
                if encode(p, grid.precision).map(|g| &g == cell).unwrap_or(false) {
                    break p;
                }
            };
            let log_fine = (log_fine_mean + noise.sample(&mut rng)).max(cfg.fine.floor);
            let fine_usd = (10f64.powf(log_fine) * 100.0).round() / 100.0;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut label = n_labels - 1;
            for (l, q) in type_probs.iter().enumerate() {
                acc += q;
                if u < acc {
                    label = l;
                    break;
                }
            }
            let date = first_day + Duration::days(rng.random_range(0..=span_days));
            incidents.push(Incident {
                id: format!("INC-{:06}", incidents.len() + 1),
                date,
                location,
                address: None,
                crime_type: cfg.taxonomy.labels()[label].clone(),
                fine_usd,
                respondent: respondent_name(&mut rng),
            });
        }
        cells.push(CellTruth {
            geohash: cell.clone(),
            features: x.clone(),
            p_crime: p,
            log_fine_mean,
            type_probs,
            active,
        });
    }

    Ok(SynthOutput {
        grid,
        features: cfg.features,
        incidents,
        poi_sets,
        ground_truth: GroundTruth {
            column_names: names,
            taxonomy: cfg.taxonomy.clone(),
            fine_intercept: cfg.fine.intercept,
            fine_coefficients: fine_w,
            cells,
        },
    })
}
