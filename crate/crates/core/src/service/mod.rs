//! Risk surfaces, the HTTP API and the command-line driver.
//!
//! [`Engine`] is the shared serving state: one trained model plus the POI
//! data needed to featurize any cell. The HTTP handlers and the CLI both go
//! through it, so they return identical documents for the same request.

pub mod api;
pub mod cli;
pub mod config;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::data::{Incident, LoadOptions, PoiSet};
use crate::dataset::{Dataset, DatasetError};
use crate::features::{build_grid_with_cap, FeatureError, Featurizer};
use crate::geogrid::{encode, BBox, GeoError, Geohash, MAX_PRECISION};
use crate::riskmodel::{poi_fingerprint, CellPrediction, RiskError, WccewsModel};

pub use config::{Config, ConfigError, ServerConfig};

/// Entries kept in the per-engine feature cache before it is reset.
const FEATURE_CACHE_LIMIT: usize = 200_000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    InvalidGeohash(String),
    #[error("{0}")]
    InvalidBBox(String),
    #[error("{0}")]
    InvalidPrecision(String),
    #[error("cell {0} is outside the served region")]
    OutsideRegion(String),
    #[error("request covers {count} cells, above the cap of {cap}; use a lower precision or a smaller box")]
    CellCapExceeded { count: u64, cap: usize },
    #[error("model and data disagree on features: {0}")]
    SchemaMismatch(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidGeohash(_) => "invalid_geohash",
            Self::InvalidBBox(_) => "invalid_bbox",
            Self::InvalidPrecision(_) => "invalid_precision",
            Self::OutsideRegion(_) => "outside_region",
            Self::CellCapExceeded { .. } => "cell_cap_exceeded",
            Self::SchemaMismatch(_) => "schema_mismatch",
            Self::Model(_) => "model_error",
            Self::Data(_) => "data_error",
            Self::Config(_) => "config_error",
            Self::Training(_) => "training_error",
            Self::Io(_) => "io_error",
            Self::Internal(_) => "internal",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            Self::InvalidGeohash(_) | Self::InvalidBBox(_) | Self::InvalidPrecision(_) => 400,
            Self::OutsideRegion(_) => 404,
            Self::CellCapExceeded { .. } => 422,
            _ => 500,
        }
    }

    /// `{"error": code, "message": text}`.
    pub fn to_json(&self) -> Value {
        json!({ "error": self.code(), "message": self.to_string() })
    }

    fn from_geo(e: GeoError, bbox_context: bool) -> Self {
        match e {
            GeoError::CellCapExceeded { count, cap } => Self::CellCapExceeded { count, cap },
            GeoError::InvalidPrecision(_) => Self::InvalidPrecision(e.to_string()),
            GeoError::Parse { .. } => Self::InvalidGeohash(e.to_string()),
            _ if bbox_context => Self::InvalidBBox(e.to_string()),
            _ => Self::Internal(e.to_string()),
        }
    }
}

impl From<RiskError> for ServiceError {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::Schema(m) => Self::SchemaMismatch(m),
            RiskError::Training(m) => Self::Training(m),
            other => Self::Model(other.to_string()),
        }
    }
}

impl From<FeatureError> for ServiceError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Geo(g) => Self::from_geo(g, true),
            FeatureError::Schema(m) => Self::SchemaMismatch(m),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<DatasetError> for ServiceError {
    fn from(e: DatasetError) -> Self {
        Self::Data(e.to_string())
    }
}

/// A past incident in a cell, echoed as-is from the data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalRecord {
    pub id: String,
    pub date: NaiveDate,
    pub crime_type: String,
    pub fine_usd: f64,
    pub respondent: String,
}

/// Response document for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    #[serde(flatten)]
    pub prediction: CellPrediction,
    /// Recorded incidents located in the cell (historical data, not predictions).
    pub historical_records: Vec<HistoricalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub geohash: Geohash,
    pub p_crime: f64,
    pub expected_fine_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSurface {
    pub precision: usize,
    pub bbox: BBox,
    pub model_fingerprint: String,
    pub cells: Vec<SurfaceCell>,
}

fn predict_rows(model: &WccewsModel, cells: &[Geohash], rows: &[Vec<f64>]) -> Result<Vec<SurfaceCell>, ServiceError> {
    cells
        .iter()
        .zip(rows)
        .map(|(g, row)| {
            let p = model.predict_cell(row, g)?;
            Ok(SurfaceCell {
                geohash: p.geohash,
                p_crime: p.p_crime,
                expected_fine_usd: p.expected_fine_usd,
            })
        })
        .collect()
}

/// Predicts every cell of `cover(bbox, precision)`.
pub fn render_surface(
    model: &WccewsModel,
    poi_sets: &[PoiSet],
    bbox: BBox,
    precision: usize,
    cell_cap: usize,
) -> Result<RiskSurface, ServiceError> {
    let featurizer = Featurizer::new(poi_sets, model.features.config)?;
    featurizer.check_schema(&model.feature_schema)?;
    render_with(model, &featurizer, &model.fingerprint(), bbox, precision, cell_cap)
}

fn render_with(
    model: &WccewsModel,
    featurizer: &Featurizer,
    fingerprint: &str,
    bbox: BBox,
    precision: usize,
    cell_cap: usize,
) -> Result<RiskSurface, ServiceError> {
    let grid = build_grid_with_cap(bbox, precision, cell_cap)?;
    let features = featurizer.featurize(&grid);
    Ok(RiskSurface {
        precision,
        bbox,
        model_fingerprint: fingerprint.to_string(),
        cells: predict_rows(model, &grid.cells, &features.rows)?,
    })
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// GeoJSON FeatureCollection with one Polygon per cell. Rings run
/// counter-clockwise from the south-west corner, `[lon, lat]`, rounded to six
/// decimals.
pub fn surface_to_geojson(s: &RiskSurface) -> Value {
    let features: Vec<Value> = s
        .cells
        .iter()
        .map(|c| {
            let b = c.geohash.bbox();
            let (w, e, so, n) = (round6(b.min_lon()), round6(b.max_lon()), round6(b.min_lat()), round6(b.max_lat()));
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[w, so], [e, so], [e, n], [w, n], [w, so]]],
                },
                "properties": {
                    "geohash": c.geohash.as_str(),
                    "p_crime": c.p_crime,
                    "expected_fine_usd": c.expected_fine_usd,
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// Serving state shared across requests. Immutable apart from the feature cache.
pub struct Engine {
    model: WccewsModel,
    fingerprint: String,
    data_fingerprint: String,
    featurizer: Featurizer,
    region: BBox,
    cell_cap: usize,
    schema_error: Option<String>,
    warnings: Vec<String>,
    /// Records keyed by full-precision geohash, sorted, so any cell's records
    /// form one contiguous prefix range.
    history: Vec<(String, HistoricalRecord)>,
    cache: RwLock<HashMap<Geohash, Arc<Vec<f64>>>>,
}

impl Engine {
    /// `region` bounds the cells the API will answer for. A featurizer that
    /// does not reproduce the model's schema leaves the engine running but
    /// every prediction fails with a schema error.
    pub fn new(
        model: WccewsModel,
        poi_sets: &[PoiSet],
        region: BBox,
        incidents: &[Incident],
        cell_cap: usize,
    ) -> Result<Self, ServiceError> {
        let featurizer = Featurizer::new(poi_sets, model.features.config)?;
        let schema_error = featurizer.check_schema(&model.feature_schema).err().map(|e| e.to_string());
        let data_fingerprint = poi_fingerprint(poi_sets);
        let mut warnings = Vec::new();
        if let Some(fp) = &model.metadata.poi_fingerprint {
            if *fp != data_fingerprint {
                warnings.push("POI data differs from the data the model was trained on".to_string());
            }
        }
        let mut history: Vec<(String, HistoricalRecord)> = incidents
            .iter()
            .filter_map(|inc| {
                let g = encode(inc.location, MAX_PRECISION).ok()?;
                Some((
                    g.as_str().to_string(),
                    HistoricalRecord {
                        id: inc.id.clone(),
                        date: inc.date,
                        crime_type: inc.crime_type.clone(),
                        fine_usd: inc.fine_usd,
                        respondent: inc.respondent.clone(),
                    },
                ))
            })
            .collect();
        history.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.date.cmp(&b.1.date)).then_with(|| a.1.id.cmp(&b.1.id)));
        Ok(Self {
            fingerprint: model.fingerprint(),
            model,
            data_fingerprint,
            featurizer,
            region,
            cell_cap,
            schema_error,
            warnings,
            history,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Loads a model file and a dataset directory. Incidents are read when
    /// present to populate historical records.
    pub fn open(model_path: &Path, data_dir: &Path, cell_cap: usize) -> Result<Self, ServiceError> {
        let model = WccewsModel::load(model_path)?;
        let tax = model.taxonomy.clone();
        let opts = LoadOptions::default();
        let data = match Dataset::load(data_dir, Some(&tax), &opts, None) {
            Ok(d) => d,
            Err(_) => Dataset::load(data_dir, None, &opts, None)?,
        };
        Self::new(model, &data.poi_sets, data.manifest.bbox, &data.incidents, cell_cap)
    }

    pub fn model(&self) -> &WccewsModel {
        &self.model
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn data_fingerprint(&self) -> &str {
        &self.data_fingerprint
    }

    pub fn region(&self) -> BBox {
        self.region
    }

    pub fn cell_cap(&self) -> usize {
        self.cell_cap
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn schema_error(&self) -> Option<&str> {
        self.schema_error.as_deref()
    }

    fn check_schema(&self) -> Result<(), ServiceError> {
        match &self.schema_error {
            Some(m) => Err(ServiceError::SchemaMismatch(m.clone())),
            None => Ok(()),
        }
    }

    /// Feature row for one cell, memoized.
    pub fn features(&self, g: &Geohash) -> Arc<Vec<f64>> {
        if let Some(row) = self.cache.read().expect("cache lock").get(g) {
            return row.clone();
        }
        let row = Arc::new(self.featurizer.cell_features(g));
        let mut cache = self.cache.write().expect("cache lock");
        if cache.len() >= FEATURE_CACHE_LIMIT {
            cache.clear();
        }
        cache.entry(g.clone()).or_insert(row).clone()
    }

    pub fn parse_geohash(code: &str) -> Result<Geohash, ServiceError> {
        Geohash::parse(code).map_err(|e| ServiceError::InvalidGeohash(e.to_string()))
    }

    /// Prediction for any cell, inside the served region or not.
    pub fn cell(&self, g: &Geohash) -> Result<CellReport, ServiceError> {
        self.check_schema()?;
        let prediction = self.model.predict_cell(&self.features(g), g)?;
        let prefix = g.as_str();
        let start = self.history.partition_point(|(k, _)| k.as_str() < prefix);
        let mut historical_records: Vec<HistoricalRecord> = self.history[start..]
            .iter()
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(_, r)| r.clone())
            .collect();
        historical_records.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));
        Ok(CellReport {
            prediction,
            historical_records,
        })
    }

    /// Like [`Engine::cell`] but refuses cells outside the served region.
    pub fn cell_in_region(&self, g: &Geohash) -> Result<CellReport, ServiceError> {
        if !self.region.intersects(&g.bbox()) {
            return Err(ServiceError::OutsideRegion(g.to_string()));
        }
        self.cell(g)
    }

    /// Surface over `bbox` at `precision`, defaulting to the training precision.
    pub fn surface(&self, bbox: BBox, precision: Option<usize>) -> Result<RiskSurface, ServiceError> {
        self.check_schema()?;
        let precision = precision.unwrap_or(self.model.features.precision);
        render_with(&self.model, &self.featurizer, &self.fingerprint, bbox, precision, self.cell_cap)
    }

    /// Summary document for `/api/v1/meta`.
    pub fn meta(&self) -> Value {
        json!({
            "taxonomy": self.model.taxonomy.labels(),
            "feature_schema": self.model.feature_schema,
            "eval": self.model.metadata.eval,
            "model_fingerprint": self.fingerprint,
            "data_fingerprint": self.data_fingerprint,
            "precision": self.model.features.precision,
            "region": self.region,
            "cell_cap": self.cell_cap,
            "severity_brackets": self.model.metadata.params.severity_brackets,
            "warnings": self.warnings,
        })
    }
}
