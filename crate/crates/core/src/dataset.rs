//! On-disk dataset directory.
//!
//! ```text
//! <dir>/dataset.json        manifest: region bbox, grid precision, feature
//!                           settings, crime taxonomy, file list
//! <dir>/incidents.csv       incident records
//! <dir>/poi_<category>.csv  one file per POI category, in feature order
//! <dir>/ground_truth.json   planted truth (synthetic datasets only)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    geocode_pending, load_incidents, load_poi, DataError, GeocodeError, Geocoder, GroundTruth, Incident, LoadOptions,
    LoadReport, PoiSet, Taxonomy,
};
use crate::features::FeatureConfig;
use crate::geogrid::BBox;

pub const MANIFEST_FILE: &str = "dataset.json";
pub const INCIDENTS_FILE: &str = "incidents.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiFile {
    pub category: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub bbox: BBox,
    pub precision: usize,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub taxonomy: Taxonomy,
    pub incidents: String,
    pub poi: Vec<PoiFile>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let path = dir.join(MANIFEST_FILE);
        let body = std::fs::read_to_string(&path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&body).map_err(|e| DataError::Schema(format!("{}: {e}", path.display())))
    }
}

/// A loaded dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub poi_sets: Vec<PoiSet>,
    pub incidents: Vec<Incident>,
    pub incident_report: LoadReport,
    pub poi_reports: Vec<LoadReport>,
}

impl Dataset {
    /// Loads only the manifest and POI files (all that serving needs) plus
    /// incidents if a taxonomy is given.
    pub fn load(
        dir: &Path,
        taxonomy: Option<&Taxonomy>,
        opts: &LoadOptions,
        geocoder: Option<&dyn Geocoder>,
    ) -> Result<Self, DatasetError> {
        let manifest = DatasetManifest::load(dir)?;
        let mut poi_sets = Vec::with_capacity(manifest.poi.len());
        let mut poi_reports = Vec::with_capacity(manifest.poi.len());
        for pf in &manifest.poi {
            let loaded = load_poi(dir.join(&pf.file), &pf.category, opts)?;
            poi_sets.push(loaded.set);
            poi_reports.push(loaded.report);
        }
        let (incidents, incident_report) = match taxonomy {
            Some(tax) => {
                let mut load = load_incidents(dir.join(&manifest.incidents), tax, opts)?;
                let mut incidents = load.incidents;
                if !load.pending.is_empty() {
                    match geocoder {
                        Some(g) => incidents.extend(geocode_pending(load.pending, g, &mut load.report)?),
                        None => {
                            for p in load.pending {
                                load.report.errors.push(crate::data::RowIssue {
                                    line: p.line,
                                    reason: "address needs geocoding but no geocoder is configured".into(),
                                });
                            }
                        }
                    }
                }
                (incidents, load.report)
            }
            None => (Vec::new(), LoadReport::default()),
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            poi_sets,
            incidents,
            incident_report,
            poi_reports,
        })
    }

    pub fn ground_truth(&self) -> Result<GroundTruth, DataError> {
        let path = self.dir.join(GROUND_TRUTH_FILE);
        let body = std::fs::read_to_string(&path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&body).map_err(|e| DataError::Schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geocode(#[from] GeocodeError),
}
