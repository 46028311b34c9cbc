//! Dataset schemas, CSV loaders and writers, geocoding, and the seeded
//! synthetic generator.
//!
//! Incident CSV header: `id,date,lat,lon,address,crime_type,fine_usd,respondent`.
//! POI CSV header: `lat,lon` followed by any extra columns, which are ignored.
//! Both are UTF-8 with RFC 4180 quoting.

mod csvio;
mod geocode;
mod synth;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geogrid::{GeoError, GeoPoint};

pub use csvio::{
    load_incidents, load_incidents_from_reader, load_poi, load_poi_from_reader, write_incidents, write_poi,
    IncidentLoad, LoadOptions, LoadReport, PoiLoad, RowIssue, INCIDENT_HEADER,
};
pub use geocode::{
    geocode_pending, normalize_address, CachingGeocoder, GeocodeError, Geocoder, HttpGeocoder, StubGeocoder,
    GEOCODER_URL_ENV,
};
pub use synth::{
    synth_generate, CellTruth, GroundTruth, LinearSpec, LogisticSpec, PoiCount, SynthConfig, SynthOutput, TypeSpec,
};

/// Incidents dated before this year only produce a validation warning.
pub const HISTORY_START_YEAR: i32 = 1964;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{malformed} of {total} rows malformed, above the {threshold:.0}% threshold")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        threshold: f64,
    },
    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

/// Ordered set of crime-type labels. The order is fixed for the life of a
/// trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Taxonomy {
    labels: Vec<String>,
}

impl Taxonomy {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, DataError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(DataError::Taxonomy("no labels".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.trim().is_empty() {
                return Err(DataError::Taxonomy(format!("label {i} is blank")));
            }
            if labels[..i].contains(l) {
                return Err(DataError::Taxonomy(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::new([
            "fraud",
            "insider_trading",
            "money_laundering",
            "market_manipulation",
            "embezzlement",
            "bribery",
            "tax_evasion",
            "ponzi_scheme",
            "forgery",
            "breach_of_fiduciary_duty",
        ])
        .expect("default taxonomy is valid")
    }
}

impl TryFrom<Vec<String>> for Taxonomy {
    type Error = DataError;
    fn try_from(v: Vec<String>) -> Result<Self, DataError> {
        Taxonomy::new(v)
    }
}

impl From<Taxonomy> for Vec<String> {
    fn from(t: Taxonomy) -> Self {
        t.labels
    }
}

/// One geocoded financial-crime record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub id: String,
    pub date: NaiveDate,
    pub location: GeoPoint,
    /// Source address, when the record came with one.
    pub address: Option<String>,
    pub crime_type: String,
    pub fine_usd: f64,
    pub respondent: String,
}

/// A record with an address but no coordinates yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingIncident {
    /// 1-based data line in the source file, for error reports.
    pub line: usize,
    pub id: String,
    pub date: NaiveDate,
    pub address: String,
    pub crime_type: String,
    pub fine_usd: f64,
    pub respondent: String,
}

impl PendingIncident {
    pub fn located(self, location: GeoPoint) -> Incident {
        Incident {
            id: self.id,
            date: self.date,
            location,
            address: Some(self.address),
            crime_type: self.crime_type,
            fine_usd: self.fine_usd,
            respondent: self.respondent,
        }
    }
}

/// Points of one landscape-feature category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSet {
    pub category: String,
    pub points: Vec<GeoPoint>,
}

impl PoiSet {
    pub fn new(category: impl Into<String>, points: Vec<GeoPoint>) -> Result<Self, DataError> {
        let category = category.into();
        if category.trim().is_empty() {
            return Err(DataError::Schema("POI category must be nonempty".into()));
        }
        Ok(Self { category, points })
    }
}

/// The three landscape categories used by the reference feature set.
pub const DEFAULT_POI_CATEGORIES: [&str; 3] = ["investment_advisers", "liquor_licenses", "tax_exempt_orgs"];
