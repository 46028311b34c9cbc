use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{Incident, LoadReport, PendingIncident, RowIssue};
use crate::geogrid::GeoPoint;

pub const GEOCODER_URL_ENV: &str = "RISKGRID_GEOCODER_URL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeocodeError {
    #[error("geocoder unreachable (retryable): {0}")]
    Network(String),
    #[error("no match for address {0:?}")]
    NotFound(String),
    #[error("geocoder protocol error: {0}")]
    Protocol(String),
    #[error("empty address")]
    EmptyAddress,
    #[error("geocode cache error: {0}")]
    Cache(String),
}

impl GeocodeError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GeocodeError::Network(_))
    }
}

pub trait Geocoder: Send + Sync {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError>;
}

/// Cache key: trimmed, whitespace-collapsed, lowercased.
pub fn normalize_address(address: &str) -> String {
    address.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Client for a free-text geocoding endpoint.
///
/// Sends `GET <base_url>?q=<address>&format=json` and expects a JSON array
/// whose first element carries decimal-string `lat` and `lon` fields.
pub struct HttpGeocoder {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpGeocoder {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .user_agent("riskgrid/0.1")
            .build()
            .into();
        Self {
            base_url: base_url.into(),
            agent,
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(GEOCODER_URL_ENV).ok().filter(|u| !u.is_empty()).map(Self::new)
    }
}

impl Geocoder for HttpGeocoder {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        let resp = self
            .agent
            .get(&self.base_url)
            .query("q", address)
            .query("format", "json")
            .call();
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code >= 500 || code == 429 => {
                return Err(GeocodeError::Network(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => return Err(GeocodeError::Protocol(format!("HTTP {code}"))),
            Err(e) => return Err(GeocodeError::Network(e.to_string())),
        };
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GeocodeError::Network(e.to_string()))?;
        parse_response(address, &body)
    }
}

fn parse_response(address: &str, body: &str) -> Result<GeoPoint, GeocodeError> {
    let doc: serde_json::Value = serde_json::from_str(body).map_err(|e| GeocodeError::Protocol(e.to_string()))?;
    let results = doc
        .as_array()
        .ok_or_else(|| GeocodeError::Protocol("response is not an array".into()))?;
    let first = match results.first() {
        Some(f) => f,
        None => return Err(GeocodeError::NotFound(address.to_string())),
    };
    let coord = |k: &str| -> Result<f64, GeocodeError> {
        match first.get(k) {
            Some(serde_json::Value::String(s)) => s
                .trim()
                .parse()
                .map_err(|_| GeocodeError::Protocol(format!("field {k} is not a decimal: {s:?}"))),
            Some(serde_json::Value::Number(n)) => Ok(n.as_f64().unwrap_or(f64::NAN)),
            _ => Err(GeocodeError::Protocol(format!("first result lacks {k}"))),
        }
    };
    GeoPoint::new(coord("lat")?, coord("lon")?).map_err(|e| GeocodeError::Protocol(e.to_string()))
}

/// Deterministic in-memory geocoder, keyed by normalized address.
#[derive(Default)]
pub struct StubGeocoder {
    table: BTreeMap<String, GeoPoint>,
    calls: AtomicUsize,
}

impl StubGeocoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, address: &str, point: GeoPoint) -> Self {
        self.table.insert(normalize_address(address), point);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Geocoder for StubGeocoder {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.table
            .get(&normalize_address(address))
            .copied()
            .ok_or_else(|| GeocodeError::NotFound(address.to_string()))
    }
}

/// Wraps a geocoder with a persistent cache and a minimum interval between
/// upstream calls. Cache hits never reach the inner geocoder.
pub struct CachingGeocoder<G> {
    inner: G,
    cache: RwLock<BTreeMap<String, GeoPoint>>,
    path: Option<PathBuf>,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
}

impl<G: Geocoder> CachingGeocoder<G> {
    /// Memory-only cache with the default one-request-per-second limit.
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            cache: RwLock::new(BTreeMap::new()),
            path: None,
            min_interval: Duration::from_secs(1),
            last_call: Mutex::new(None),
        }
    }

    /// Cache persisted as a JSON object at `path`; loaded if present.
    pub fn with_cache_file(inner: G, path: impl Into<PathBuf>) -> Result<Self, GeocodeError> {
        let path = path.into();
        let cache = match std::fs::read_to_string(&path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| GeocodeError::Cache(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(GeocodeError::Cache(format!("{}: {e}", path.display()))),
        };
        Ok(Self {
            cache: RwLock::new(cache),
            path: Some(path),
            ..Self::new(inner)
        })
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    fn throttle(&self) {
        let mut last = self.last_call.lock().unwrap();
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn persist(&self, cache: &BTreeMap<String, GeoPoint>) -> Result<(), GeocodeError> {
        let Some(path) = &self.path else { return Ok(()) };
        let body = serde_json::to_string_pretty(cache).map_err(|e| GeocodeError::Cache(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, body)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| GeocodeError::Cache(format!("{}: {e}", path.display())))
    }
}

impl<G: Geocoder> Geocoder for CachingGeocoder<G> {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        let key = normalize_address(address);
        if key.is_empty() {
            return Err(GeocodeError::EmptyAddress);
        }
        if let Some(p) = self.cache.read().unwrap().get(&key) {
            return Ok(*p);
        }
        self.throttle();
        let point = self.inner.geocode(address)?;
        let mut cache = self.cache.write().unwrap();
        cache.insert(key, point);
        self.persist(&cache)?;
        Ok(point)
    }
}

/// Geocodes pending rows in order. Failures are appended to `report` and the
/// row is dropped; retryable network failures abort the batch.
pub fn geocode_pending(
    pending: Vec<PendingIncident>,
    geocoder: &dyn Geocoder,
    report: &mut LoadReport,
) -> Result<Vec<Incident>, GeocodeError> {
    let mut out = Vec::with_capacity(pending.len());
    for p in pending {
        match geocoder.geocode(&p.address) {
            Ok(point) => out.push(p.located(point)),
            Err(e) if e.is_retryable() => return Err(e),
            Err(e) => report.errors.push(RowIssue {
                line: p.line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}
