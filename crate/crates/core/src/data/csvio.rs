use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{DataError, Incident, PendingIncident, PoiSet, Taxonomy, HISTORY_START_YEAR};
use crate::geogrid::GeoPoint;

pub const INCIDENT_HEADER: [&str; 8] = ["id", "date", "lat", "lon", "address", "crime_type", "fine_usd", "respondent"];
const POI_HEADER: [&str; 2] = ["lat", "lon"];
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Fraction of malformed rows above which loading fails outright.
    pub max_malformed_fraction: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_malformed_fraction: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    /// 1-based data line (the header is line 0).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub total_rows: usize,
    pub errors: Vec<RowIssue>,
    pub warnings: Vec<RowIssue>,
}

impl LoadReport {
    fn reject(&mut self, line: usize, reason: impl Into<String>) {
        self.errors.push(RowIssue {
            line,
            reason: reason.into(),
        });
    }

    fn check_threshold(&self, opts: &LoadOptions) -> Result<(), DataError> {
        if self.total_rows > 0 && self.errors.len() as f64 > opts.max_malformed_fraction * self.total_rows as f64 {
            return Err(DataError::TooManyMalformed {
                malformed: self.errors.len(),
                total: self.total_rows,
                threshold: opts.max_malformed_fraction * 100.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidentLoad {
    pub incidents: Vec<Incident>,
    /// Rows carrying an address but no coordinates.
    pub pending: Vec<PendingIncident>,
    pub report: LoadReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiLoad {
    pub set: PoiSet,
    pub report: LoadReport,
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn column_map(headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>, DataError> {
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let missing: Vec<&str> = required.iter().copied().filter(|r| !names.contains(r)).collect();
    if !missing.is_empty() {
        return Err(DataError::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    Ok(required
        .iter()
        .map(|r| names.iter().position(|n| n == r).unwrap())
        .collect())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r)
}

pub fn load_incidents(path: impl AsRef<Path>, taxonomy: &Taxonomy, opts: &LoadOptions) -> Result<IncidentLoad, DataError> {
    load_incidents_from_reader(open(path.as_ref())?, taxonomy, opts)
}

pub fn load_incidents_from_reader<R: Read>(r: R, taxonomy: &Taxonomy, opts: &LoadOptions) -> Result<IncidentLoad, DataError> {
    let mut rdr = reader(r);
    let cols = column_map(rdr.headers()?, &INCIDENT_HEADER)?;
    let mut out = IncidentLoad {
        incidents: Vec::new(),
        pending: Vec::new(),
        report: LoadReport::default(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        out.report.total_rows += 1;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                out.report.reject(line, format!("unreadable row: {e}"));
                continue;
            }
        };
        let field = |k: usize| rec.get(cols[k]).map(str::trim);
        if cols.iter().any(|&c| c >= rec.len()) {
            out.report.reject(line, "too few fields");
            continue;
        }
        match parse_incident(line, &field, taxonomy) {
            Ok((parsed, warning)) => {
                if let Some(w) = warning {
                    out.report.warnings.push(RowIssue { line, reason: w });
                }
                match parsed {
                    Parsed::Located(inc) => out.incidents.push(inc),
                    Parsed::Pending(p) => out.pending.push(p),
                }
            }
            Err(reason) => out.report.reject(line, reason),
        }
    }
    out.report.check_threshold(opts)?;
    Ok(out)
}

enum Parsed {
    Located(Incident),
    Pending(PendingIncident),
}

fn parse_incident<'a>(
    line: usize,
    field: &dyn Fn(usize) -> Option<&'a str>,
    taxonomy: &Taxonomy,
) -> Result<(Parsed, Option<String>), String> {
    let get = |k: usize| field(k).unwrap_or("");
    let id = get(0);
    if id.is_empty() {
        return Err("missing id".into());
    }
    let date = NaiveDate::parse_from_str(get(1), DATE_FORMAT).map_err(|e| format!("invalid date {:?}: {e}", get(1)))?;
    let crime_type = get(5);
    if !taxonomy.contains(crime_type) {
        return Err(format!("unknown crime type {crime_type:?}"));
    }
    let fine_usd: f64 = get(6).parse().map_err(|_| format!("invalid fine {:?}", get(6)))?;
    if !fine_usd.is_finite() {
        return Err("non-finite fine".into());
    }
    if fine_usd < 0.0 {
        return Err("negative fine".into());
    }
    let warning = (date.year() < HISTORY_START_YEAR).then(|| format!("date {date} predates {HISTORY_START_YEAR}"));
    let address = get(4);
    let address = (!address.is_empty()).then(|| address.to_string());
    let (lat, lon) = (get(2), get(3));
    let parsed = match (lat.is_empty(), lon.is_empty()) {
        (true, true) => {
            let address = address.ok_or("no coordinates and no address")?;
            Parsed::Pending(PendingIncident {
                line,
                id: id.to_string(),
                date,
                address,
                crime_type: crime_type.to_string(),
                fine_usd,
                respondent: get(7).to_string(),
            })
        }
        (false, false) => {
            let location = parse_point(lat, lon)?;
            Parsed::Located(Incident {
                id: id.to_string(),
                date,
                location,
                address,
                crime_type: crime_type.to_string(),
                fine_usd,
                respondent: get(7).to_string(),
            })
        }
        _ => return Err("only one of lat/lon present".into()),
    };
    Ok((parsed, warning))
}

fn parse_point(lat: &str, lon: &str) -> Result<GeoPoint, String> {
    let lat: f64 = lat.parse().map_err(|_| format!("invalid latitude {lat:?}"))?;
    let lon: f64 = lon.parse().map_err(|_| format!("invalid longitude {lon:?}"))?;
    GeoPoint::new(lat, lon).map_err(|e| e.to_string())
}

pub fn load_poi(path: impl AsRef<Path>, category: &str, opts: &LoadOptions) -> Result<PoiLoad, DataError> {
    load_poi_from_reader(open(path.as_ref())?, category, opts)
}

pub fn load_poi_from_reader<R: Read>(r: R, category: &str, opts: &LoadOptions) -> Result<PoiLoad, DataError> {
    let mut rdr = reader(r);
    // An entirely empty file has no header; treat it as an empty set.
    let headers = rdr.headers()?.clone();
    let mut report = LoadReport::default();
    let mut points = Vec::new();
    if headers.is_empty() {
        return Ok(PoiLoad {
            set: PoiSet::new(category, points)?,
            report,
        });
    }
    let cols = column_map(&headers, &POI_HEADER)?;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        report.total_rows += 1;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                report.reject(line, format!("unreadable row: {e}"));
                continue;
            }
        };
        match (rec.get(cols[0]), rec.get(cols[1])) {
            (Some(lat), Some(lon)) => match parse_point(lat.trim(), lon.trim()) {
                Ok(p) => points.push(p),
                Err(reason) => report.reject(line, reason),
            },
            _ => report.reject(line, "too few fields"),
        }
    }
    report.check_threshold(opts)?;
    Ok(PoiLoad {
        set: PoiSet::new(category, points)?,
        report,
    })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Writes incidents with the documented header. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_incidents<W: Write>(w: W, incidents: &[Incident]) -> Result<(), DataError> {
    let mut wtr = csv_writer(w);
    wtr.write_record(INCIDENT_HEADER)?;
    for inc in incidents {
        wtr.write_record([
            inc.id.as_str(),
            &inc.date.format(DATE_FORMAT).to_string(),
            &inc.location.lat().to_string(),
            &inc.location.lon().to_string(),
            inc.address.as_deref().unwrap_or(""),
            &inc.crime_type,
            &inc.fine_usd.to_string(),
            &inc.respondent,
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_poi<W: Write>(w: W, set: &PoiSet) -> Result<(), DataError> {
    let mut wtr = csv_writer(w);
    wtr.write_record(POI_HEADER)?;
    for p in &set.points {
        wtr.write_record([p.lat().to_string(), p.lon().to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,date,lat,lon,address,crime_type,fine_usd,respondent\n";

    fn tax() -> Taxonomy {
        Taxonomy::new(["fraud", "bribery"]).unwrap()
    }

    fn load(body: &str) -> Result<IncidentLoad, DataError> {
        let lenient = LoadOptions {
            max_malformed_fraction: 1.0,
        };
        load_incidents_from_reader(body.as_bytes(), &tax(), &lenient)
    }

    #[test]
    fn header_only_is_empty() {
        let out = load(HEADER).unwrap();
        assert!(out.incidents.is_empty() && out.pending.is_empty());
        assert!(out.report.errors.is_empty());
    }

    #[test]
    fn missing_columns_are_named() {
        let err = load("id,date,lat\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lon") && msg.contains("fine_usd"), "{msg}");
    }

    #[test]
    fn negative_fine_is_reported() {
        let out = load(&format!("{HEADER}a,2001-02-03,40.7,-74.0,,fraud,-5,Acme\n")).unwrap();
        assert!(out.incidents.is_empty());
        assert_eq!(out.report.errors, vec![RowIssue { line: 1, reason: "negative fine".into() }]);
    }

    #[test]
    fn address_only_rows_are_pending() {
        let out = load(&format!("{HEADER}a,2001-02-03,,,\"1 Wall St, New York\",fraud,100,Acme\n")).unwrap();
        assert_eq!(out.pending.len(), 1);
        assert_eq!(out.pending[0].address, "1 Wall St, New York");
    }

    #[test]
    fn bad_rows() {
        let body = format!(
            "{HEADER}a,2001-02-30,40,-74,,fraud,1,x\nb,2001-02-03,95,-74,,fraud,1,x\nc,2001-02-03,40,-74,,arson,1,x\nd,2001-02-03,40,,,fraud,1,x\ne,2001\n"
        );
        let out = load(&body).unwrap();
        assert_eq!(out.report.errors.len(), 5);
        assert_eq!(out.report.total_rows, 5);
    }

    #[test]
    fn old_dates_warn() {
        let out = load(&format!("{HEADER}a,1950-01-01,40,-74,,fraud,1,x\n")).unwrap();
        assert_eq!(out.incidents.len(), 1);
        assert_eq!(out.report.warnings.len(), 1);
    }

    #[test]
    fn malformed_threshold() {
        let body = format!("{HEADER}a,2001-01-01,40,-74,,fraud,1,x\nb,2001-01-01,40,-74,,fraud,-1,x\n");
        let err = load_incidents_from_reader(body.as_bytes(), &tax(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, DataError::TooManyMalformed { malformed: 1, total: 2, .. }));
    }

    #[test]
    fn poi_edge_cases() {
        let empty = load_poi_from_reader("".as_bytes(), "liquor_licenses", &LoadOptions::default()).unwrap();
        assert!(empty.set.points.is_empty());
        let header_only = load_poi_from_reader("lat,lon,name\n".as_bytes(), "x", &LoadOptions::default()).unwrap();
        assert!(header_only.set.points.is_empty());
        let lenient = LoadOptions {
            max_malformed_fraction: 1.0,
        };
        let bad = load_poi_from_reader("lat,lon,name\n95.0,10,Bar\n40,-74,Pub\n".as_bytes(), "x", &lenient).unwrap();
        assert_eq!(bad.set.points.len(), 1);
        assert_eq!(bad.report.errors.len(), 1);
        assert_eq!(bad.report.errors[0].line, 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_incidents("/nonexistent/incidents.csv", &tax(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }
}
