//! Geohash gridding: encoding, decoding, box covers, neighbor topology and
//! great-circle distance.
//!
//! Every prediction in the crate is keyed by a [`Geohash`] cell. Codes use the
//! standard base32 alphabet with longitude-first bit interleaving; a point on a
//! subdivision midpoint belongs to the upper half.

mod geohash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geohash::{bit_split, cell_size_deg, decode_bbox, encode, Geohash, ALPHABET, MAX_PRECISION};

/// Mean Earth radius used for all distances in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Default upper bound on the number of cells a single cover may produce.
pub const DEFAULT_CELL_CAP: usize = 250_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("point ({lat}, {lon}) outside lat [-90, 90] / lon [-180, 180]")]
    InvalidPoint { lat: f64, lon: f64 },
    #[error("precision {0} outside 1..=12")]
    InvalidPrecision(usize),
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error("malformed geohash {code:?}: {reason}")]
    Parse { code: String, reason: String },
    #[error("grid index ({lat_idx}, {lon_idx}) out of range at precision {precision}")]
    IndexOutOfRange {
        lat_idx: u64,
        lon_idx: u64,
        precision: usize,
    },
    #[error("cover would produce {count} cells, above the cap of {cap}")]
    CellCapExceeded { count: u64, cap: usize },
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;
    fn try_from(r: RawPoint) -> Result<Self, GeoError> {
        GeoPoint::new(r.lat, r.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidPoint { lat, lon })
        }
    }

    pub(crate) fn new_unchecked(lat: f64, lon: f64) -> Self {
        debug_assert!(Self::new(lat, lon).is_ok());
        Self { lat, lon }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Axis-aligned lat/lon box. Boxes crossing the antimeridian are not
/// representable; split them into two boxes instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBBox", into = "RawBBox")]
pub struct BBox {
    min_lat: f64,
    max_lat: f64,
    min_lon: f64,
    max_lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBBox {
    min_lat: f64,
    max_lat: f64,
    min_lon: f64,
    max_lon: f64,
}

impl TryFrom<RawBBox> for BBox {
    type Error = GeoError;
    fn try_from(r: RawBBox) -> Result<Self, GeoError> {
        BBox::new(r.min_lat, r.max_lat, r.min_lon, r.max_lon)
    }
}

impl From<BBox> for RawBBox {
    fn from(b: BBox) -> Self {
        RawBBox {
            min_lat: b.min_lat,
            max_lat: b.max_lat,
            min_lon: b.min_lon,
            max_lon: b.max_lon,
        }
    }
}

impl BBox {
    pub fn new(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Result<Self, GeoError> {
        GeoPoint::new(min_lat, min_lon)?;
        GeoPoint::new(max_lat, max_lon)?;
        if !(min_lat < max_lat) {
            return Err(GeoError::InvalidBBox(format!(
                "min_lat {min_lat} must be below max_lat {max_lat}"
            )));
        }
        if !(min_lon < max_lon) {
            return Err(GeoError::InvalidBBox(format!(
                "min_lon {min_lon} must be below max_lon {max_lon} (antimeridian-crossing boxes are not supported)"
            )));
        }
        Ok(Self {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
        })
    }

    pub(crate) fn new_unchecked(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Self {
        Self {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
        }
    }

    /// Parses `minLon,minLat,maxLon,maxLat` (GeoJSON axis order).
    pub fn parse_lon_lat(s: &str) -> Result<Self, GeoError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeoError::InvalidBBox(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [min_lon, min_lat, max_lon, max_lat] => BBox::new(*min_lat, *max_lat, *min_lon, *max_lon),
            _ => Err(GeoError::InvalidBBox(format!(
                "{s:?}: expected minLon,minLat,maxLon,maxLat"
            ))),
        }
    }

    pub fn min_lat(&self) -> f64 {
        self.min_lat
    }
    pub fn max_lat(&self) -> f64 {
        self.max_lat
    }
    pub fn min_lon(&self) -> f64 {
        self.min_lon
    }
    pub fn max_lon(&self) -> f64 {
        self.max_lon
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new_unchecked((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }

    /// Closed containment.
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    /// True when the two boxes share positive area.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lat < other.max_lat
            && other.min_lat < self.max_lat
            && self.min_lon < other.max_lon
            && other.min_lon < self.max_lon
    }
}

/// Every cell at `precision` whose box shares positive area with `b`,
/// ordered south to north, then west to east. Uses [`DEFAULT_CELL_CAP`].
pub fn cover(b: &BBox, precision: usize) -> Result<Vec<Geohash>, GeoError> {
    cover_with_cap(b, precision, DEFAULT_CELL_CAP)
}

/// Number of cells [`cover`] would return, without materializing them.
pub fn cover_count(b: &BBox, precision: usize) -> Result<u64, GeoError> {
    let (rows, cols) = cover_ranges(b, precision)?;
    Ok((rows.1 - rows.0 + 1) * (cols.1 - cols.0 + 1))
}

pub fn cover_with_cap(b: &BBox, precision: usize, cap: usize) -> Result<Vec<Geohash>, GeoError> {
    let ((r0, r1), (c0, c1)) = cover_ranges(b, precision)?;
    let count = (r1 - r0 + 1) * (c1 - c0 + 1);
    if count > cap as u64 {
        return Err(GeoError::CellCapExceeded { count, cap });
    }
    let mut cells = Vec::with_capacity(count as usize);
    for row in r0..=r1 {
        for col in c0..=c1 {
            cells.push(Geohash::from_indices(row, col, precision)?);
        }
    }
    Ok(cells)
}

type IndexRange = (u64, u64);

fn cover_ranges(b: &BBox, precision: usize) -> Result<(IndexRange, IndexRange), GeoError> {
    geohash::check_precision(precision)?;
    let (lat_bits, lon_bits) = bit_split(precision);
    let (h, w) = cell_size_deg(precision);
    let (r0, c0) = geohash::point_indices(GeoPoint::new_unchecked(b.min_lat, b.min_lon), lat_bits, lon_bits);
    let (mut r1, mut c1) = geohash::point_indices(GeoPoint::new_unchecked(b.max_lat, b.max_lon), lat_bits, lon_bits);
    // A cell whose lower edge sits exactly on the box's upper edge only touches it.
    if r1 > r0 && -90.0 + r1 as f64 * h == b.max_lat {
        r1 -= 1;
    }
    if c1 > c0 && -180.0 + c1 as f64 * w == b.max_lon {
        c1 -= 1;
    }
    Ok(((r0, r1), (c0, c1)))
}

/// Compass directions in the order [`neighbors`] reports them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    /// (row, column) step.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::N => (1, 0),
            Direction::NE => (1, 1),
            Direction::E => (0, 1),
            Direction::SE => (-1, 1),
            Direction::S => (-1, 0),
            Direction::SW => (-1, -1),
            Direction::W => (0, -1),
            Direction::NW => (1, -1),
        }
    }
}

/// The eight surrounding cells. Entries are `None` where the cell borders a
/// pole and has no neighbor in that direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    cells: [Option<Geohash>; 8],
}

impl Neighbors {
    pub fn get(&self, d: Direction) -> Option<&Geohash> {
        self.cells[d as usize].as_ref()
    }

    pub fn existing(&self) -> impl Iterator<Item = &Geohash> {
        self.cells.iter().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Direction, Option<&Geohash>)> {
        Direction::ALL.iter().map(move |&d| (d, self.get(d)))
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }
}

/// Same-precision cells sharing an edge or corner with `g`. East/west wrap
/// across the antimeridian.
pub fn neighbors(g: &Geohash) -> Neighbors {
    let precision = g.precision();
    let (lat_bits, lon_bits) = bit_split(precision);
    let (rows, cols) = (1i64 << lat_bits, 1i64 << lon_bits);
    let (row, col) = g.indices();
    let cells = Direction::ALL.map(|d| {
        let (dr, dc) = d.offset();
        let r = row as i64 + dr;
        if r < 0 || r >= rows {
            return None;
        }
        let c = (col as i64 + dc).rem_euclid(cols);
        Some(Geohash::from_indices(r as u64, c as u64, precision).expect("indices in range"))
    });
    Neighbors { cells }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.clamp(0.0, 1.0).sqrt().asin()
}
