use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{BBox, GeoError, GeoPoint};

/// Standard geohash base32 alphabet (no `a`, `i`, `l`, `o`).
pub const ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

pub const MAX_PRECISION: usize = 12;

fn char_value(c: u8) -> Option<u8> {
    ALPHABET.iter().position(|&a| a == c).map(|p| p as u8)
}

/// Number of (latitude, longitude) bits carried by a geohash of `precision` characters.
///
/// Bits are interleaved longitude-first, so longitude gets the extra bit when
/// the total is odd.
pub fn bit_split(precision: usize) -> (u32, u32) {
    let total = 5 * precision as u32;
    (total / 2, total - total / 2)
}

/// Height and width of a cell in degrees.
pub fn cell_size_deg(precision: usize) -> (f64, f64) {
    let (lat_bits, lon_bits) = bit_split(precision);
    (180.0 / (1u64 << lat_bits) as f64, 360.0 / (1u64 << lon_bits) as f64)
}

pub(crate) fn check_precision(precision: usize) -> Result<(), GeoError> {
    if (1..=MAX_PRECISION).contains(&precision) {
        Ok(())
    } else {
        Err(GeoError::InvalidPrecision(precision))
    }
}

/// A validated geohash. The precision is the code length.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Geohash {
    code: String,
}

impl Geohash {
    /// Parses a geohash code. Only the lowercase alphabet is accepted.
    pub fn parse(code: &str) -> Result<Self, GeoError> {
        let bytes = code.as_bytes();
        if bytes.is_empty() || bytes.len() > MAX_PRECISION {
            return Err(GeoError::Parse {
                code: code.to_string(),
                reason: format!("length must be 1..={MAX_PRECISION}"),
            });
        }
        if let Some(bad) = bytes.iter().find(|&&b| char_value(b).is_none()) {
            return Err(GeoError::Parse {
                code: code.to_string(),
                reason: format!("character {:?} is not in the geohash alphabet", *bad as char),
            });
        }
        Ok(Self {
            code: code.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.code
    }

    pub fn precision(&self) -> usize {
        self.code.len()
    }

    /// Builds a geohash from its row (latitude) and column (longitude) index
    /// in the global grid at `precision`.
    pub fn from_indices(lat_idx: u64, lon_idx: u64, precision: usize) -> Result<Self, GeoError> {
        check_precision(precision)?;
        let (lat_bits, lon_bits) = bit_split(precision);
        if lat_idx >= 1 << lat_bits || lon_idx >= 1 << lon_bits {
            return Err(GeoError::IndexOutOfRange {
                lat_idx,
                lon_idx,
                precision,
            });
        }
        let total = 5 * precision as u32;
        let mut bits: u64 = 0;
        let (mut lat_pos, mut lon_pos) = (lat_bits, lon_bits);
        for i in 0..total {
            let bit = if i % 2 == 0 {
                lon_pos -= 1;
                (lon_idx >> lon_pos) & 1
            } else {
                lat_pos -= 1;
                (lat_idx >> lat_pos) & 1
            };
            bits = (bits << 1) | bit;
        }
        let mut code = String::with_capacity(precision);
        for c in (0..precision).rev() {
            code.push(ALPHABET[((bits >> (5 * c)) & 31) as usize] as char);
        }
        Ok(Self { code })
    }

    /// Row and column of this cell in the global grid at its precision.
    pub fn indices(&self) -> (u64, u64) {
        let (mut lat_idx, mut lon_idx) = (0u64, 0u64);
        let mut even = true;
        for &b in self.code.as_bytes() {
            let v = char_value(b).expect("validated on construction");
            for shift in (0..5).rev() {
                let bit = u64::from((v >> shift) & 1);
                if even {
                    lon_idx = (lon_idx << 1) | bit;
                } else {
                    lat_idx = (lat_idx << 1) | bit;
                }
                even = !even;
            }
        }
        (lat_idx, lon_idx)
    }

    /// Exact bounds of the cell.
    pub fn bbox(&self) -> BBox {
        let (lat_idx, lon_idx) = self.indices();
        let (h, w) = cell_size_deg(self.precision());
        // Products of small integers and powers of two: exact in f64 for precision <= 12.
        let min_lat = -90.0 + lat_idx as f64 * h;
        let min_lon = -180.0 + lon_idx as f64 * w;
        BBox::new_unchecked(min_lat, min_lat + h, min_lon, min_lon + w)
    }

    pub fn center(&self) -> GeoPoint {
        let b = self.bbox();
        GeoPoint::new_unchecked((b.min_lat() + b.max_lat()) / 2.0, (b.min_lon() + b.max_lon()) / 2.0)
    }

    /// Ancestor cell at a coarser precision (prefix property).
    pub fn truncate(&self, precision: usize) -> Result<Self, GeoError> {
        check_precision(precision)?;
        if precision > self.precision() {
            return Err(GeoError::InvalidPrecision(precision));
        }
        Ok(Self {
            code: self.code[..precision].to_string(),
        })
    }

    pub fn contains(&self, other: &Geohash) -> bool {
        other.code.starts_with(&self.code)
    }
}

impl fmt::Display for Geohash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

impl fmt::Debug for Geohash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Geohash({})", self.code)
    }
}

impl FromStr for Geohash {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for Geohash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.code)
    }
}

impl<'de> Deserialize<'de> for Geohash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Geohash::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Grid row/column of `point` at the given bit depths, by binary subdivision.
/// Values on a midpoint go to the upper half.
pub(crate) fn point_indices(point: GeoPoint, lat_bits: u32, lon_bits: u32) -> (u64, u64) {
    fn bisect(value: f64, mut lo: f64, mut hi: f64, bits: u32) -> u64 {
        let mut idx = 0u64;
        for _ in 0..bits {
            let mid = (lo + hi) / 2.0;
            if value >= mid {
                idx = (idx << 1) | 1;
                lo = mid;
            } else {
                idx <<= 1;
                hi = mid;
            }
        }
        idx
    }
    (
        bisect(point.lat(), -90.0, 90.0, lat_bits),
        bisect(point.lon(), -180.0, 180.0, lon_bits),
    )
}

/// Encodes `point` as the geohash of the cell containing it.
pub fn encode(point: GeoPoint, precision: usize) -> Result<Geohash, GeoError> {
    check_precision(precision)?;
    let (lat_bits, lon_bits) = bit_split(precision);
    let (lat_idx, lon_idx) = point_indices(point, lat_bits, lon_bits);
    Geohash::from_indices(lat_idx, lon_idx, precision)
}

pub fn decode_bbox(g: &Geohash) -> BBox {
    g.bbox()
}
