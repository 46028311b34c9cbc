use std::collections::HashMap;

use crate::geogrid::{encode, haversine_m, GeoPoint, Geohash, EARTH_RADIUS_M, MAX_PRECISION};

/// Bucketed point index supporting exact radius queries and cell counts.
///
/// Points are stored in a canonical order (by latitude, then longitude), so
/// every aggregate over query results is independent of input order.
pub struct PoiIndex {
    points: Vec<GeoPoint>,
    /// Full-precision geohash of every point, sorted, for prefix counting.
    codes: Vec<String>,
    bucket_deg: f64,
    lon_buckets: i64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl PoiIndex {
    /// `bucket_m` is the bucket edge along a meridian; pick it near the
    /// most common query radius.
    pub fn new(points: &[GeoPoint], bucket_m: f64) -> Self {
        let mut points = points.to_vec();
        points.sort_by(|a, b| a.lat().total_cmp(&b.lat()).then(a.lon().total_cmp(&b.lon())));
        let bucket_deg = (bucket_m / EARTH_RADIUS_M).to_degrees().clamp(1e-6, 180.0);
        let lon_buckets = (360.0 / bucket_deg).ceil() as i64;
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(Self::bucket_of(bucket_deg, lon_buckets, *p))
                .or_default()
                .push(i as u32);
        }
        let mut codes: Vec<String> = points
            .iter()
            .map(|p| encode(*p, MAX_PRECISION).expect("valid point").as_str().to_string())
            .collect();
        codes.sort_unstable();
        Self {
            points,
            codes,
            bucket_deg,
            lon_buckets,
            buckets,
        }
    }

    fn bucket_of(bucket_deg: f64, lon_buckets: i64, p: GeoPoint) -> (i64, i64) {
        let r = ((p.lat() + 90.0) / bucket_deg).floor() as i64;
        let c = (((p.lon() + 180.0) / bucket_deg).floor() as i64).rem_euclid(lon_buckets);
        (r, c)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    /// Number of points whose geohash lies inside `cell`.
    pub fn count_in_cell(&self, cell: &Geohash) -> usize {
        let prefix = cell.as_str();
        let lo = self.codes.partition_point(|c| c.as_str() < prefix);
        let hi = lo + self.codes[lo..].partition_point(|c| c.starts_with(prefix));
        hi - lo
    }

    /// All points within `radius_m` of `center` as (canonical index, distance),
    /// in canonical order.
    pub fn within(&self, center: GeoPoint, radius_m: f64) -> Vec<(usize, f64)> {
        let mut candidates = self.candidates(center, radius_m);
        candidates.sort_unstable();
        candidates
            .into_iter()
            .filter_map(|i| {
                let d = haversine_m(center, self.points[i]);
                (d <= radius_m).then_some((i, d))
            })
            .collect()
    }

    /// Distance to the nearest point, if one lies within `max_m`.
    pub fn nearest_within(&self, center: GeoPoint, max_m: f64) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let mut radius = (self.bucket_deg.to_radians() * EARTH_RADIUS_M).min(max_m);
        loop {
            let best = self
                .candidates(center, radius)
                .into_iter()
                .map(|i| haversine_m(center, self.points[i]))
                .filter(|&d| d <= radius)
                .min_by(f64::total_cmp);
            if best.is_some() || radius >= max_m {
                return best;
            }
            radius = (radius * 2.0).min(max_m);
        }
    }

    /// Indices of every point that could lie within `radius_m` (a superset).
    fn candidates(&self, center: GeoPoint, radius_m: f64) -> Vec<usize> {
        let ang = radius_m / EARTH_RADIUS_M;
        // Small margins keep the bounding test conservative under rounding.
        let dlat = ang.to_degrees() * (1.0 + 1e-9) + 1e-9;
        let lat_lo = center.lat() - dlat;
        let lat_hi = center.lat() + dlat;
        let polar = ang >= std::f64::consts::FRAC_PI_2 || lat_lo <= -90.0 || lat_hi >= 90.0;
        let full_lon = polar || {
            let s = ang.sin() / center.lat().to_radians().cos();
            s >= 1.0
        };
        let r0 = ((lat_lo.max(-90.0) + 90.0) / self.bucket_deg).floor() as i64;
        let r1 = ((lat_hi.min(90.0) + 90.0) / self.bucket_deg).floor() as i64;
        let cols: Vec<i64> = if full_lon {
            (0..self.lon_buckets).collect()
        } else {
            let dlon = (ang.sin() / center.lat().to_radians().cos()).asin().to_degrees() * (1.0 + 1e-9) + 1e-9;
            let c0 = ((center.lon() - dlon + 180.0) / self.bucket_deg).floor() as i64;
            let c1 = ((center.lon() + dlon + 180.0) / self.bucket_deg).floor() as i64;
            if c1 - c0 + 1 >= self.lon_buckets {
                (0..self.lon_buckets).collect()
            } else {
                (c0..=c1).map(|c| c.rem_euclid(self.lon_buckets)).collect()
            }
        };
        let mut out = Vec::new();
        for r in r0..=r1 {
            for &c in &cols {
                if let Some(ids) = self.buckets.get(&(r, c)) {
                    out.extend(ids.iter().map(|&i| i as usize));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, lat: (f64, f64), lon: (f64, f64)) -> Vec<GeoPoint> {
        (0..n)
            .map(|_| GeoPoint::new(rng.random_range(lat.0..lat.1), rng.random_range(lon.0..lon.1)).unwrap())
            .collect()
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 400, (40.5, 41.0), (-74.3, -73.7));
        let idx = PoiIndex::new(&pts, 3000.0);
        for _ in 0..50 {
            let c = random_points(&mut rng, 1, (40.4, 41.1), (-74.4, -73.6))[0];
            let got: Vec<f64> = idx.within(c, 3000.0).into_iter().map(|(_, d)| d).collect();
            let mut want: Vec<f64> = idx
                .points()
                .iter()
                .map(|p| haversine_m(c, *p))
                .filter(|&d| d <= 3000.0)
                .collect();
            let mut got_sorted = got.clone();
            got_sorted.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            assert_eq!(got_sorted, want);
            let nearest = idx.nearest_within(c, 50_000.0);
            let brute = idx.points().iter().map(|p| haversine_m(c, *p)).min_by(f64::total_cmp);
            assert_eq!(nearest, brute);
        }
    }

    #[test]
    fn antimeridian_and_pole_queries() {
        let pts = vec![
            GeoPoint::new(0.0, 179.99).unwrap(),
            GeoPoint::new(0.0, -179.99).unwrap(),
            GeoPoint::new(89.99, 0.0).unwrap(),
            GeoPoint::new(89.99, 180.0).unwrap(),
        ];
        let idx = PoiIndex::new(&pts, 3000.0);
        assert_eq!(idx.within(GeoPoint::new(0.0, 180.0).unwrap(), 3000.0).len(), 2);
        assert_eq!(idx.within(GeoPoint::new(90.0, 45.0).unwrap(), 3000.0).len(), 2);
    }

    #[test]
    fn cell_counts() {
        let pts = vec![
            GeoPoint::new(40.15, 74.0).unwrap(),
            GeoPoint::new(40.1, 74.1).unwrap(),
            GeoPoint::new(40.1, 73.9).unwrap(),
            GeoPoint::new(10.0, 10.0).unwrap(),
        ];
        let idx = PoiIndex::new(&pts, 1000.0);
        assert_eq!(idx.count_in_cell(&Geohash::parse("txhs").unwrap()), 3);
        assert_eq!(idx.count_in_cell(&Geohash::parse("txhs7v").unwrap()), 1);
        assert_eq!(idx.count_in_cell(&Geohash::parse("0").unwrap()), 0);
    }
}
