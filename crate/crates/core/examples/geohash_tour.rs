//! Encoding, decoding, neighbors and bounding-box covers.
//!
//! cargo run --example geohash_tour -- [lat] [lon]

use riskgrid::geogrid::{cell_size_deg, cover, cover_count, encode, haversine_m, neighbors, BBox, Direction, GeoPoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (lat, lon) = match args[..] {
        [lat, lon] => (lat, lon),
        _ => (40.7075, -74.0113),
    };
    let p = GeoPoint::new(lat, lon)?;

    println!("{:>4} {:<13} {:>11} {:>11}", "prec", "geohash", "height_m", "width_m");
    for precision in 1..=9 {
        let g = encode(p, precision)?;
        let b = g.bbox();
        let sw = GeoPoint::new(b.min_lat(), b.min_lon())?;
        let h = haversine_m(sw, GeoPoint::new(b.max_lat(), b.min_lon())?);
        let w = haversine_m(sw, GeoPoint::new(b.min_lat(), b.max_lon())?);
        println!("{precision:>4} {:<13} {h:>11.1} {w:>11.1}", g.as_str());
    }

    let g = encode(p, 7)?;
    let (dlat, dlon) = cell_size_deg(7);
    println!("\n{g} spans {dlat:.6} x {dlon:.6} degrees, center {:?}", g.center());
    for (dir, n) in neighbors(&g).iter() {
        println!("  {dir:?}: {}", n.map(|n| n.as_str()).unwrap_or("-"));
    }

    let polar = encode(GeoPoint::new(89.99, 0.0)?, 3)?;
    println!("\n{polar} near the pole has {} of 8 neighbors", neighbors(&polar).existing().count());
    let dateline = encode(GeoPoint::new(0.0, 179.99)?, 3)?;
    let east = neighbors(&dateline).get(Direction::E).cloned();
    println!("{dateline} at the antimeridian: east neighbor {}", east.map(|g| g.to_string()).unwrap_or_default());

    let b = BBox::new(lat - 0.005, lat + 0.005, lon - 0.005, lon + 0.005)?;
    let cells = cover(&b, 7)?;
    println!("\n1 km box at precision 7: {} cells (cover_count {})", cells.len(), cover_count(&b, 7)?);
    println!("first {:?}", cells.iter().take(4).map(|c| c.as_str()).collect::<Vec<_>>());
    Ok(())
}
