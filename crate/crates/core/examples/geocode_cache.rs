//! Address geocoding behind a persistent cache. Uses the HTTP geocoder when
//! RISKGRID_GEOCODER_URL is set, otherwise a fixed in-memory table.
//!
//! cargo run --example geocode_cache -- [address...]

use riskgrid::data::{CachingGeocoder, Geocoder, HttpGeocoder, StubGeocoder};
use riskgrid::geogrid::{encode, GeoPoint};

fn lookup(g: &dyn Geocoder, addresses: &[String]) {
    for a in addresses {
        match g.geocode(a) {
            Ok(p) => println!("  {a:<28} {:.5},{:.5} {}", p.lat(), p.lon(), encode(p, 7).unwrap()),
            Err(e) => println!("  {a:<28} error: {e}"),
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut addresses: Vec<String> = std::env::args().skip(1).collect();
    if addresses.is_empty() {
        addresses = ["11 Wall Street, New York", "11  WALL street, new york", "Nowhere"].map(String::from).to_vec();
    }
    let tmp = tempfile::tempdir()?;
    let cache_file = tmp.path().join("geocode_cache.json");

    match HttpGeocoder::from_env() {
        Some(http) => {
            let g = CachingGeocoder::with_cache_file(http, &cache_file)?;
            lookup(&g, &addresses);
            println!("{} cached", g.cached_len());
        }
        None => {
            let stub = StubGeocoder::new().with("11 Wall Street, New York", GeoPoint::new(40.7069, -74.0113)?);
            let g = CachingGeocoder::with_cache_file(stub, &cache_file)?;
            lookup(&g, &addresses);
            println!("{} lookups reached the backend, {} cached", g.inner().calls(), g.cached_len());

            let reopened = CachingGeocoder::with_cache_file(StubGeocoder::new(), &cache_file)?;
            lookup(&reopened, &addresses[..1]);
            println!("after reopening: {} backend lookups", reopened.inner().calls());
        }
    }
    Ok(())
}
