//! Trains on the small scenario and renders a GeoJSON risk surface.
//!
//! cargo run --release --example risk_surface -- [out.geojson]

use std::path::PathBuf;

use riskgrid::data::synth_generate;
use riskgrid::features::{featurize, label_cells};
use riskgrid::riskmodel::{poi_fingerprint, train_all};
use riskgrid::service::{render_surface, surface_to_geojson, Config};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/small.toml"))?;
    let cfg = config.synth.as_ref().ok_or("no [synth] section")?;
    let out = synth_generate(cfg)?;
    let features = featurize(&out.grid, &out.poi_sets, cfg.features)?;
    let (labels, _) = label_cells(&out.grid, &out.incidents, &cfg.taxonomy)?;
    let categories: Vec<String> = out.poi_sets.iter().map(|s| s.category.clone()).collect();
    let mut model = train_all(&out.grid, &features, &labels, &cfg.taxonomy, cfg.features, &categories, &config.train)?;
    model.metadata.poi_fingerprint = Some(poi_fingerprint(&out.poi_sets));

    let surface = render_surface(&model, &out.poi_sets, cfg.bbox, cfg.precision, 10_000)?;
    let mut ranked: Vec<_> = surface.cells.iter().collect();
    ranked.sort_by(|a, b| b.p_crime.total_cmp(&a.p_crime));
    println!("{} cells; highest risk:", surface.cells.len());
    for c in ranked.iter().take(5) {
        println!("  {} p_crime {:.3} expected fine {:>10.0} USD", c.geohash, c.p_crime, c.expected_fine_usd);
    }

    let coarse = render_surface(&model, &out.poi_sets, cfg.bbox, 6, 10_000)?;
    println!("same box at precision 6: {} cells", coarse.cells.len());

    let doc = surface_to_geojson(&surface);
    match std::env::args().nth(1) {
        Some(dest) => {
            std::fs::write(&dest, serde_json::to_vec(&doc)?)?;
            println!("wrote {dest}");
        }
        None => println!("first feature: {}", doc["features"][0]),
    }
    Ok(())
}
