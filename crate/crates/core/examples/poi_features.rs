//! Per-cell POI features: counts, nearest distance and Gaussian kernel density,
//! with 8-neighbor means, written as CSV.
//!
//! cargo run --release --example poi_features -- [out.csv]

use std::path::PathBuf;

use riskgrid::data::synth_generate;
use riskgrid::features::Featurizer;
use riskgrid::service::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/small.toml");
    let cfg = Config::load(&path)?.synth.ok_or("no [synth] section")?;
    let out = synth_generate(&cfg)?;

    let featurizer = Featurizer::new(&out.poi_sets, cfg.features)?;
    let m = featurizer.featurize(&out.grid);
    println!("{} cells x {} columns, kernel radius {} m", m.n_rows(), m.n_cols(), cfg.features.kernel_radius_m());

    println!("\n{:<34} {:>10} {:>10} {:>10}", "column", "mean", "min", "max");
    for name in &m.column_names {
        let col = m.column(name).unwrap();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("{name:<34} {mean:>10.3} {lo:>10.3} {hi:>10.3}");
    }

    // A cell outside the grid is featurized on demand.
    let far = riskgrid::geogrid::Geohash::parse("dr5ru6j")?;
    let row = featurizer.cell_features(&far);
    println!("\n{far}: dist to first category {:.0} m", row[1]);

    if let Some(dest) = std::env::args().nth(1) {
        m.write_csv(&out.grid, std::fs::File::create(&dest)?)?;
        println!("wrote {dest}");
    }
    Ok(())
}
