//! End-to-end run on the bundled synthetic scenario: generate, label, train
//! all three sub-models with cross-validation, then compare against the
//! planted truth.
//!
//! cargo run --release --example train_pipeline -- [config.toml] [model_out]

use std::path::PathBuf;
use std::time::Instant;

use riskgrid::data::synth_generate;
use riskgrid::features::{featurize, label_cells};
use riskgrid::riskmodel::train_all;
use riskgrid::service::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/synthetic.toml"));
    let config = Config::load(&path)?;
    let synth = config.synth.as_ref().ok_or("config has no [synth] section")?;

    let t = Instant::now();
    let out = synth_generate(synth)?;
    let features = featurize(&out.grid, &out.poi_sets, synth.features)?;
    let (labels, report) = label_cells(&out.grid, &out.incidents, &synth.taxonomy)?;
    println!(
        "{} cells, {} positive, {} incidents outside the grid ({:.2?})",
        out.grid.len(),
        labels.n_positive(),
        report.outside_grid,
        t.elapsed()
    );

    let categories: Vec<String> = out.poi_sets.iter().map(|s| s.category.clone()).collect();
    let t = Instant::now();
    let model = train_all(
        &out.grid,
        &features,
        &labels,
        &synth.taxonomy,
        synth.features,
        &categories,
        &config.train,
    )?;
    println!("trained and cross-validated in {:.2?}\n", t.elapsed());
    print!("{}", model.metadata.eval);

    let gt = &out.ground_truth;
    println!("\nbayes accuracy {:.4}", gt.bayes_accuracy());
    let raw = model.m_fine.raw_coefficients();
    println!("\nfine model, planted vs fitted (raw units):");
    println!("  {:<32} {:>10} {:>10}", "intercept", gt.fine_intercept, format!("{:.4}", model.m_fine.raw_intercept()));
    for (j, name) in gt.column_names.iter().enumerate() {
        if gt.fine_coefficients[j] != 0.0 {
            let rel = (raw[j] - gt.fine_coefficients[j]).abs() / gt.fine_coefficients[j].abs();
            println!("  {name:<32} {:>10} {:>10.4}  rel err {rel:.4}", gt.fine_coefficients[j], raw[j]);
        }
    }
    println!("  residual sigma {:.4}", model.m_fine.residual_sigma);

    if let Some(dest) = args.next() {
        model.save(&PathBuf::from(&dest))?;
        println!("\nsaved {dest} ({})", &model.fingerprint()[..16]);
    }
    Ok(())
}
