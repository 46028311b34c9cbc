//! Generates the bundled synthetic dataset and summarizes its planted truth.
//!
//! cargo run --release --example synth_dataset -- [config.toml] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use riskgrid::data::synth_generate;
use riskgrid::service::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/synthetic.toml"));
    let cfg = Config::load(&config)?.synth.ok_or("config has no [synth] section")?;

    let t = Instant::now();
    let out = synth_generate(&cfg)?;
    let gt = &out.ground_truth;
    println!("cells        {}", out.grid.len());
    println!("incidents    {}", out.incidents.len());
    println!("prevalence   {:.4}", gt.prevalence());
    println!("bayes acc    {:.4}", gt.bayes_accuracy());
    println!("generated in {:.2?}", t.elapsed());

    println!("\n{:<32} {:>10} {:>10} {:>10} {:>10}", "column", "mean", "sd", "min", "max");
    for (j, name) in gt.column_names.iter().enumerate() {
        let col: Vec<f64> = gt.cells.iter().map(|c| c.features[j]).collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{name:<32} {mean:>10.3} {sd:>10.3} {min:>10.3} {max:>10.3}");
    }

    let active: Vec<_> = gt.cells.iter().filter(|c| c.active).collect();
    if !active.is_empty() {
        let n = active.len() as f64;
        let m = active.iter().map(|c| c.log_fine_mean).sum::<f64>() / n;
        let sd = (active.iter().map(|c| (c.log_fine_mean - m).powi(2)).sum::<f64>() / n).sqrt();
        let top = active
            .iter()
            .map(|c| c.type_probs.iter().cloned().fold(0.0, f64::max))
            .sum::<f64>()
            / n;
        // Best achievable subset accuracy with one incident per cell: predict the
        // most likely type when its probability reaches 0.5.
        let subset = active
            .iter()
            .map(|c| c.type_probs.iter().cloned().fold(0.0, f64::max))
            .filter(|&p| p >= 0.5)
            .sum::<f64>()
            / n;
        println!("\nactive cells: log10 fine mean {m:.3}, signal sd {sd:.3}");
        println!("type: mean top prob {top:.3}, oracle subset accuracy {subset:.3}");
    }

    if let Some(dir) = args.next() {
        out.write_dir(&PathBuf::from(&dir))?;
        println!("wrote {dir}");
    }
    Ok(())
}
