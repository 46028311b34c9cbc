//! `riskgrid` command line.
//!
//! Exit status is 0 on success, 1 on a runtime failure (with one JSON line
//! `{"error": code, "message": text}` on stderr) and 2 on a usage error.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use super::{api, render_surface, surface_to_geojson, Config, Engine, ServiceError};
use crate::data::{synth_generate, CachingGeocoder, Geocoder, HttpGeocoder, LoadOptions};
use crate::dataset::Dataset;
use crate::features::{build_grid_with_cap, label_cells, Featurizer};
use crate::geogrid::BBox;
use crate::riskmodel::{poi_fingerprint, train_all, WccewsModel};

/// Geocoder cache file written inside the dataset directory.
pub const GEOCODE_CACHE_FILE: &str = "geocode_cache.json";

#[derive(Debug, Parser)]
#[command(name = "riskgrid", version, about = "Geohash-gridded financial-crime risk modeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory from a config's [synth] section.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Featurize a dataset, train the three sub-models with k-fold evaluation and save the model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores). Output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the evaluation report stored in a model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Predict one cell and print it as JSON.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        geohash: String,
        #[arg(long)]
        data: PathBuf,
    },
    /// Render a GeoJSON risk surface.
    Surface {
        #[arg(long)]
        model: PathBuf,
        /// minLon,minLat,maxLon,maxLat
        #[arg(long, allow_hyphen_values = true)]
        bbox: String,
        /// Defaults to the model's training precision.
        #[arg(long)]
        precision: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory providing the POI files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cell_cap: Option<usize>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        cell_cap: Option<usize>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config, ServiceError> {
    match path {
        Some(p) => Config::load(p).map_err(|e| ServiceError::Config(e.to_string())),
        None => Ok(Config::default()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn synth(config: &Path, out_dir: &Path, seed: Option<u64>, out: &mut dyn Write) -> Result<(), ServiceError> {
    let cfg = load_config(Some(config))?;
    let mut synth = cfg
        .synth
        .ok_or_else(|| ServiceError::Config(format!("{} has no [synth] section", config.display())))?;
    if let Some(s) = seed {
        synth.seed = s;
    }
    let data = synth_generate(&synth).map_err(|e| ServiceError::Config(e.to_string()))?;
    data.write_dir(out_dir).map_err(|e| ServiceError::Io(e.to_string()))?;
    writeln!(
        out,
        "wrote {}: {} cells, {} incidents, bayes accuracy {:.4}",
        out_dir.display(),
        data.grid.len(),
        data.incidents.len(),
        data.ground_truth.bayes_accuracy()
    )
    .map_err(|e| ServiceError::Io(e.to_string()))
}

/// Loads, featurizes and trains. Used by the `train` subcommand.
pub fn train_from_dir(data_dir: &Path, config: &Config) -> Result<WccewsModel, ServiceError> {
    let manifest = crate::dataset::DatasetManifest::load(data_dir).map_err(|e| ServiceError::Data(e.to_string()))?;
    let geocoder: Option<CachingGeocoder<HttpGeocoder>> = match HttpGeocoder::from_env() {
        Some(g) => Some(
            CachingGeocoder::with_cache_file(g, data_dir.join(GEOCODE_CACHE_FILE))
                .map_err(|e| ServiceError::Data(e.to_string()))?,
        ),
        None => None,
    };
    let data = Dataset::load(
        data_dir,
        Some(&manifest.taxonomy),
        &LoadOptions::default(),
        geocoder.as_ref().map(|g| g as &dyn Geocoder),
    )?;
    let grid = build_grid_with_cap(data.manifest.bbox, data.manifest.precision, config.server.cell_cap)?;
    let featurizer = Featurizer::new(&data.poi_sets, data.manifest.features)?;
    let features = featurizer.featurize(&grid);
    let (labels, _) = label_cells(&grid, &data.incidents, &data.manifest.taxonomy)?;
    let mut model = train_all(
        &grid,
        &features,
        &labels,
        &data.manifest.taxonomy,
        data.manifest.features,
        featurizer.categories(),
        &config.train,
    )?;
    model.metadata.poi_fingerprint = Some(poi_fingerprint(&data.poi_sets));
    Ok(model)
}

fn train(
    data_dir: &Path,
    config: Option<&Path>,
    out_path: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), ServiceError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.train.forest.seed = s;
    }
    let model = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ServiceError::Internal(e.to_string()))?
            .install(|| train_from_dir(data_dir, &cfg))?,
        None => train_from_dir(data_dir, &cfg)?,
    };
    model.save(out_path)?;
    writeln!(out, "saved {} ({})", out_path.display(), model.fingerprint()).map_err(|e| ServiceError::Io(e.to_string()))?;
    write!(out, "{}", model.metadata.eval).map_err(|e| ServiceError::Io(e.to_string()))
}

fn evaluate(model: &Path, as_json: bool, out: &mut dyn Write) -> Result<(), ServiceError> {
    let m = WccewsModel::load(model)?;
    let text = if as_json {
        m.metadata.eval.to_json() + "\n"
    } else {
        m.metadata.eval.to_string()
    };
    out.write_all(text.as_bytes()).map_err(|e| ServiceError::Io(e.to_string()))?;
    for note in &m.metadata.eval_notes {
        writeln!(out, "note: {note}").map_err(|e| ServiceError::Io(e.to_string()))?;
    }
    Ok(())
}

/// The document `predict` prints, identical to `GET /api/v1/cell/{geohash}`.
pub fn predict_json(engine: &Engine, geohash: &str) -> Result<serde_json::Value, ServiceError> {
    let g = Engine::parse_geohash(geohash)?;
    Ok(serde_json::to_value(engine.cell(&g)?).expect("report json"))
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), ServiceError> {
    match cli.command {
        Command::Synth { config, out: dir, seed } => synth(&config, &dir, seed, out),
        Command::Train {
            data,
            config,
            out: path,
            seed,
            threads,
        } => train(&data, config.as_deref(), &path, seed, threads, out),
        Command::Evaluate { model, json } => evaluate(&model, json, out),
        Command::Predict { model, geohash, data } => {
            Engine::parse_geohash(&geohash)?;
            let engine = Engine::open(&model, &data, Config::default().server.cell_cap)?;
            let doc = predict_json(&engine, &geohash)?;
            writeln!(out, "{doc}").map_err(|e| ServiceError::Io(e.to_string()))
        }
        Command::Surface {
            model,
            bbox,
            precision,
            out: path,
            data,
            config,
            cell_cap,
        } => {
            let bbox = BBox::parse_lon_lat(&bbox).map_err(|e| ServiceError::InvalidBBox(e.to_string()))?;
            let cap = cell_cap.unwrap_or(load_config(config.as_deref())?.server.cell_cap);
            let m = WccewsModel::load(&model)?;
            let ds = Dataset::load(&data, None, &LoadOptions::default(), None)?;
            let precision = precision.unwrap_or(m.features.precision);
            let surface = render_surface(&m, &ds.poi_sets, bbox, precision, cap)?;
            let doc = surface_to_geojson(&surface);
            write_file(&path, serde_json::to_string(&doc).expect("geojson").as_bytes())?;
            writeln!(out, "wrote {} ({} cells)", path.display(), surface.cells.len())
                .map_err(|e| ServiceError::Io(e.to_string()))
        }
        Command::Serve {
            model,
            port,
            data,
            config,
            host,
            cell_cap,
        } => {
            let cfg = load_config(config.as_deref())?;
            let engine = Engine::open(&model, &data, cell_cap.unwrap_or(cfg.server.cell_cap))?;
            for w in engine.warnings() {
                eprintln!("warning: {w}");
            }
            if let Some(m) = engine.schema_error() {
                eprintln!("warning: {m}");
            }
            let addr = SocketAddr::new(host, port.unwrap_or(cfg.server.port));
            writeln!(out, "listening on http://{addr}").map_err(|e| ServiceError::Io(e.to_string()))?;
            out.flush().ok();
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| ServiceError::Internal(e.to_string()))?
                .block_on(api::serve(Arc::new(engine), addr))
                .map_err(|e| ServiceError::Io(e.to_string()))
        }
    }
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            1
        }
    }
}
