//! Risk-terrain features per geohash cell.
//!
//! For every POI category `c`, in input order, each cell gets:
//!
//! | column            | meaning                                                        |
//! |-------------------|----------------------------------------------------------------|
//! | `count_c`         | POIs of `c` inside the cell                                    |
//! | `dist_c_m`        | meters from the cell center to the nearest POI, capped         |
//! | `kde_c`           | sum of `exp(-d^2 / 2 sigma^2)` over POIs within `3 sigma`      |
//! | `nbr_count_c`     | mean of `count_c` over the cell's existing neighbors           |
//! | `nbr_dist_c_m`    | same for `dist_c_m`                                            |
//! | `nbr_kde_c`       | same for `kde_c`                                               |
//!
//! Raw columns of a cell depend only on the cell and the POIs, never on the
//! grid it was requested in, so a cell featurized alone matches the same cell
//! inside any grid.

mod index;
mod labels;

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PoiSet;
use crate::geogrid::{cover_with_cap, neighbors, BBox, GeoError, Geohash, DEFAULT_CELL_CAP};

pub use index::PoiIndex;
pub use labels::{label_cells, CellLabels, LabelReport};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("feature schema error: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kernel_sigma_m: f64,
    pub distance_cap_m: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kernel_sigma_m: 1_000.0,
            distance_cap_m: 50_000.0,
        }
    }
}

impl FeatureConfig {
    pub fn kernel_radius_m(&self) -> f64 {
        3.0 * self.kernel_sigma_m
    }
}

/// Cells of a bounding box at one precision, in cover order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub precision: usize,
    pub bbox: BBox,
    pub cells: Vec<Geohash>,
}

impl CellGrid {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn position_map(&self) -> HashMap<&Geohash, usize> {
        self.cells.iter().enumerate().map(|(i, c)| (c, i)).collect()
    }
}

pub fn build_grid(bbox: BBox, precision: usize) -> Result<CellGrid, FeatureError> {
    build_grid_with_cap(bbox, precision, DEFAULT_CELL_CAP)
}

pub fn build_grid_with_cap(bbox: BBox, precision: usize, cap: usize) -> Result<CellGrid, FeatureError> {
    let cells = cover_with_cap(&bbox, precision, cap)?;
    Ok(CellGrid { precision, bbox, cells })
}

/// Per-cell feature vectors aligned with a [`CellGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_names.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Writes `geohash,<columns...>`, one line per cell.
    pub fn write_csv<W: Write>(&self, grid: &CellGrid, w: W) -> Result<(), FeatureError> {
        if grid.len() != self.n_rows() {
            return Err(FeatureError::Schema(format!(
                "grid has {} cells but matrix has {} rows",
                grid.len(),
                self.n_rows()
            )));
        }
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header = vec!["geohash".to_string()];
        header.extend(self.column_names.iter().cloned());
        wtr.write_record(&header)?;
        for (cell, row) in grid.cells.iter().zip(&self.rows) {
            let mut rec = vec![cell.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

const RAW_METRICS: usize = 3;

/// Column names for `categories` in the documented order.
pub fn column_names(categories: &[String]) -> Vec<String> {
    let mut names = Vec::with_capacity(categories.len() * 2 * RAW_METRICS);
    for c in categories {
        let raw = [format!("count_{c}"), format!("dist_{c}_m"), format!("kde_{c}")];
        let nbr: Vec<String> = raw.iter().map(|r| format!("nbr_{r}")).collect();
        names.extend(raw);
        names.extend(nbr);
    }
    names
}

/// Feature extractor over a fixed list of POI sets.
pub struct Featurizer {
    config: FeatureConfig,
    categories: Vec<String>,
    indexes: Vec<PoiIndex>,
}

impl Featurizer {
    pub fn new(poi_sets: &[PoiSet], config: FeatureConfig) -> Result<Self, FeatureError> {
        let mut categories: Vec<String> = Vec::with_capacity(poi_sets.len());
        for s in poi_sets {
            if s.category.trim().is_empty() {
                return Err(FeatureError::Schema("empty POI category".into()));
            }
            if categories.contains(&s.category) {
                return Err(FeatureError::Schema(format!("duplicate POI category {:?}", s.category)));
            }
            categories.push(s.category.clone());
        }
        let indexes = poi_sets
            .iter()
            .map(|s| PoiIndex::new(&s.points, config.kernel_radius_m()))
            .collect();
        Ok(Self {
            config,
            categories,
            indexes,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn column_names(&self) -> Vec<String> {
        column_names(&self.categories)
    }

    /// Fails unless this featurizer produces exactly `schema`.
    pub fn check_schema(&self, schema: &[String]) -> Result<(), FeatureError> {
        let mine = self.column_names();
        if mine != schema {
            let unknown: Vec<&String> = mine.iter().filter(|c| !schema.contains(c)).collect();
            let missing: Vec<&String> = schema.iter().filter(|c| !mine.contains(c)).collect();
            return Err(FeatureError::Schema(format!(
                "feature columns differ from the expected schema (unexpected: {unknown:?}, missing: {missing:?})"
            )));
        }
        Ok(())
    }

    /// `[count, dist, kde]` per category for one cell.
    pub fn raw_features(&self, cell: &Geohash) -> Vec<f64> {
        let center = cell.center();
        let sigma = self.config.kernel_sigma_m;
        let two_sigma_sq = 2.0 * sigma * sigma;
        let mut out = Vec::with_capacity(self.indexes.len() * RAW_METRICS);
        for idx in &self.indexes {
            let count = idx.count_in_cell(cell) as f64;
            let dist = idx
                .nearest_within(center, self.config.distance_cap_m)
                .unwrap_or(self.config.distance_cap_m)
                .min(self.config.distance_cap_m);
            let kde = idx
                .within(center, self.config.kernel_radius_m())
                .into_iter()
                .map(|(_, d)| (-(d * d) / two_sigma_sq).exp())
                .fold(0.0, |a, b| a + b);
            out.extend([count, dist, kde]);
        }
        out
    }

    fn assemble(&self, raw: &[f64], nbr_raws: &[&[f64]]) -> Vec<f64> {
        let n = nbr_raws.len() as f64;
        let mut row = Vec::with_capacity(raw.len() * 2);
        for (c, chunk) in raw.chunks(RAW_METRICS).enumerate() {
            row.extend_from_slice(chunk);
            for m in 0..RAW_METRICS {
                let j = c * RAW_METRICS + m;
                let sum: f64 = nbr_raws.iter().map(|r| r[j]).sum();
                row.push(if nbr_raws.is_empty() { chunk[m] } else { sum / n });
            }
        }
        row
    }

    /// Full feature row for one cell, computed on its own.
    pub fn cell_features(&self, cell: &Geohash) -> Vec<f64> {
        let raw = self.raw_features(cell);
        let nbrs: Vec<Vec<f64>> = neighbors(cell).existing().map(|n| self.raw_features(n)).collect();
        let refs: Vec<&[f64]> = nbrs.iter().map(Vec::as_slice).collect();
        self.assemble(&raw, &refs)
    }

    /// Feature rows for every grid cell. Parallel over cells; the result is
    /// identical for any thread count.
    pub fn featurize(&self, grid: &CellGrid) -> FeatureMatrix {
        let mut slot: HashMap<Geohash, usize> = HashMap::with_capacity(grid.len() * 2);
        let mut unique: Vec<Geohash> = Vec::with_capacity(grid.len() * 2);
        for cell in &grid.cells {
            for g in std::iter::once(cell.clone()).chain(neighbors(cell).existing().cloned()) {
                slot.entry(g.clone()).or_insert_with(|| {
                    unique.push(g);
                    unique.len() - 1
                });
            }
        }
        let raws: Vec<Vec<f64>> = unique.par_iter().map(|g| self.raw_features(g)).collect();
        let rows = grid
            .cells
            .par_iter()
            .map(|cell| {
                let nbrs: Vec<&[f64]> = neighbors(cell)
                    .existing()
                    .map(|n| raws[slot[n]].as_slice())
                    .collect();
                self.assemble(&raws[slot[cell]], &nbrs)
            })
            .collect();
        FeatureMatrix {
            column_names: self.column_names(),
            rows,
        }
    }
}

/// Convenience wrapper: index the POI sets and featurize `grid`.
pub fn featurize(grid: &CellGrid, poi_sets: &[PoiSet], config: FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    if grid.is_empty() {
        return Err(FeatureError::Schema("empty grid".into()));
    }
    Ok(Featurizer::new(poi_sets, config)?.featurize(grid))
}
