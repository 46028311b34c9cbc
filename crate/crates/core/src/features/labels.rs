use serde::{Deserialize, Serialize};

use super::{CellGrid, FeatureError};
use crate::data::{Incident, Taxonomy};
use crate::geogrid::encode;

/// Training targets per grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLabels {
    pub crime_present: Vec<bool>,
    /// log10 of the mean fine (clamped to at least 1 USD); `Some` iff the cell is positive.
    pub log_fine: Vec<Option<f64>>,
    /// Sorted taxonomy indices of the types seen in the cell.
    pub type_labels: Vec<Vec<usize>>,
}

impl CellLabels {
    pub fn n_positive(&self) -> usize {
        self.crime_present.iter().filter(|&&p| p).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub assigned: usize,
    /// Incidents whose cell is not part of the grid.
    pub outside_grid: usize,
}

pub fn label_cells(
    grid: &CellGrid,
    incidents: &[Incident],
    taxonomy: &Taxonomy,
) -> Result<(CellLabels, LabelReport), FeatureError> {
    let n = grid.len();
    let pos = grid.position_map();
    let mut fine_sum = vec![0.0f64; n];
    let mut hits = vec![0usize; n];
    let mut types: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut report = LabelReport::default();
    for inc in incidents {
        let t = taxonomy
            .index_of(&inc.crime_type)
            .ok_or_else(|| FeatureError::Schema(format!("incident {} has unknown type {:?}", inc.id, inc.crime_type)))?;
        let cell = encode(inc.location, grid.precision)?;
        match pos.get(&cell) {
            Some(&i) => {
                fine_sum[i] += inc.fine_usd;
                hits[i] += 1;
                if !types[i].contains(&t) {
                    types[i].push(t);
                }
                report.assigned += 1;
            }
            None => report.outside_grid += 1,
        }
    }
    for t in &mut types {
        t.sort_unstable();
    }
    let crime_present: Vec<bool> = hits.iter().map(|&h| h > 0).collect();
    let log_fine = hits
        .iter()
        .zip(&fine_sum)
        .map(|(&h, &s)| (h > 0).then(|| (s / h as f64).max(1.0).log10()))
        .collect();
    Ok((
        CellLabels {
            crime_present,
            log_fine,
            type_labels: types,
        },
        report,
    ))
}
