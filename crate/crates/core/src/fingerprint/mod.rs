//! Labeled RSRP fingerprints and the datasets built from them.

mod dataset;
mod features;
mod persist;

pub use dataset::{
    build_dataset, normalize, partition_by_cell, split_mask, CellPartition, Dataset,
    ExclusionCounts, NormStats, Provenance, Split, DEFAULT_MIN_CELL_SAMPLES,
};
pub use features::{extract_features, Exclusion, FeatureConfig, FeatureVector, IdEncoding};
pub use persist::{read_dataset, write_dataset};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::propagation::{location_fingerprint, BeamMeasurement, PropagationConfig};
use crate::scenario::{enumerate_locations, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Sorted by `(cell_id, beam_id)`; only beams above the noise floor.
pub type RsrpMap = Vec<BeamMeasurement>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSample {
    pub location: Point,
    pub rsrp: RsrpMap,
    pub serving_cell: u32,
    pub los_to_serving: bool,
}

impl FingerprintSample {
    /// Build a sample from arbitrary `(cell, beam) → rsrp` entries, selecting
    /// the serving cell.
    pub fn from_entries(
        location: Point,
        entries: impl IntoIterator<Item = ((u32, u32), f64)>,
        los_to_serving: bool,
    ) -> Result<Self> {
        let mut rsrp: RsrpMap = entries
            .into_iter()
            .map(|((cell_id, beam_id), rsrp)| BeamMeasurement { cell_id, beam_id, rsrp })
            .collect();
        rsrp.sort_by_key(|m| (m.cell_id, m.beam_id));
        let serving_cell = select_serving(&rsrp)?;
        Ok(FingerprintSample { location, rsrp, serving_cell, los_to_serving })
    }

    pub fn cell_beams(&self, cell_id: u32) -> impl Iterator<Item = &BeamMeasurement> {
        self.rsrp.iter().filter(move |m| m.cell_id == cell_id)
    }
}

/// Ordering of measurements by strength: stronger first, then lower cell id,
/// then lower beam id.
pub(crate) fn strongest_first(a: &BeamMeasurement, b: &BeamMeasurement) -> Ordering {
    b.rsrp
        .total_cmp(&a.rsrp)
        .then(a.cell_id.cmp(&b.cell_id))
        .then(a.beam_id.cmp(&b.beam_id))
}

/// Cell owning the strongest entry; ties go to the lowest cell id, then the
/// lowest beam id. Independent of entry order.
pub fn select_serving(rsrp: &[BeamMeasurement]) -> Result<u32> {
    rsrp.iter()
        .min_by(|a, b| strongest_first(a, b))
        .map(|m| m.cell_id)
        .ok_or(Error::Empty("rsrp map"))
}

/// One sample per outdoor grid location. Locations where every beam is at
/// the noise floor carry no fingerprint and are skipped.
pub fn generate_samples(scenario: &Scenario, config: &PropagationConfig) -> Result<Vec<FingerprintSample>> {
    config.validate()?;
    let locations = enumerate_locations(scenario);
    if locations.is_empty() {
        return Err(Error::Empty("location grid"));
    }
    let samples: Vec<Option<FingerprintSample>> = locations
        .par_iter()
        .map(|loc| sample_at(loc, scenario, config))
        .collect::<Result<_>>()?;
    Ok(samples.into_iter().flatten().collect())
}

fn sample_at(location: &Point, scenario: &Scenario, config: &PropagationConfig) -> Result<Option<FingerprintSample>> {
    let (all, los) = location_fingerprint(location, scenario, config)?;
    let mut rsrp: RsrpMap = all.into_iter().filter(|m| m.rsrp > config.noise_floor).collect();
    if rsrp.is_empty() {
        return Ok(None);
    }
    rsrp.sort_by_key(|m| (m.cell_id, m.beam_id));
    let serving_cell = select_serving(&rsrp)?;
    let los_to_serving = los
        .iter()
        .find(|(cell, _)| *cell == serving_cell)
        .map(|(_, l)| *l)
        .unwrap_or(false);
    Ok(Some(FingerprintSample {
        location: *location,
        rsrp,
        serving_cell,
        los_to_serving,
    }))
}

/// Keep the samples whose serving cell is in line of sight, in order.
pub fn filter_los(samples: Vec<FingerprintSample>) -> Vec<FingerprintSample> {
    samples.into_iter().filter(|s| s.los_to_serving).collect()
}

/// Fraction of samples with LoS to their serving cell.
pub fn los_fraction(samples: &[FingerprintSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| s.los_to_serving).count() as f64 / samples.len() as f64
}
