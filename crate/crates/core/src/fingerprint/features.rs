use super::{strongest_first, FingerprintSample};
use crate::error::{Error, Result};
use crate::propagation::BeamMeasurement;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdEncoding {
    /// IDs enter the vector as plain numbers.
    Numeric,
    /// IDs expand to indicator columns; needs `num_cells` / `num_beams`.
    OneHot,
}

/// Which measurements make up a feature vector.
///
/// Numeric layout, in order:
/// `n_serving_beams` serving beam IDs, the matching RSRPs, the serving cell
/// ID (optional), then `(cell ID, beam ID, RSRP)` for the strongest beam of
/// each of the `n_neighbor_cells` strongest neighbor cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_serving_beams: usize,
    pub n_neighbor_cells: usize,
    pub include_serving_cell_id: bool,
    pub id_encoding: IdEncoding,
    /// Cell IDs run `1..=num_cells` (one-hot only).
    pub num_cells: Option<usize>,
    /// Beam IDs run `0..num_beams` (one-hot only).
    pub num_beams: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_serving_beams: 3,
            n_neighbor_cells: 0,
            include_serving_cell_id: true,
            id_encoding: IdEncoding::Numeric,
            num_cells: None,
            num_beams: None,
        }
    }
}

/// Why a sample produced no feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    TooFewServingBeams,
    TooFewNeighborCells,
    IdOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Vec<String>,
}

impl FeatureConfig {
    pub fn new(n_serving_beams: usize, n_neighbor_cells: usize, include_serving_cell_id: bool) -> Self {
        FeatureConfig {
            n_serving_beams,
            n_neighbor_cells,
            include_serving_cell_id,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.n_serving_beams) {
            return Err(Error::InvalidArgument(format!(
                "n_serving_beams must be in 1..=8, got {}",
                self.n_serving_beams
            )));
        }
        if self.n_neighbor_cells > 4 {
            return Err(Error::InvalidArgument(format!(
                "n_neighbor_cells must be in 0..=4, got {}",
                self.n_neighbor_cells
            )));
        }
        if self.id_encoding == IdEncoding::OneHot
            && (self.num_cells.unwrap_or(0) == 0 || self.num_beams.unwrap_or(0) == 0)
        {
            return Err(Error::InvalidArgument(
                "one_hot id encoding needs num_cells and num_beams".into(),
            ));
        }
        Ok(())
    }

    fn cell_width(&self) -> usize {
        match self.id_encoding {
            IdEncoding::Numeric => 1,
            IdEncoding::OneHot => self.num_cells.unwrap_or(0),
        }
    }

    fn beam_width(&self) -> usize {
        match self.id_encoding {
            IdEncoding::Numeric => 1,
            IdEncoding::OneHot => self.num_beams.unwrap_or(0),
        }
    }

    /// Number of values in a vector; `2·Ns + [1] + 3·Nn` for numeric IDs.
    pub fn len(&self) -> usize {
        let ns = self.n_serving_beams;
        let nn = self.n_neighbor_cells;
        ns * self.beam_width()
            + ns
            + usize::from(self.include_serving_cell_id) * self.cell_width()
            + nn * (self.cell_width() + self.beam_width() + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column names, in vector order.
    pub fn layout(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        let id_cols = |out: &mut Vec<String>, stem: &str, width: usize, first: usize| match self.id_encoding {
            IdEncoding::Numeric => out.push(stem.to_string()),
            IdEncoding::OneHot => out.extend((0..width).map(|k| format!("{stem}_is_{}", first + k))),
        };
        for i in 1..=self.n_serving_beams {
            id_cols(&mut out, &format!("serving_beam_id_{i}"), self.beam_width(), 0);
        }
        for i in 1..=self.n_serving_beams {
            out.push(format!("serving_rsrp_{i}"));
        }
        if self.include_serving_cell_id {
            id_cols(&mut out, "serving_cell_id", self.cell_width(), 1);
        }
        for i in 1..=self.n_neighbor_cells {
            id_cols(&mut out, &format!("neighbor_{i}_cell_id"), self.cell_width(), 1);
            id_cols(&mut out, &format!("neighbor_{i}_beam_id"), self.beam_width(), 0);
            out.push(format!("neighbor_{i}_rsrp"));
        }
        out
    }

    fn push_cell(&self, out: &mut Vec<f64>, cell_id: u32) -> std::result::Result<(), Exclusion> {
        match self.id_encoding {
            IdEncoding::Numeric => out.push(cell_id as f64),
            IdEncoding::OneHot => {
                let n = self.cell_width();
                let idx = (cell_id as usize).checked_sub(1).filter(|&i| i < n).ok_or(Exclusion::IdOutOfRange)?;
                out.extend((0..n).map(|k| if k == idx { 1.0 } else { 0.0 }));
            }
        }
        Ok(())
    }

    fn push_beam(&self, out: &mut Vec<f64>, beam_id: u32) -> std::result::Result<(), Exclusion> {
        match self.id_encoding {
            IdEncoding::Numeric => out.push(beam_id as f64),
            IdEncoding::OneHot => {
                let n = self.beam_width();
                let idx = beam_id as usize;
                if idx >= n {
                    return Err(Exclusion::IdOutOfRange);
                }
                out.extend((0..n).map(|k| if k == idx { 1.0 } else { 0.0 }));
            }
        }
        Ok(())
    }

    /// Append the feature values of `sample` to `out`. On exclusion `out` is
    /// left unchanged.
    pub(crate) fn extract_into(
        &self,
        sample: &FingerprintSample,
        out: &mut Vec<f64>,
    ) -> std::result::Result<(), Exclusion> {
        let mut serving: Vec<&BeamMeasurement> = sample.cell_beams(sample.serving_cell).collect();
        if serving.len() < self.n_serving_beams {
            return Err(Exclusion::TooFewServingBeams);
        }
        serving.sort_by(|a, b| strongest_first(a, b));
        serving.truncate(self.n_serving_beams);

        // strongest beam of every other cell; the map is sorted by (cell, beam)
        let mut neighbors: Vec<&BeamMeasurement> = Vec::new();
        if self.n_neighbor_cells > 0 {
            for m in sample.rsrp.iter().filter(|m| m.cell_id != sample.serving_cell) {
                match neighbors.last_mut() {
                    Some(best) if best.cell_id == m.cell_id => {
                        if strongest_first(m, best).is_lt() {
                            *best = m;
                        }
                    }
                    _ => neighbors.push(m),
                }
            }
            if neighbors.len() < self.n_neighbor_cells {
                return Err(Exclusion::TooFewNeighborCells);
            }
            neighbors.sort_by(|a, b| strongest_first(a, b));
            neighbors.truncate(self.n_neighbor_cells);
        }

        let start = out.len();
        let result = (|| {
            for m in &serving {
                self.push_beam(out, m.beam_id)?;
            }
            out.extend(serving.iter().map(|m| m.rsrp));
            if self.include_serving_cell_id {
                self.push_cell(out, sample.serving_cell)?;
            }
            for m in &neighbors {
                self.push_cell(out, m.cell_id)?;
                self.push_beam(out, m.beam_id)?;
                out.push(m.rsrp);
            }
            Ok(())
        })();
        if result.is_err() {
            out.truncate(start);
        }
        result
    }
}

/// Feature vector of one sample, or the reason it has none.
pub fn extract_features(
    sample: &FingerprintSample,
    config: &FeatureConfig,
) -> std::result::Result<FeatureVector, Exclusion> {
    let mut values = Vec::with_capacity(config.len());
    config.extract_into(sample, &mut values)?;
    Ok(FeatureVector { values, layout: config.layout() })
}
