use super::features::{Exclusion, FeatureConfig};
use super::FingerprintSample;
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_MIN_CELL_SAMPLES: usize = 50;
const MIN_DATASET_SAMPLES: usize = 10;

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Statistics over the given rows of `data`.
    pub fn from_rows(data: ArrayView2<f64>, rows: &[usize]) -> Self {
        let cols = data.ncols();
        let mut mean = vec![0.0; cols];
        let mut std = vec![0.0; cols];
        if rows.is_empty() {
            return NormStats { mean, std };
        }
        let n = rows.len() as f64;
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(data.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for &r in rows {
            for ((s, m), v) in std.iter_mut().zip(&mean).zip(data.row(r)) {
                *s += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        NormStats { mean, std }
    }

    pub fn from_all(data: ArrayView2<f64>) -> Self {
        let rows: Vec<usize> = (0..data.nrows()).collect();
        Self::from_rows(data, &rows)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Divisor for column `j`; constant columns divide by 1.
    pub fn scale(&self, j: usize) -> f64 {
        if self.std[j] > 0.0 {
            self.std[j]
        } else {
            1.0
        }
    }

    pub fn normalize(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(rows)?;
        let mut out = rows.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale(j));
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn denormalize(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(rows)?;
        let mut out = rows.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale(j));
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }

    fn check(&self, rows: ArrayView2<f64>) -> Result<()> {
        if rows.ncols() != self.len() {
            return Err(Error::shape(format!("{} columns", self.len()), format!("{} columns", rows.ncols())));
        }
        Ok(())
    }
}

/// Row indices into a dataset; disjoint and together covering every row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub feature_config: FeatureConfig,
    pub split_fraction: f64,
    pub split_seed: u64,
    pub scenario_seed: Option<u64>,
    /// Serving cell the dataset was restricted to, for per-cell datasets.
    pub cell_id: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub too_few_serving_beams: usize,
    pub too_few_neighbor_cells: usize,
    pub id_out_of_range: usize,
}

impl ExclusionCounts {
    fn record(&mut self, e: Exclusion) {
        match e {
            Exclusion::TooFewServingBeams => self.too_few_serving_beams += 1,
            Exclusion::TooFewNeighborCells => self.too_few_neighbor_cells += 1,
            Exclusion::IdOutOfRange => self.id_out_of_range += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.too_few_serving_beams + self.too_few_neighbor_cells + self.id_out_of_range
    }
}

/// Feature matrix, `(x, y)` labels in meters and the split. Features are
/// stored raw; `norm_stats` come from the training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Array2<f64>,
    /// Index of each row's sample in the list the dataset was built from.
    pub sample_index: Vec<usize>,
    pub serving_cell: Vec<u32>,
    pub norm_stats: NormStats,
    pub split: Split,
    pub provenance: Provenance,
    pub exclusions: ExclusionCounts,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn rows(&self, which: &[usize]) -> (Array2<f64>, Array2<f64>) {
        (self.features.select(Axis(0), which), self.labels.select(Axis(0), which))
    }

    pub fn train(&self) -> (Array2<f64>, Array2<f64>) {
        self.rows(&self.split.train)
    }

    pub fn test(&self) -> (Array2<f64>, Array2<f64>) {
        self.rows(&self.split.test)
    }
}

/// `normalize` with the dataset's training statistics.
pub fn normalize(dataset: &Dataset, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
    dataset.norm_stats.normalize(rows)
}

/// Seeded assignment of `n` items to train (`true`) or test. Exactly
/// `round(fraction · n)` items train, clamped so both sides are non-empty
/// when `n ≥ 2`.
pub fn split_mask(n: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} not in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_train = ((fraction * n as f64).round() as usize).min(n);
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let mut mask = vec![false; n];
    for &i in &order[..n_train] {
        mask[i] = true;
    }
    Ok(mask)
}

fn assemble<'a>(
    samples: impl Iterator<Item = (usize, &'a FingerprintSample)>,
    config: &FeatureConfig,
    mask: &[bool],
    provenance: Provenance,
) -> Dataset {
    let width = config.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut sample_index = Vec::new();
    let mut serving_cell = Vec::new();
    let mut split = Split { train: Vec::new(), test: Vec::new() };
    let mut exclusions = ExclusionCounts::default();
    for (idx, s) in samples {
        match config.extract_into(s, &mut values) {
            Ok(()) => {
                let row = sample_index.len();
                if mask[idx] {
                    split.train.push(row);
                } else {
                    split.test.push(row);
                }
                labels.extend([s.location.x, s.location.y]);
                sample_index.push(idx);
                serving_cell.push(s.serving_cell);
            }
            Err(e) => exclusions.record(e),
        }
    }
    let n = sample_index.len();
    let features = Array2::from_shape_vec((n, width), values).expect("feature width is fixed by config");
    let labels = Array2::from_shape_vec((n, 2), labels).expect("two labels per row");
    let norm_stats = NormStats::from_rows(features.view(), &split.train);
    Dataset {
        layout: config.layout(),
        features,
        labels,
        sample_index,
        serving_cell,
        norm_stats,
        split,
        provenance,
        exclusions,
    }
}

/// Extract features for every sample and split them. The split is drawn over
/// the input samples before exclusions, so two feature configurations built
/// with the same seed share their test population.
pub fn build_dataset(
    samples: &[FingerprintSample],
    config: &FeatureConfig,
    split_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    config.validate()?;
    if samples.len() < MIN_DATASET_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_DATASET_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mask = split_mask(samples.len(), split_fraction, seed)?;
    let provenance = Provenance {
        feature_config: config.clone(),
        split_fraction,
        split_seed: seed,
        scenario_seed: None,
        cell_id: None,
    };
    Ok(assemble(samples.iter().enumerate(), config, &mask, provenance))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    pub datasets: BTreeMap<u32, Dataset>,
    /// Cells left out for having fewer than the minimum number of samples
    /// (or no training row), with their sample counts.
    pub skipped: BTreeMap<u32, usize>,
}

/// One dataset per serving cell with the serving-cell ID feature removed.
///
/// Each cell's train/test split is the restriction of the pooled split that
/// [`build_dataset`] would draw with the same seed, so pooled per-cell test
/// rows are exactly the network-level test rows. Normalization statistics are
/// computed per cell.
pub fn partition_by_cell(
    samples: &[FingerprintSample],
    config: &FeatureConfig,
    split_fraction: f64,
    seed: u64,
    min_samples: usize,
) -> Result<CellPartition> {
    let config = FeatureConfig { include_serving_cell_id: false, ..config.clone() };
    config.validate()?;
    let mask = split_mask(samples.len(), split_fraction, seed)?;
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.serving_cell).or_default().push(i);
    }
    let mut datasets = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for (cell, members) in groups {
        if members.len() < min_samples || !members.iter().any(|&i| mask[i]) {
            skipped.insert(cell, members.len());
            continue;
        }
        let provenance = Provenance {
            feature_config: config.clone(),
            split_fraction,
            split_seed: seed,
            scenario_seed: None,
            cell_id: Some(cell),
        };
        let ds = assemble(members.iter().map(|&i| (i, &samples[i])), &config, &mask, provenance);
        if ds.split.train.is_empty() {
            skipped.insert(cell, members.len());
        } else {
            datasets.insert(cell, ds);
        }
    }
    Ok(CellPartition { datasets, skipped })
}
