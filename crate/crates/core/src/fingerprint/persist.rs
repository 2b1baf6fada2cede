//! Dataset files: `<name>.csv` holds one row per sample (feature columns in
//! layout order, then `label_x,label_y`); `<name>.json` holds everything
//! else. Values are written in shortest round-trip form, so a reload is
//! bit-exact.

use super::dataset::{Dataset, ExclusionCounts, NormStats, Provenance, Split};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Serialize, Deserialize)]
struct Sidecar {
    layout: Vec<String>,
    rows: usize,
    norm_stats: NormStats,
    split: Split,
    provenance: Provenance,
    exclusions: ExclusionCounts,
    sample_index: Vec<usize>,
    serving_cell: Vec<u32>,
}

/// Write `<dir>/<name>.csv` and `<dir>/<name>.json`; returns both paths.
pub fn write_dataset(dataset: &Dataset, dir: &Path, name: &str) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header = dataset
        .layout
        .iter()
        .map(String::as_str)
        .chain(["label_x", "label_y"]);
    wtr.write_record(header)?;
    for (f, l) in dataset.features.rows().into_iter().zip(dataset.labels.rows()) {
        wtr.write_record(f.iter().chain(l.iter()).map(|v| v.to_string()))?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&csv_path, &bytes)?;

    let sidecar = Sidecar {
        layout: dataset.layout.clone(),
        rows: dataset.len(),
        norm_stats: dataset.norm_stats.clone(),
        split: dataset.split.clone(),
        provenance: dataset.provenance.clone(),
        exclusions: dataset.exclusions.clone(),
        sample_index: dataset.sample_index.clone(),
        serving_cell: dataset.serving_cell.clone(),
    };
    write_atomic(&json_path, serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    Ok((csv_path, json_path))
}

pub fn read_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let sidecar: Sidecar =
        serde_json::from_slice(&std::fs::read(dir.join(format!("{name}.json")))?)?;
    let mut rdr = csv::Reader::from_path(dir.join(format!("{name}.csv")))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let width = sidecar.layout.len();
    let expected: Vec<String> = sidecar
        .layout
        .iter()
        .cloned()
        .chain(["label_x".to_string(), "label_y".to_string()])
        .collect();
    if header != expected {
        return Err(Error::shape(expected.join(","), header.join(",")));
    }
    let mut features = Vec::with_capacity(sidecar.rows * width);
    let mut labels = Vec::with_capacity(sidecar.rows * 2);
    for record in rdr.records() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number `{field}` in {name}.csv")))?;
            if j < width {
                features.push(v);
            } else {
                labels.push(v);
            }
        }
    }
    let n = labels.len() / 2;
    if n != sidecar.rows || features.len() != n * width {
        return Err(Error::shape(format!("{} rows", sidecar.rows), format!("{n} rows")));
    }
    Ok(Dataset {
        layout: sidecar.layout,
        features: Array2::from_shape_vec((n, width), features).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        labels: Array2::from_shape_vec((n, 2), labels).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        sample_index: sidecar.sample_index,
        serving_cell: sidecar.serving_cell,
        norm_stats: sidecar.norm_stats,
        split: sidecar.split,
        provenance: sidecar.provenance,
        exclusions: sidecar.exclusions,
    })
}
