//! Positioning error statistics and the experiment runner.

use crate::dtree::{fit_tree, predict_tree, TreeConfig};
use crate::error::{Error, Result};
use crate::fingerprint::{
    build_dataset, partition_by_cell, CellPartition, Dataset, FeatureConfig, FingerprintSample,
};
use crate::mlp::{init_model, predict, train, MlpArchitecture, TrainConfig};
use crate::seed::{derive, stream};
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Mean, population standard deviation and the per-sample errors behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub errors: Vec<f64>,
}

impl ErrorStats {
    pub fn summary(&self) -> StatsSummary {
        StatsSummary { mean: self.mean, std: self.std, n: self.n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Row-wise distance between predicted and true positions.
pub fn euclidean_errors(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<Vec<f64>> {
    if pred.dim() != truth.dim() || pred.ncols() != 2 {
        return Err(Error::shape(format!("{:?} with 2 columns", truth.dim()), format!("{:?}", pred.dim())));
    }
    Ok(pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1]))
        .collect())
}

/// Mean and standard deviation with divisor `N`.
pub fn error_stats(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::Empty("error list"));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(ErrorStats { mean, std: var.sqrt(), n: errors.len(), errors: errors.to_vec() })
}

fn sorted(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::Empty("error list"));
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Empirical CDF: one `(value, fraction of errors ≤ value)` pair per distinct
/// error, ascending.
pub fn error_cdf(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    let v = sorted(errors)?;
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    Ok(out)
}

/// Nearest-rank percentile, `p` in `(0, 100]`.
pub fn percentile(errors: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {p} not in (0, 100]")));
    }
    let v = sorted(errors)?;
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Ok(v[rank.clamp(1, v.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p80: f64,
    pub p90: f64,
}

impl Percentiles {
    pub fn of(errors: &[f64]) -> Result<Self> {
        Ok(Percentiles {
            p50: percentile(errors, 50.0)?,
            p80: percentile(errors, 80.0)?,
            p90: percentile(errors, 90.0)?,
        })
    }
}

/// Median of a non-empty list (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Result<f64> {
    let v = sorted(values)?;
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    NetworkLevel,
    CellSpecific,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::NetworkLevel => "network_level",
            Topology::CellSpecific => "cell_specific",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Dtree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Mlp { hidden_layers: Vec<usize>, train: TrainConfig },
    Dtree { tree: TreeConfig },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Mlp { .. } => ModelKind::Mlp,
            ModelSpec::Dtree { .. } => ModelKind::Dtree,
        }
    }

    /// Hidden layer widths joined by `x` (`64x64`), or the tree depth limit.
    pub fn architecture(&self) -> String {
        match self {
            ModelSpec::Mlp { hidden_layers, .. } if hidden_layers.is_empty() => "linear".into(),
            ModelSpec::Mlp { hidden_layers, .. } => {
                hidden_layers.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
            }
            ModelSpec::Dtree { tree } => match tree.max_depth {
                Some(d) => format!("depth{d}"),
                None => "unlimited".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDescriptor {
    pub id: String,
    pub feature_set: String,
    pub features: FeatureConfig,
    pub topology: Topology,
    pub model: ModelSpec,
    /// Experiment seed; split, initialization and shuffling derive from it.
    pub seed: u64,
}

impl ExperimentDescriptor {
    pub fn split_seed(&self) -> u64 {
        derive(self.seed, stream::SPLIT, 0)
    }
}

/// Samples and split settings shared by every experiment of a matrix.
#[derive(Debug, Clone)]
pub struct DataSource {
    pub samples: Vec<FingerprintSample>,
    pub split_fraction: f64,
    pub min_cell_samples: usize,
    pub scenario_seed: Option<u64>,
}

/// Datasets ready for one experiment.
#[derive(Debug, Clone)]
pub enum PreparedData {
    Network(Dataset),
    Cells(CellPartition),
}

/// Build the dataset(s) a descriptor needs.
pub fn prepare_data(source: &DataSource, descriptor: &ExperimentDescriptor) -> Result<PreparedData> {
    let seed = descriptor.split_seed();
    let tag = |mut d: Dataset| {
        d.provenance.scenario_seed = source.scenario_seed;
        d
    };
    Ok(match descriptor.topology {
        Topology::NetworkLevel => PreparedData::Network(tag(build_dataset(
            &source.samples,
            &descriptor.features,
            source.split_fraction,
            seed,
        )?)),
        Topology::CellSpecific => {
            let mut part = partition_by_cell(
                &source.samples,
                &descriptor.features,
                source.split_fraction,
                seed,
                source.min_cell_samples,
            )?;
            part.datasets = std::mem::take(&mut part.datasets).into_iter().map(|(c, d)| (c, tag(d))).collect();
            PreparedData::Cells(part)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell_id: u32,
    pub train: StatsSummary,
    pub test: Option<StatsSummary>,
    pub training: Option<TrainingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment_id: String,
    pub feature_set: String,
    pub feature_config: FeatureConfig,
    pub feature_layout: Vec<String>,
    pub training_topology: Topology,
    pub model_kind: ModelKind,
    pub architecture: String,
    pub seed: u64,
    pub train: ErrorStats,
    pub test: ErrorStats,
    pub cdf: Vec<(f64, f64)>,
    pub percentiles: Percentiles,
    /// Test errors of predicting the mean training position everywhere.
    pub centroid_baseline: StatsSummary,
    /// Network-level runs hold one entry with `cell_id` 0.
    pub cells: Vec<CellResult>,
    /// Cells with too few samples to train on, and their sample counts.
    pub skipped_cells: BTreeMap<u32, usize>,
}

struct Fitted {
    train_pred: Array2<f64>,
    test_pred: Array2<f64>,
    training: Option<TrainingSummary>,
}

fn fit_and_predict(dataset: &Dataset, model: &ModelSpec, seed: u64, cell: u64) -> Result<Fitted> {
    let (train_x, train_y) = dataset.train();
    let (test_x, _) = dataset.test();
    match model {
        ModelSpec::Dtree { tree } => {
            let t = fit_tree(train_x.view(), train_y.view(), tree)?;
            Ok(Fitted {
                train_pred: predict_tree(&t, train_x.view())?,
                test_pred: predict_tree(&t, test_x.view())?,
                training: None,
            })
        }
        ModelSpec::Mlp { hidden_layers, train: cfg } => {
            let arch = MlpArchitecture::regressor(dataset.num_features(), hidden_layers);
            let init = init_model(&arch, derive(seed, stream::INIT, cell))?;
            let cfg = TrainConfig { seed: derive(seed, stream::SHUFFLE, cell), ..cfg.clone() };
            let xn = dataset.norm_stats.normalize(train_x.view())?;
            let m = train(init, xn.view(), train_y.view(), &cfg)?;
            let log = &m.training_log;
            Ok(Fitted {
                train_pred: predict(&m, train_x.view(), &dataset.norm_stats)?,
                test_pred: predict(&m, test_x.view(), &dataset.norm_stats)?,
                training: Some(TrainingSummary {
                    epochs_run: log.epochs.len(),
                    best_epoch: log.best_epoch,
                    best_loss: log.best_loss,
                    stopped_early: log.stopped_early,
                }),
            })
        }
    }
}

fn check_features(dataset: &Dataset, descriptor: &ExperimentDescriptor) -> Result<()> {
    let expected = match descriptor.topology {
        Topology::NetworkLevel => descriptor.features.clone(),
        Topology::CellSpecific => FeatureConfig { include_serving_cell_id: false, ..descriptor.features.clone() },
    };
    if dataset.provenance.feature_config != expected {
        return Err(Error::InvalidArgument(format!(
            "experiment `{}` expects feature set `{}` but the dataset was built with a different configuration",
            descriptor.id, descriptor.feature_set
        )));
    }
    Ok(())
}

/// Train the descriptor's model on the prepared data and evaluate it on the
/// held-out rows. Cell-specific runs train one model per cell and pool the
/// test errors of all cells.
pub fn run_experiment(data: &PreparedData, descriptor: &ExperimentDescriptor) -> Result<EvalReport> {
    let units: Vec<(u32, &Dataset)> = match (data, descriptor.topology) {
        (PreparedData::Network(d), Topology::NetworkLevel) => vec![(0, d)],
        (PreparedData::Cells(p), Topology::CellSpecific) => p.datasets.iter().map(|(c, d)| (*c, d)).collect(),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "experiment `{}` wants {} data",
                descriptor.id,
                descriptor.topology.as_str()
            )))
        }
    };
    if units.is_empty() {
        return Err(Error::Empty("cell datasets"));
    }
    let mut train_err = Vec::new();
    let mut test_err = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_labels = Vec::new();
    let mut cells = Vec::with_capacity(units.len());
    for (cell, dataset) in &units {
        check_features(dataset, descriptor)?;
        let fitted = fit_and_predict(dataset, &descriptor.model, descriptor.seed, u64::from(*cell))?;
        let (_, train_y) = dataset.train();
        let (_, test_y) = dataset.test();
        let tr = euclidean_errors(fitted.train_pred.view(), train_y.view())?;
        let te = euclidean_errors(fitted.test_pred.view(), test_y.view())?;
        cells.push(CellResult {
            cell_id: *cell,
            train: error_stats(&tr)?.summary(),
            test: error_stats(&te).ok().map(|s| s.summary()),
            training: fitted.training,
        });
        train_err.extend(tr);
        test_err.extend(te);
        train_labels.push(train_y);
        test_labels.push(test_y);
    }
    let stack = |parts: &[Array2<f64>]| {
        let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::InvalidArgument(e.to_string()))
    };
    let train_y = stack(&train_labels)?;
    let test_y = stack(&test_labels)?;
    let test = error_stats(&test_err)?;
    let centroid = train_y.mean_axis(Axis(0)).ok_or(Error::Empty("training labels"))?;
    let baseline = centroid.broadcast(test_y.dim()).expect("two columns").to_owned();
    let skipped_cells = match data {
        PreparedData::Cells(p) => p.skipped.clone(),
        PreparedData::Network(_) => BTreeMap::new(),
    };
    Ok(EvalReport {
        experiment_id: descriptor.id.clone(),
        feature_set: descriptor.feature_set.clone(),
        feature_config: units[0].1.provenance.feature_config.clone(),
        feature_layout: units[0].1.layout.clone(),
        training_topology: descriptor.topology,
        model_kind: descriptor.model.kind(),
        architecture: descriptor.model.architecture(),
        seed: descriptor.seed,
        train: error_stats(&train_err)?,
        cdf: error_cdf(&test.errors)?,
        percentiles: Percentiles::of(&test.errors)?,
        test,
        centroid_baseline: error_stats(&euclidean_errors(baseline.view(), test_y.view())?)?.summary(),
        cells,
        skipped_cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFailure {
    pub experiment_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatrixOutcome {
    pub reports: Vec<EvalReport>,
    pub failures: Vec<ExperimentFailure>,
}

/// Run every experiment on a pool of `jobs` threads. Reports come back in
/// matrix order; a failing experiment is recorded and the rest continue.
pub fn run_matrix(matrix: &[ExperimentDescriptor], source: &DataSource, jobs: usize) -> Result<MatrixOutcome> {
    let mut seen = BTreeSet::new();
    for d in matrix {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate experiment id `{}`", d.id)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<Result<EvalReport>> = pool.install(|| {
        matrix
            .par_iter()
            .with_max_len(1)
            .map(|d| prepare_data(source, d).and_then(|data| run_experiment(&data, d)))
            .collect()
    });
    let mut outcome = MatrixOutcome::default();
    for (d, r) in matrix.iter().zip(results) {
        match r {
            Ok(report) => outcome.reports.push(report),
            Err(e) => outcome.failures.push(ExperimentFailure { experiment_id: d.id.clone(), error: e.to_string() }),
        }
    }
    Ok(outcome)
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per report.
pub fn comparison_csv(reports: &[EvalReport]) -> Result<String> {
    csv_string(
        &[
            "experiment_id", "feature_set", "n_features", "topology", "model", "architecture", "seed",
            "train_mean", "train_std", "test_mean", "test_std", "test_n", "p50", "p80", "p90",
            "centroid_test_mean",
        ],
        reports.iter().map(|r| {
            vec![
                r.experiment_id.clone(),
                r.feature_set.clone(),
                r.feature_layout.len().to_string(),
                r.training_topology.as_str().to_string(),
                model_name(r.model_kind).to_string(),
                r.architecture.clone(),
                r.seed.to_string(),
                r.train.mean.to_string(),
                r.train.std.to_string(),
                r.test.mean.to_string(),
                r.test.std.to_string(),
                r.test.n.to_string(),
                r.percentiles.p50.to_string(),
                r.percentiles.p80.to_string(),
                r.percentiles.p90.to_string(),
                r.centroid_baseline.mean.to_string(),
            ]
        }),
    )
}

fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Mlp => "mlp",
        ModelKind::Dtree => "dtree",
    }
}

/// Reports grouped by feature set, topology, model and architecture, with the
/// median test statistics across seeds.
pub fn aggregate_csv(reports: &[EvalReport]) -> Result<String> {
    let mut groups: BTreeMap<(String, &str, &str, String), Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((
                r.feature_set.clone(),
                r.training_topology.as_str(),
                model_name(r.model_kind),
                r.architecture.clone(),
            ))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((fs, topo, model, arch), rs) in groups {
        let med = |f: fn(&EvalReport) -> f64| median(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        rows.push(vec![
            fs,
            topo.to_string(),
            model.to_string(),
            arch,
            rs.len().to_string(),
            med(|r| r.test.mean)?.to_string(),
            med(|r| r.test.std)?.to_string(),
            med(|r| r.percentiles.p80)?.to_string(),
            med(|r| r.centroid_baseline.mean)?.to_string(),
        ]);
    }
    csv_string(
        &[
            "feature_set", "topology", "model", "architecture", "seeds", "median_test_mean", "median_test_std",
            "median_p80", "median_centroid_test_mean",
        ],
        rows,
    )
}

/// Two columns: `error,fraction`.
pub fn cdf_csv(report: &EvalReport) -> Result<String> {
    csv_string(&["error", "fraction"], report.cdf.iter().map(|(e, f)| vec![e.to_string(), f.to_string()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn identical_positions_have_zero_error() {
        let a = array![[1.0, 2.0], [3.0, -4.0]];
        assert_eq!(euclidean_errors(a.view(), a.view()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn three_four_five() {
        let e = euclidean_errors(array![[3.0, 4.0]].view(), array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(e, vec![5.0]);
    }

    #[test]
    fn shape_mismatch() {
        let r = euclidean_errors(array![[3.0, 4.0]].view(), array![[0.0, 0.0], [1.0, 1.0]].view());
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn stats_by_hand() {
        let s = error_stats(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (3.0, 0.0, 3));
        let s = error_stats(&[0.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 2.0));
        assert!(matches!(error_stats(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn cdf_by_hand() {
        let c = error_cdf(&[4.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(c, vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]);
        assert_eq!(error_cdf(&[7.0, 7.0, 7.0]).unwrap(), vec![(7.0, 1.0)]);
        assert!(error_cdf(&[]).is_err());
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0).unwrap(), 5.0);
        assert_eq!(percentile(&v, 80.0).unwrap(), 8.0);
        assert_eq!(percentile(&v, 81.0).unwrap(), 9.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 10.0);
        assert_eq!(percentile(&[3.0], 1.0).unwrap(), 3.0);
        assert!(percentile(&v, 0.0).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
    }

    proptest! {
        #[test]
        fn translation_invariance(rows in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..20),
                                  dx in -1e3f64..1e3, dy in -1e3f64..1e3) {
            let pred = Array2::from_shape_fn((rows.len(), 2), |(i, j)| if j == 0 { rows[i].0 } else { rows[i].1 });
            let truth = Array2::from_shape_fn((rows.len(), 2), |(i, j)| if j == 0 { rows[i].2 } else { rows[i].3 });
            let shift = array![dx, dy];
            let a = euclidean_errors(pred.view(), truth.view()).unwrap();
            let b = euclidean_errors((&pred + &shift).view(), (&truth + &shift).view()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn variance_identity(v in prop::collection::vec(0.0f64..100.0, 1..200)) {
            let s = error_stats(&v).unwrap();
            let mean_sq = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
            prop_assert!((s.std * s.std + s.mean * s.mean - mean_sq).abs() <= 1e-9 * (1.0 + mean_sq));
        }

        #[test]
        fn cdf_is_monotone_and_ends_at_one(v in prop::collection::vec(0.0f64..10.0, 1..100)) {
            let c = error_cdf(&v).unwrap();
            prop_assert!(c.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(c.last().unwrap().1, 1.0);
            for &(x, f) in &c {
                let count = v.iter().filter(|e| **e <= x).count();
                prop_assert_eq!(f, count as f64 / v.len() as f64);
            }
        }
    }
}
