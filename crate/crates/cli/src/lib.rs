//! Pipeline driver behind the `beamloc` binary: scenario export, dataset
//! generation and the experiment matrix, all driven by one TOML file.

pub mod config;

pub use config::{ConfigError, RunConfig};

use beamloc::eval::{aggregate_csv, cdf_csv, comparison_csv, run_matrix, DataSource, ExperimentFailure};
use beamloc::fingerprint::{build_dataset, filter_los, generate_samples, los_fraction, write_dataset, FingerprintSample};
use beamloc::io::write_atomic;
use beamloc::scenario::{build_scenario, enumerate_locations, Scenario};
use beamloc::seed::{derive, stream};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] beamloc::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("no samples left after filtering")]
    EmptyDataset,
    #[error("all {0} experiments failed")]
    AllFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(beamloc::Error::from)?;
    write(path, text.as_bytes())
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub dry_run: bool,
}

impl Options {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        Options { config: config.into(), ..Default::default() }
    }

    fn load(&self) -> Result<(RunConfig, PathBuf), CliError> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| config.output_dir.clone());
        Ok((config, out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub sites: usize,
    pub cells: usize,
    pub beams: usize,
    pub buildings: usize,
    pub locations: usize,
}

fn summarize(scenario: &Scenario) -> ScenarioSummary {
    ScenarioSummary {
        sites: scenario.sites.len(),
        cells: scenario.num_cells(),
        beams: scenario.num_beams(),
        buildings: scenario.buildings.len(),
        locations: enumerate_locations(scenario).len(),
    }
}

/// Build the scenario, write `scenario.json` and print its counts.
pub fn cmd_scenario(opts: &Options, stdout: &mut dyn Write) -> Result<ScenarioSummary, CliError> {
    let (config, out) = opts.load()?;
    let scenario = build_scenario(&config.scenario_config())?;
    let summary = summarize(&scenario);
    let path = out.join("scenario.json");
    let _ = writeln!(
        stdout,
        "sites {}  cells {}  beams {}  buildings {}  locations {}",
        summary.sites, summary.cells, summary.beams, summary.buildings, summary.locations
    );
    if opts.dry_run {
        let _ = writeln!(stdout, "would write {}", path.display());
    } else {
        write(&path, scenario.to_json()?.as_bytes())?;
        let _ = writeln!(stdout, "wrote {}", path.display());
    }
    Ok(summary)
}

fn load_samples(config: &RunConfig, stdout: &mut dyn Write) -> Result<Vec<FingerprintSample>, CliError> {
    let scenario = build_scenario(&config.scenario_config())?;
    let samples = generate_samples(&scenario, &config.propagation)?;
    let _ = writeln!(
        stdout,
        "{} samples, LoS fraction {:.3}",
        samples.len(),
        los_fraction(&samples)
    );
    let samples = if config.los_only { filter_los(samples) } else { samples };
    if samples.is_empty() {
        return Err(CliError::EmptyDataset);
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub samples: usize,
    /// `(feature set, rows)` per written dataset.
    pub datasets: Vec<(String, usize)>,
}

/// Generate samples and write one dataset per configured feature set under
/// `datasets/`. The split is the one the first replicate of every experiment
/// uses.
pub fn cmd_dataset(opts: &Options, stdout: &mut dyn Write) -> Result<DatasetSummary, CliError> {
    let (config, out) = opts.load()?;
    let samples = load_samples(&config, stdout)?;
    let dir = out.join("datasets");
    let split_seed = derive(derive(config.seed, stream::EXPERIMENT, 0), stream::SPLIT, 0);
    let mut datasets = Vec::new();
    for (name, features) in &config.features {
        let mut ds = build_dataset(&samples, features, config.split_fraction, split_seed)?;
        ds.provenance.scenario_seed = Some(config.scenario_seed());
        if opts.dry_run {
            let _ = writeln!(stdout, "would write {}/{name}.csv ({} rows)", dir.display(), ds.len());
        } else {
            let (csv, _) = write_dataset(&ds, &dir, name)?;
            let _ = writeln!(stdout, "wrote {} ({} rows)", csv.display(), ds.len());
        }
        datasets.push((name.clone(), ds.len()));
    }
    Ok(DatasetSummary { samples: samples.len(), datasets })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub experiments: Vec<String>,
    pub completed: Vec<String>,
    pub failures: Vec<ExperimentFailure>,
}

/// Run the experiment matrix and write reports, CDFs, comparison tables and
/// a manifest under the output directory.
pub fn cmd_run(opts: &Options, stdout: &mut dyn Write) -> Result<Manifest, CliError> {
    let (config, out) = opts.load()?;
    let matrix = config.descriptors();
    if opts.dry_run {
        for d in &matrix {
            let _ = writeln!(
                stdout,
                "{}  features={}  topology={}  model={:?} {}",
                d.id,
                d.feature_set,
                d.topology.as_str(),
                d.model.kind(),
                d.model.architecture()
            );
        }
        let _ = writeln!(stdout, "{} experiments planned; nothing written", matrix.len());
        return Ok(Manifest { experiments: matrix.iter().map(|d| d.id.clone()).collect(), completed: vec![], failures: vec![] });
    }
    let source = DataSource {
        samples: load_samples(&config, stdout)?,
        split_fraction: config.split_fraction,
        min_cell_samples: config.min_cell_samples,
        scenario_seed: Some(config.scenario_seed()),
    };
    let outcome = run_matrix(&matrix, &source, opts.jobs.unwrap_or(1))?;
    for r in &outcome.reports {
        write_json(&out.join("reports").join(format!("{}.json", r.experiment_id)), r)?;
        write(&out.join("cdf").join(format!("{}.csv", r.experiment_id)), cdf_csv(r)?.as_bytes())?;
        let _ = writeln!(
            stdout,
            "{}: test mean {:.3} m, std {:.3} m, p80 {:.3} m (centroid {:.1} m)",
            r.experiment_id, r.test.mean, r.test.std, r.percentiles.p80, r.centroid_baseline.mean
        );
    }
    for f in &outcome.failures {
        let _ = writeln!(stdout, "{}: FAILED: {}", f.experiment_id, f.error);
    }
    write(&out.join("comparison.csv"), comparison_csv(&outcome.reports)?.as_bytes())?;
    write(&out.join("comparison_by_arm.csv"), aggregate_csv(&outcome.reports)?.as_bytes())?;
    let manifest = Manifest {
        experiments: matrix.iter().map(|d| d.id.clone()).collect(),
        completed: outcome.reports.iter().map(|r| r.experiment_id.clone()).collect(),
        failures: outcome.failures,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    if !matrix.is_empty() && manifest.completed.is_empty() {
        return Err(CliError::AllFailed(matrix.len()));
    }
    Ok(manifest)
}

/// Directory reports are written to for `opts`.
pub fn output_dir(opts: &Options) -> Result<PathBuf, CliError> {
    Ok(opts.load()?.1)
}

/// Path of the shipped configuration `name` (`tiny`, `paper-matrix`).
pub fn shipped_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}
