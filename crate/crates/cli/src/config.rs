//! Run configuration file.

use beamloc::dtree::TreeConfig;
use beamloc::eval::{ExperimentDescriptor, ModelKind, ModelSpec, Topology};
use beamloc::fingerprint::{FeatureConfig, DEFAULT_MIN_CELL_SAMPLES};
use beamloc::mlp::TrainConfig;
use beamloc::propagation::PropagationConfig;
use beamloc::scenario::ScenarioConfig;
use beamloc::seed::{derive, stream};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: invalid value at `{key}`: {message}")]
    Key { path: PathBuf, key: String, message: String },
    #[error("config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_split_fraction() -> f64 {
    0.9
}

fn default_min_cell_samples() -> usize {
    DEFAULT_MIN_CELL_SAMPLES
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed every random stream derives from.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
    #[serde(default = "default_min_cell_samples")]
    pub min_cell_samples: usize,
    /// Keep only locations in line of sight of their serving cell.
    #[serde(default = "default_true")]
    pub los_only: bool,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default)]
    pub features: BTreeMap<String, FeatureConfig>,
    #[serde(default)]
    pub experiments: Vec<ExperimentEntry>,
}

/// One arm of the matrix, repeated once per entry of `seeds`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEntry {
    pub id: String,
    pub features: String,
    pub topology: Topology,
    pub model: ModelKind,
    #[serde(default)]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub max_depth: Option<usize>,
    /// Replicate indices; each yields its own experiment seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let config = Self::parse(&text, path)?;
        config.check(path)?;
        Ok(config)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let message = e.into_inner().message().trim().to_string();
            if key == "." || key.is_empty() {
                ConfigError::Syntax { path: path.to_path_buf(), message }
            } else {
                ConfigError::Key { path: path.to_path_buf(), key, message }
            }
        })
    }

    fn check(&self, path: &Path) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid { path: path.to_path_buf(), message };
        let key = |key: String, e: beamloc::Error| ConfigError::Key {
            path: path.to_path_buf(),
            key,
            message: e.to_string(),
        };
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(invalid(format!("split_fraction {} not in (0, 1)", self.split_fraction)));
        }
        self.propagation.validate().map_err(|e| key("propagation".into(), e))?;
        self.train.validate().map_err(|e| key("train".into(), e))?;
        self.tree.validate().map_err(|e| key("tree".into(), e))?;
        for (name, f) in &self.features {
            f.validate().map_err(|e| key(format!("features.{name}"), e))?;
        }
        let mut ids = BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let at = |field: &str| format!("experiments[{i}].{field}");
            if !self.features.contains_key(&e.features) {
                return Err(ConfigError::Key {
                    path: path.to_path_buf(),
                    key: at("features"),
                    message: format!("unknown feature set `{}`", e.features),
                });
            }
            if e.model == ModelKind::Mlp && (e.hidden_layers.is_empty() || e.hidden_layers.contains(&0)) {
                return Err(ConfigError::Key {
                    path: path.to_path_buf(),
                    key: at("hidden_layers"),
                    message: "an mlp needs at least one non-empty hidden layer".into(),
                });
            }
            if e.seeds.is_empty() {
                return Err(ConfigError::Key {
                    path: path.to_path_buf(),
                    key: at("seeds"),
                    message: "at least one replicate is required".into(),
                });
            }
            for r in &e.seeds {
                if !ids.insert(experiment_id(&e.id, *r)) {
                    return Err(ConfigError::Key {
                        path: path.to_path_buf(),
                        key: at("id"),
                        message: format!("duplicate experiment `{}`", experiment_id(&e.id, *r)),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn scenario_seed(&self) -> u64 {
        derive(self.seed, stream::SCENARIO, 0)
    }

    /// Scenario settings with the derived scenario seed applied.
    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig { seed: self.scenario_seed(), ..self.scenario.clone() }
    }

    /// The experiment matrix, one descriptor per (entry, replicate).
    pub fn descriptors(&self) -> Vec<ExperimentDescriptor> {
        let mut out = Vec::new();
        for e in &self.experiments {
            let model = match e.model {
                ModelKind::Mlp => ModelSpec::Mlp { hidden_layers: e.hidden_layers.clone(), train: self.train.clone() },
                ModelKind::Dtree => ModelSpec::Dtree {
                    tree: TreeConfig { max_depth: e.max_depth.or(self.tree.max_depth), ..self.tree.clone() },
                },
            };
            for &r in &e.seeds {
                out.push(ExperimentDescriptor {
                    id: experiment_id(&e.id, r),
                    feature_set: e.features.clone(),
                    features: self.features[&e.features].clone(),
                    topology: e.topology,
                    model: model.clone(),
                    seed: derive(self.seed, stream::EXPERIMENT, r),
                });
            }
        }
        out
    }
}

fn experiment_id(id: &str, replicate: u64) -> String {
    format!("{id}-s{replicate}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let c = RunConfig::parse(text, Path::new("test.toml"))?;
        c.check(Path::new("test.toml"))?;
        Ok(c)
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("seed = 5").unwrap();
        assert_eq!(c.split_fraction, 0.9);
        assert_eq!(c.scenario.site_rows * c.scenario.site_cols, 8);
        assert!(c.descriptors().is_empty());
    }

    #[test]
    fn seed_is_required() {
        match parse("output_dir = \"x\"") {
            Err(ConfigError::Syntax { message, .. }) => assert!(message.contains("seed"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_names_section_and_key() {
        match parse("seed = 1\n[scenario]\nsite_rows = \"two\"\n") {
            Err(ConfigError::Key { key, .. }) => assert_eq!(key, "scenario.site_rows"),
            other => panic!("unexpected {other:?}"),
        }
        match parse("seed = 1\n[train.adam]\nlearning_rte = 0.1\n") {
            Err(e @ ConfigError::Key { .. }) => assert!(e.to_string().contains("learning_rte"), "{e}"),
            Err(e @ ConfigError::Syntax { .. }) => assert!(e.to_string().contains("learning_rte"), "{e}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_feature_set_is_rejected() {
        let text = "seed = 1\n[[experiments]]\nid = \"a\"\nfeatures = \"nope\"\ntopology = \"network_level\"\nmodel = \"dtree\"\n";
        match parse(text) {
            Err(ConfigError::Key { key, .. }) => assert_eq!(key, "experiments[0].features"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn replicates_get_distinct_seeds() {
        let text = r#"
seed = 1
[features.s3n2]
n_serving_beams = 3
n_neighbor_cells = 2
[[experiments]]
id = "mlp"
features = "s3n2"
topology = "cell_specific"
model = "mlp"
hidden_layers = [8]
seeds = [0, 1, 2]
"#;
        let d = parse(text).unwrap().descriptors();
        assert_eq!(d.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["mlp-s0", "mlp-s1", "mlp-s2"]);
        assert_ne!(d[0].seed, d[1].seed);
        assert_eq!(d[0].features.len(), 13);
    }
}
