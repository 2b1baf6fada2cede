use beamloc_cli::{cmd_dataset, cmd_run, cmd_scenario, shipped_config, Options};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

fn beamloc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_beamloc")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_exits_with_2() {
    let out = beamloc(&["run", "--config", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_section_names_section_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[scenario]\nsite_cols = -3\n");
    let out = beamloc(&["scenario", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scenario.site_cols"), "{err}");

    let cfg = write_config(dir.path(), "seed = 1\n[propagation]\nnoise_flor = -100.0\n");
    let out = beamloc(&["scenario", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("propagation") && err.contains("noise_flor"), "{err}");
}

#[test]
fn default_scenario_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n");
    let out_dir = dir.path().join("out");
    let out = beamloc(&["scenario", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sites 8  cells 24"), "{stdout}");
    assert!(out_dir.join("scenario.json").is_file());
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = shipped_config("paper-matrix");
    let out = beamloc(&["run", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cb-s3n2-h64x64-s2"), "{stdout}");
    assert!(!out_dir.exists());
}

#[test]
fn dataset_is_idempotent_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let opts = Options { out: Some(dir.path().join(run)), ..Options::new(shipped_config("tiny")) };
        let summary = cmd_dataset(&opts, &mut std::io::sink()).unwrap();
        for (name, rows) in &summary.datasets {
            let csv = std::fs::read_to_string(dir.path().join(run).join("datasets").join(format!("{name}.csv"))).unwrap();
            assert_eq!(csv.lines().count(), rows + 1);
        }
        bytes.push(std::fs::read(dir.path().join(run).join("datasets").join("s3n2.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: u64, sub: &str| {
        let opts = Options { out: Some(dir.path().join(sub)), seed: Some(seed), ..Options::new(shipped_config("tiny")) };
        cmd_scenario(&opts, &mut std::io::sink()).unwrap();
        std::fs::read(dir.path().join(sub).join("scenario.json")).unwrap()
    };
    assert_ne!(run(1, "one"), run(2, "two"));
}

#[test]
fn empty_dataset_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\n[scenario]\nsite_rows = 1\nsite_cols = 1\ngrid_resolution = 5.0\ntx_power_dbm = -400.0\n",
    );
    let out = beamloc(&["dataset", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn single_tree_matrix_is_quick_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 3
[scenario]
site_rows = 1
site_cols = 1
grid_resolution = 2.0
[features.s3n2]
n_serving_beams = 3
n_neighbor_cells = 2
[[experiments]]
id = "tree"
features = "s3n2"
topology = "network_level"
model = "dtree"
"#,
    );
    let start = Instant::now();
    let opts = Options { out: Some(dir.path().join("o")), ..Options::new(&cfg) };
    let manifest = cmd_run(&opts, &mut std::io::sink()).unwrap();
    assert!(start.elapsed().as_secs() < 10);
    assert_eq!(manifest.completed, ["tree-s0"]);
    for f in ["reports/tree-s0.json", "cdf/tree-s0.csv", "comparison.csv", "comparison_by_arm.csv", "manifest.json"] {
        assert!(dir.path().join("o").join(f).is_file(), "{f}");
    }
}

#[test]
fn all_failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // one site has three cells, so no sample has four neighbor cells
    let cfg = write_config(
        dir.path(),
        r#"
seed = 3
[scenario]
site_rows = 1
site_cols = 1
grid_resolution = 4.0
[features.wide]
n_serving_beams = 3
n_neighbor_cells = 4
[[experiments]]
id = "tree"
features = "wide"
topology = "network_level"
model = "dtree"
"#,
    );
    let out = beamloc(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("o/manifest.json").is_file());
}
