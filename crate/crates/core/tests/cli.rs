use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use setplay_core::cli::{self, CorpusSpec};
use setplay_core::datagen;
use setplay_core::model::{self, SetplayFeatures};
use setplay_core::pipeline::ClusterReport;

fn setplay(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_setplay"));
    cmd.args(args).env_remove(cli::SEED_ENV);
    if let Some(seed) = env_seed {
        cmd.env(cli::SEED_ENV, seed);
    }
    cmd.output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_spec(dir: &Path, families: Vec<datagen::FamilySpec>) -> PathBuf {
    let path = dir.join("spec.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&CorpusSpec { families }).unwrap(),
    )
    .unwrap();
    path
}

/// Generated corpus directory and its parsed dataset.
fn corpus(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = write_spec(dir, datagen::paper_shape_spec(5, 0.5));
    let corpus = dir.join("corpus");
    let dataset = dir.join("dataset.json");
    assert!(
        setplay(&["generate", s(&spec), "--out-dir", s(&corpus)], None)
            .status
            .success()
    );
    assert!(setplay(&["parse", s(&corpus), "--out", s(&dataset)], None)
        .status
        .success());
    (corpus, dataset)
}

#[test]
fn generate_then_parse_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, dataset) = corpus(dir.path());
    let mut files: Vec<PathBuf> = fs::read_dir(&corpus)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "sp"))
        .collect();
    files.sort();
    assert_eq!(files.len(), 18);
    assert!(corpus.join(cli::SPEC_ECHO_FILE).exists());

    let loaded: Vec<SetplayFeatures> =
        serde_json::from_str(&fs::read_to_string(&dataset).unwrap()).unwrap();
    let direct: Vec<SetplayFeatures> = files
        .iter()
        .map(|f| {
            model::extract_features(&model::parse_setplay(&fs::read_to_string(f).unwrap()).unwrap())
        })
        .collect();
    assert_eq!(loaded, direct);
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), datagen::paper_shape_spec(11, 0.5));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(setplay(&["generate", s(&spec), "--out-dir", s(out)], None)
            .status
            .success());
    }
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap()
        );
    }
}

#[test]
fn zero_count_family_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut families = datagen::paper_shape_spec(0, 0.5);
    families[2].count = 0;
    let spec = write_spec(dir.path(), families);
    let out = setplay(
        &["generate", s(&spec), "--out-dir", s(&dir.path().join("c"))],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("count"));
}

#[test]
fn empty_directory_gives_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let dataset = dir.path().join("d.json");
    let out = setplay(&["parse", s(&empty), "--out", s(&dataset)], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let rows: Vec<SetplayFeatures> =
        serde_json::from_str(&fs::read_to_string(&dataset).unwrap()).unwrap();
    assert!(rows.is_empty());
}

#[test]
fn malformed_file_names_file_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sp");
    fs::write(&bad, "(setplay :name x\n  :id 1))\n").unwrap();
    let out = setplay(
        &["parse", s(&bad), "--out", s(&dir.path().join("d.json"))],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains(&format!("{}:2:9", bad.display())),
        "{stderr}"
    );
}

#[test]
fn cluster_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dataset) = corpus(dir.path());
    let out_dir = dir.path().join("run");
    let out = setplay(
        &[
            "cluster",
            s(&dataset),
            "--restarts",
            "3",
            "--out-dir",
            s(&out_dir),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let curve = fs::read_to_string(out_dir.join(cli::CURVE_FILE)).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "c,fs_best,fs_mean,fs_std");
    assert_eq!(lines.len(), 8);
    assert!(lines[1].starts_with("2,"));

    let report: ClusterReport =
        serde_json::from_str(&fs::read_to_string(out_dir.join(cli::REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.instances.len(), 18);
    let partition = cli::load_partition_csv(&out_dir.join(cli::PARTITION_FILE)).unwrap();
    assert_eq!(partition.clusters(), report.stage1.best_c);
    assert_eq!(partition.objects(), 18);

    let manifest: cli::RunManifest =
        serde_json::from_str(&fs::read_to_string(out_dir.join(cli::MANIFEST_FILE)).unwrap())
            .unwrap();
    assert_eq!(manifest.config.restarts, 3);
    assert_eq!(manifest.input_paths, vec![dataset]);
}

#[test]
fn gamma_zero_gives_singleton_sets() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dataset) = corpus(dir.path());
    let out_dir = dir.path().join("run");
    let out = setplay(
        &[
            "cluster",
            s(&dataset),
            "--gamma",
            "0",
            "--restarts",
            "2",
            "--out-dir",
            s(&out_dir),
        ],
        None,
    );
    assert!(out.status.success());
    let report: ClusterReport =
        serde_json::from_str(&fs::read_to_string(out_dir.join(cli::REPORT_FILE)).unwrap()).unwrap();
    assert!(report.stage1.clusters.iter().all(|c| c.members.len() == 1));
    assert!(report.stage2.iter().all(|c| c.fs == 1.0));
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dataset) = corpus(dir.path());
    let out_dir = dir.path().join("run");
    let out = setplay(
        &[
            "cluster",
            s(&dataset),
            "--seed",
            "1",
            "--restarts",
            "2",
            "--c1-max",
            "3",
            "--out-dir",
            s(&out_dir),
        ],
        Some("77"),
    );
    assert!(out.status.success());
    let manifest: cli::RunManifest =
        serde_json::from_str(&fs::read_to_string(out_dir.join(cli::MANIFEST_FILE)).unwrap())
            .unwrap();
    assert_eq!(manifest.config.seed, 77);
    assert!(manifest.seeds.from_env);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dataset) = corpus(dir.path());
    let run = dir.path().join("run");
    let out = setplay(
        &["cluster", s(&dataset), "--m", "1", "--out-dir", s(&run)],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`m`"));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"c1_min": 2, "restars": 3}"#).unwrap();
    let out = setplay(
        &[
            "cluster",
            s(&dataset),
            "--config",
            s(&cfg),
            "--out-dir",
            s(&run),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("restars"));

    let out = setplay(
        &[
            "cluster",
            s(&dataset),
            "--c1-min",
            "30",
            "--out-dir",
            s(&run),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = setplay(
        &[
            "cluster",
            s(&dir.path().join("nope.json")),
            "--out-dir",
            s(dir.path()),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_curve_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dataset) = corpus(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = setplay(
        &[
            "sweep",
            s(&dataset),
            "--m-list",
            "1.5,2",
            "--alpha-list",
            "1,2",
            "--restarts",
            "2",
            "--out-dir",
            s(&out_dir),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut names: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "fs_curve_m1.5_alpha1.csv",
            "fs_curve_m1.5_alpha2.csv",
            "fs_curve_m2_alpha1.csv",
            "fs_curve_m2_alpha2.csv"
        ]
    );

    let single = dir.path().join("single");
    let out = setplay(
        &[
            "sweep",
            s(&dataset),
            "--m-list",
            "2",
            "--alpha-list",
            "1",
            "--restarts",
            "2",
            "--out-dir",
            s(&single),
        ],
        None,
    );
    assert!(out.status.success());
    assert_eq!(fs::read_dir(&single).unwrap().count(), 1);

    let out = setplay(
        &[
            "sweep",
            s(&dataset),
            "--m-list",
            "1,2",
            "--alpha-list",
            "1",
            "--out-dir",
            s(&single),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}
