//! Command-line surface: `parse`, `cluster`, `generate`, `sweep`, `rerun`.
//!
//! Every output file is written to a temporary file in the target directory
//! and renamed into place.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{self, FamilySpec, GeneratedPlan};
use crate::model::{self, SetplayFeatures};
use crate::partition::PartitionMatrix;
use crate::pipeline::{self, ClusterReport, CurveRow, PipelineConfig, PipelineError};

pub const SEED_ENV: &str = "SETPLAY_SEED";

/// Column-sum drift that is silently corrected when a partition is loaded.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Config(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config { .. } | PipelineError::RangeTooLarge { .. } => {
                CliError::Config(e.to_string())
            }
            PipelineError::EmptyDataset => CliError::Input(e.to_string()),
            PipelineError::Fcm(_) => CliError::Internal(e.to_string()),
        }
    }
}

fn io_input(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "setplay", version, about = "Parse and cluster setplay plans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the feature dataset from plan files or directories of `.sp` files.
    Parse {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "dataset.json")]
        out: PathBuf,
    },
    /// Run the two-stage clustering on a dataset.
    Cluster {
        dataset: PathBuf,
        #[command(flatten)]
        opts: ClusterOpts,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Write a synthetic corpus described by a family spec.
    Generate {
        spec: PathBuf,
        #[arg(long, default_value = "corpus")]
        out_dir: PathBuf,
    },
    /// Stage-one curves for every (m, alpha) combination.
    Sweep {
        dataset: PathBuf,
        #[arg(long = "m-list", value_delimiter = ',', required = true)]
        m_list: Vec<f64>,
        #[arg(long = "alpha-list", value_delimiter = ',', required = true)]
        alpha_list: Vec<f64>,
        #[command(flatten)]
        opts: ClusterOpts,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
    },
    /// Repeat a `cluster` run from its manifest.
    Rerun {
        manifest: PathBuf,
        #[arg(long, default_value = "rerun")]
        out_dir: PathBuf,
    },
}

/// Config file plus flag overrides; flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct ClusterOpts {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub c1_min: Option<usize>,
    #[arg(long)]
    pub c1_max: Option<usize>,
    #[arg(long)]
    pub c2: Option<usize>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_fs_threshold: Option<f64>,
    #[arg(long)]
    pub normalize: bool,
}

impl ClusterOpts {
    /// Resolve the effective config. `env_seed` is the value of
    /// `SETPLAY_SEED`, which beats both the file and `--seed`.
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_input(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(
            c1_min,
            c1_max,
            c2,
            m,
            alpha,
            gamma,
            restarts,
            seed,
            split_fs_threshold
        );
        if self.normalize {
            cfg.distance.normalize_features = true;
        }
        if let Some(s) = env_seed {
            cfg.seed = s.trim().parse().map_err(|_| {
                CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse arguments, run, print diagnostics and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    match execute(cli.command, env_seed.as_deref()) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run one command; returns warnings to report.
pub fn execute(command: Command, env_seed: Option<&str>) -> Result<Vec<String>, CliError> {
    match command {
        Command::Parse { paths, out } => {
            let summary = cmd_parse(&paths, &out)?;
            Ok(summary.warnings)
        }
        Command::Cluster {
            dataset,
            opts,
            out_dir,
        } => {
            let cfg = opts.resolve(env_seed)?;
            let report = cmd_cluster(&dataset, &cfg, &out_dir)?;
            Ok(report.warnings)
        }
        Command::Generate { spec, out_dir } => {
            cmd_generate(&spec, &out_dir)?;
            Ok(Vec::new())
        }
        Command::Sweep {
            dataset,
            m_list,
            alpha_list,
            opts,
            out_dir,
        } => {
            let cfg = opts.resolve(env_seed)?;
            cmd_sweep(&dataset, &cfg, &m_list, &alpha_list, &out_dir)?;
            Ok(Vec::new())
        }
        Command::Rerun { manifest, out_dir } => {
            let report = cmd_rerun(&manifest, &out_dir)?;
            Ok(report.warnings)
        }
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| io_input(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_input(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_input(path, e))?;
    tmp.persist(path).map_err(|e| io_input(path, e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

// ---- parse ----

#[derive(Debug, Clone, PartialEq)]
pub struct ParseSummary {
    pub files: Vec<PathBuf>,
    pub dataset: Vec<SetplayFeatures>,
    pub warnings: Vec<String>,
}

/// Files named directly plus the `.sp` files of named directories, sorted
/// per directory.
pub fn collect_plan_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| io_input(path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "sp"))
                .collect();
            found.sort();
            files.extend(found);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            return Err(CliError::Input(format!(
                "{}: no such file or directory",
                path.display()
            )));
        }
    }
    Ok(files)
}

/// Parse one plan file into its feature row; errors carry the file name
/// and, where known, line and column.
pub fn parse_plan_file(path: &Path) -> Result<SetplayFeatures, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let record = model::parse_setplay(&text).map_err(|e| match e.span() {
        Some(s) => format!("{}:{}:{}: {e}", path.display(), s.line, s.column),
        None => format!("{}: {e}", path.display()),
    })?;
    Ok(model::extract_features(&record))
}

pub fn cmd_parse(paths: &[PathBuf], out: &Path) -> Result<ParseSummary, CliError> {
    let files = collect_plan_files(paths)?;
    let mut dataset = Vec::with_capacity(files.len());
    let mut errors = Vec::new();
    for file in &files {
        match parse_plan_file(file) {
            Ok(row) => dataset.push(row),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Input(errors.join("\n")));
    }
    let mut warnings = Vec::new();
    if files.is_empty() {
        warnings.push("no plan files found; writing an empty dataset".to_string());
    }
    write_atomic(out, &dataset_json(&dataset)?)?;
    Ok(ParseSummary {
        files,
        dataset,
        warnings,
    })
}

pub fn dataset_json(dataset: &[SetplayFeatures]) -> Result<Vec<u8>, CliError> {
    to_json(&dataset)
}

pub fn load_dataset(path: &Path) -> Result<Vec<SetplayFeatures>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_input(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_input(path, e))
}

// ---- cluster ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base: u64,
    pub from_env: bool,
    /// Seeds of the restarts that produced each curve point.
    pub stage1_best: Vec<(usize, u64)>,
    pub stage2: Vec<(usize, Option<u64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub input_paths: Vec<PathBuf>,
    pub config: PipelineConfig,
    pub seeds: SeedRecord,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn curve_csv(rows: &[CurveRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(["c", "fs_best", "fs_mean", "fs_std"])
        .map_err(internal)?;
    for r in rows {
        w.write_record([
            r.c.to_string(),
            format!("{:.9}", r.fs_best),
            format!("{:.9}", r.fs_mean),
            format!("{:.9}", r.fs_std),
        ])
        .map_err(internal)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// One line per cluster: the cluster index, then one membership per object.
pub fn partition_csv(p: &PartitionMatrix) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    let header =
        std::iter::once("cluster".to_string()).chain((0..p.objects()).map(|j| j.to_string()));
    w.write_record(header).map_err(internal)?;
    for i in 0..p.clusters() {
        let row = std::iter::once(i.to_string()).chain(p.row(i).iter().map(|v| format!("{v:.9}")));
        w.write_record(row).map_err(internal)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// Read a partition CSV, rescaling columns whose sums drift by less than
/// `RENORMALIZE_TOLERANCE` (9 decimal places rarely sum to exactly one).
pub fn load_partition_csv(path: &Path) -> Result<PartitionMatrix, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_input(path, e))?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| io_input(path, e))?;
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_input(path, e))?;
        rows.push(row);
    }
    PartitionMatrix::from_rows_renormalized(&rows, RENORMALIZE_TOLERANCE)
        .map_err(|e| io_input(path, e))
}

pub const REPORT_FILE: &str = "report.json";
pub const CURVE_FILE: &str = "fs_curve.csv";
pub const PARTITION_FILE: &str = "partition_stage1.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn cmd_cluster(
    dataset_path: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<ClusterReport, CliError> {
    let from_env = std::env::var(SEED_ENV).is_ok();
    cluster_with(dataset_path, cfg, out_dir, from_env)
}

fn cluster_with(
    dataset_path: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
    from_env: bool,
) -> Result<ClusterReport, CliError> {
    let started_unix = now_unix();
    cfg.validate()?;
    let dataset = load_dataset(dataset_path)?;
    let output = pipeline::run(&dataset, cfg)?;
    output
        .stage1
        .partition
        .check()
        .map_err(|e| CliError::Internal(format!("stage-one partition: {e}")))?;
    let report = pipeline::report(&dataset, &output, cfg);

    write_atomic(&out_dir.join(REPORT_FILE), &to_json(&report)?)?;
    write_atomic(
        &out_dir.join(CURVE_FILE),
        &curve_csv(&report.stage1.fs_curve)?,
    )?;
    write_atomic(
        &out_dir.join(PARTITION_FILE),
        &partition_csv(&output.stage1.partition)?,
    )?;

    let manifest = RunManifest {
        tool_version: report.tool_version.clone(),
        command: "cluster".to_string(),
        input_paths: vec![dataset_path.to_path_buf()],
        config: *cfg,
        seeds: SeedRecord {
            base: cfg.seed,
            from_env,
            stage1_best: report
                .stage1
                .fs_curve
                .iter()
                .map(|r| (r.c, r.best_seed))
                .collect(),
            stage2: report.stage2.iter().map(|c| (c.id, c.seed)).collect(),
        },
        outputs: [REPORT_FILE, CURVE_FILE, PARTITION_FILE]
            .map(String::from)
            .to_vec(),
        started_unix,
        finished_unix: now_unix(),
    };
    write_atomic(&out_dir.join(MANIFEST_FILE), &to_json(&manifest)?)?;
    Ok(report)
}

pub fn cmd_rerun(manifest_path: &Path, out_dir: &Path) -> Result<ClusterReport, CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_input(manifest_path, e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| io_input(manifest_path, e))?;
    let [dataset] = manifest.input_paths.as_slice() else {
        return Err(CliError::Input(format!(
            "{}: expected exactly one input path",
            manifest_path.display()
        )));
    };
    cluster_with(dataset, &manifest.config, out_dir, manifest.seeds.from_env)
}

// ---- generate ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub families: Vec<FamilySpec>,
}

pub const SPEC_ECHO_FILE: &str = "spec.json";

pub fn cmd_generate(spec_path: &Path, out_dir: &Path) -> Result<Vec<GeneratedPlan>, CliError> {
    let text = fs::read_to_string(spec_path).map_err(|e| io_input(spec_path, e))?;
    let spec: CorpusSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let plans =
        datagen::generate_corpus(&spec.families).map_err(|e| CliError::Config(e.to_string()))?;
    for plan in &plans {
        write_atomic(
            &out_dir.join(format!("{}.sp", plan.name)),
            plan.text.as_bytes(),
        )?;
    }
    write_atomic(&out_dir.join(SPEC_ECHO_FILE), &to_json(&spec)?)?;
    Ok(plans)
}

// ---- sweep ----

pub fn sweep_file_name(m: f64, alpha: f64) -> String {
    format!("fs_curve_m{m}_alpha{alpha}.csv")
}

/// Stage one for every combination; returns the files written.
pub fn cmd_sweep(
    dataset_path: &Path,
    base: &PipelineConfig,
    m_list: &[f64],
    alpha_list: &[f64],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    if m_list.is_empty() || alpha_list.is_empty() {
        return Err(CliError::Config("sweep grid is empty".to_string()));
    }
    let grid: Vec<PipelineConfig> = m_list
        .iter()
        .flat_map(|&m| {
            alpha_list
                .iter()
                .map(move |&alpha| PipelineConfig { m, alpha, ..*base })
        })
        .collect();
    for cfg in &grid {
        cfg.validate()?;
    }
    let dataset = load_dataset(dataset_path)?;
    let mut written = Vec::new();
    for cfg in &grid {
        let s1 = pipeline::stage1(&dataset, cfg)?;
        let path = out_dir.join(sweep_file_name(cfg.m, cfg.alpha));
        write_atomic(&path, &curve_csv(&pipeline::curve(&s1))?)?;
        written.push(path);
    }
    Ok(written)
}
