//! Two-stage grouping of setplays.
//!
//! Stage one clusters level-1 rows for every cluster count in a range,
//! keeps the restart with the best Fuzzy Silhouette per count, picks the
//! count with the best score and turns its partition into overlapping
//! member sets. Stage two re-clusters each member set on full level-2
//! features and decides whether the set should be split.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvi::{self, SilhouetteConfig};
use crate::fcm::{self, FcmConfig, FcmError};
use crate::metrics::{self, DistanceConfig, Level1Space, Level2Space};
use crate::model::SetplayFeatures;
use crate::partition::{DistanceMatrix, PartitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub c1_min: usize,
    pub c1_max: usize,
    pub c2: usize,
    pub m: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub restarts: usize,
    pub seed: u64,
    pub split_fs_threshold: f64,
    pub max_iters: usize,
    pub epsilon: f64,
    pub distance: DistanceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            c1_min: 2,
            c1_max: 8,
            c2: 2,
            m: 2.0,
            alpha: 1.0,
            gamma: 0.5,
            restarts: 10,
            seed: 0,
            split_fs_threshold: 0.5,
            max_iters: 300,
            epsilon: 1e-6,
            distance: DistanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("smallest cluster count {c1_min} exceeds the {objects} instances")]
    RangeTooLarge { c1_min: usize, objects: usize },
    #[error(transparent)]
    Fcm(#[from] FcmError),
}

fn config_error(field: &'static str, reason: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        field,
        reason: reason.into(),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.c1_min < 2 {
            return Err(config_error("c1_min", "must be at least 2"));
        }
        if self.c1_max < self.c1_min {
            return Err(config_error("c1_max", "must be >= c1_min"));
        }
        if self.c2 < 2 {
            return Err(config_error("c2", "must be at least 2"));
        }
        if !(self.m.is_finite() && self.m > 1.0) {
            return Err(config_error(
                "m",
                format!("fuzzifier must be > 1, got {}", self.m),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(config_error("alpha", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_error("gamma", "must lie in [0, 1]"));
        }
        if self.restarts < 1 {
            return Err(config_error("restarts", "must be at least 1"));
        }
        if !self.split_fs_threshold.is_finite() {
            return Err(config_error("split_fs_threshold", "must be finite"));
        }
        if self.max_iters < 1 {
            return Err(config_error("max_iters", "must be at least 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(config_error("epsilon", "must be positive"));
        }
        self.distance
            .validate()
            .map_err(|reason| config_error("distance", reason))
    }

    fn fcm(&self, clusters: usize, seed: u64) -> FcmConfig {
        FcmConfig {
            clusters,
            fuzzifier: self.m,
            max_iters: self.max_iters,
            epsilon: self.epsilon,
            seed,
        }
    }

    fn silhouette(&self) -> SilhouetteConfig {
        SilhouetteConfig { alpha: self.alpha }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one independent task, derived from the run seed and the task's
/// coordinates (stage, cluster count or cluster id, restart).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub seed: u64,
    pub fs: f64,
    pub all_weights_zero: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Scores of every restart for one cluster count.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub clusters: usize,
    pub restarts: Vec<RestartOutcome>,
    /// Index into `restarts` of the best run.
    pub best: usize,
    pub partition: PartitionMatrix,
}

impl SweepEntry {
    pub fn best_fs(&self) -> f64 {
        self.restarts[self.best].fs
    }

    pub fn mean_fs(&self) -> f64 {
        self.restarts.iter().map(|r| r.fs).sum::<f64>() / self.restarts.len() as f64
    }

    /// Population standard deviation over restarts.
    pub fn std_fs(&self) -> f64 {
        let mean = self.mean_fs();
        let var = self
            .restarts
            .iter()
            .map(|r| (r.fs - mean).powi(2))
            .sum::<f64>()
            / self.restarts.len() as f64;
        var.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub index: usize,
    pub membership: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub members: Vec<Member>,
}

impl Cluster {
    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Result {
    pub sweep: Vec<SweepEntry>,
    /// Cluster count with the highest best-of-restarts score (smallest on
    /// ties); 1 when the dataset has a single instance.
    pub best_c: usize,
    pub clusters: Vec<Cluster>,
    pub partition: PartitionMatrix,
    pub warnings: Vec<String>,
}

impl Stage1Result {
    pub fn fs_by_c(&self) -> BTreeMap<usize, f64> {
        self.sweep
            .iter()
            .map(|e| (e.clusters, e.best_fs()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Split,
    Keep,
    Singleton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedCluster {
    pub id: usize,
    pub members: Vec<Member>,
    pub fs: f64,
    pub verdict: Verdict,
    /// Cluster count used at stage two, after the square-root cap.
    pub c2: Option<usize>,
    pub seed: Option<u64>,
    pub all_weights_zero: bool,
    pub subclusters: Vec<Cluster>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset {
    pub stage: Stage,
    pub clusters: Vec<GroupedCluster>,
}

/// Instance `j` belongs to cluster `i` when `mu[i][j] > max_k mu[i][k] - gamma`.
/// The instance attaining the row maximum (lowest index on ties) always
/// belongs, so `gamma = 0` yields singletons. An instance may belong to
/// several clusters.
pub fn assign_members(partition: &PartitionMatrix, gamma: f64) -> Vec<Vec<usize>> {
    (0..partition.clusters())
        .map(|i| {
            let row = partition.row(i);
            let mut top = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[top] {
                    top = j;
                }
            }
            let threshold = row[top] - gamma;
            row.iter()
                .enumerate()
                .filter(|&(j, &v)| j == top || v > threshold)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

fn best_restart(outcomes: &[RestartOutcome]) -> usize {
    let mut best = 0;
    for (r, o) in outcomes.iter().enumerate() {
        if o.fs > outcomes[best].fs {
            best = r;
        }
    }
    best
}

struct Scored {
    outcome: RestartOutcome,
    partition: PartitionMatrix,
}

fn score_restarts(
    space: &impl fcm::HybridSpace,
    pairwise: &DistanceMatrix,
    cfg: &PipelineConfig,
    clusters: usize,
    seeds: &[u64],
) -> Result<Vec<Scored>, FcmError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let run = fcm::run_fcm(space, &cfg.fcm(clusters, seed))?;
            let fs = cvi::fuzzy_silhouette(&run.partition, pairwise, &cfg.silhouette());
            Ok(Scored {
                outcome: RestartOutcome {
                    seed,
                    fs: fs.value,
                    all_weights_zero: fs.all_weights_zero,
                    converged: run.converged,
                    iterations: run.iterations,
                },
                partition: run.partition,
            })
        })
        .collect()
}

pub fn stage1(
    dataset: &[SetplayFeatures],
    cfg: &PipelineConfig,
) -> Result<Stage1Result, PipelineError> {
    cfg.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Err(PipelineError::EmptyDataset);
    }
    let mut warnings = Vec::new();
    if n == 1 {
        warnings.push("single instance: stage one produces one singleton cluster".to_string());
        return Ok(Stage1Result {
            sweep: Vec::new(),
            best_c: 1,
            clusters: vec![Cluster {
                id: 0,
                members: vec![Member {
                    index: 0,
                    membership: 1.0,
                }],
            }],
            partition: PartitionMatrix::uniform(1, 1),
            warnings,
        });
    }
    if cfg.c1_min > n {
        return Err(PipelineError::RangeTooLarge {
            c1_min: cfg.c1_min,
            objects: n,
        });
    }
    let c_max = cfg.c1_max.min(n);
    if c_max < cfg.c1_max {
        warnings.push(format!(
            "cluster range {}..={} truncated to {}..={} for {n} instances",
            cfg.c1_min, cfg.c1_max, cfg.c1_min, c_max
        ));
    }

    let space = Level1Space::new(dataset);
    let pairwise = metrics::pairwise(&space);

    let sweep = (cfg.c1_min..=c_max)
        .into_par_iter()
        .map(|c| {
            let seeds: Vec<u64> = (0..cfg.restarts as u64)
                .map(|r| derive_seed(cfg.seed, &[1, c as u64, r]))
                .collect();
            let mut scored = score_restarts(&space, &pairwise, cfg, c, &seeds)?;
            let outcomes: Vec<RestartOutcome> = scored.iter().map(|s| s.outcome.clone()).collect();
            let best = best_restart(&outcomes);
            Ok(SweepEntry {
                clusters: c,
                restarts: outcomes,
                best,
                partition: scored.swap_remove(best).partition,
            })
        })
        .collect::<Result<Vec<_>, FcmError>>()?;

    let mut chosen = 0;
    for (k, e) in sweep.iter().enumerate() {
        if e.best_fs() > sweep[chosen].best_fs() {
            chosen = k;
        }
    }
    let best_c = sweep[chosen].clusters;
    let partition = sweep[chosen].partition.clone();
    if sweep.iter().all(|e| e.restarts[e.best].all_weights_zero) {
        warnings
            .push("every partition is fully ambiguous (all silhouette weights zero)".to_string());
    }

    let mut sets = assign_members(&partition, cfg.gamma);
    // with gamma > 0, instances that clear no threshold join their
    // highest-membership cluster; gamma = 0 keeps the pure singletons
    if cfg.gamma > 0.0 {
        let crisp = cvi::crisp_assignment(&partition);
        for j in 0..n {
            if !sets.iter().any(|s| s.contains(&j)) {
                sets[crisp[j]].push(j);
                sets[crisp[j]].sort_unstable();
            }
        }
    }
    let clusters = sets
        .into_iter()
        .enumerate()
        .filter(|(i, s)| {
            if s.is_empty() {
                warnings.push(format!("cluster {i} has no members and was dropped"));
            }
            !s.is_empty()
        })
        .map(|(i, s)| Cluster {
            id: i,
            members: s
                .into_iter()
                .map(|j| Member {
                    index: j,
                    membership: partition.get(i, j),
                })
                .collect(),
        })
        .collect();

    Ok(Stage1Result {
        sweep,
        best_c,
        clusters,
        partition,
        warnings,
    })
}

/// Stage-two cluster count for a member set of `size` instances.
pub fn capped_c2(c2: usize, size: usize) -> usize {
    let cap = (size as f64).sqrt().ceil() as usize;
    c2.min(cap).max(2)
}

fn stage2_cluster(
    cluster: &Cluster,
    dataset: &[SetplayFeatures],
    cfg: &PipelineConfig,
) -> Result<GroupedCluster, FcmError> {
    let indices = cluster.indices();
    if indices.len() == 1 {
        return Ok(GroupedCluster {
            id: cluster.id,
            members: cluster.members.clone(),
            fs: 1.0,
            verdict: Verdict::Singleton,
            c2: None,
            seed: None,
            all_weights_zero: false,
            subclusters: Vec::new(),
        });
    }
    let subset: Vec<SetplayFeatures> = indices.iter().map(|&j| dataset[j].clone()).collect();
    let space = Level2Space::new(&subset, &cfg.distance);
    let pairwise = metrics::pairwise(&space);
    let c2 = capped_c2(cfg.c2, subset.len());
    let seeds: Vec<u64> = (0..cfg.restarts as u64)
        .map(|r| derive_seed(cfg.seed, &[2, cluster.id as u64, r]))
        .collect();
    let mut scored = score_restarts(&space, &pairwise, cfg, c2, &seeds)?;
    let outcomes: Vec<RestartOutcome> = scored.iter().map(|s| s.outcome.clone()).collect();
    let best = best_restart(&outcomes);
    let outcome = outcomes[best].clone();
    let partition = scored.swap_remove(best).partition;

    let crisp = cvi::crisp_assignment(&partition);
    let subclusters = (0..c2)
        .map(|k| Cluster {
            id: k,
            members: crisp
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == k)
                .map(|(local, _)| Member {
                    index: indices[local],
                    membership: partition.get(k, local),
                })
                .collect(),
        })
        .filter(|c| !c.members.is_empty())
        .collect();

    Ok(GroupedCluster {
        id: cluster.id,
        members: cluster.members.clone(),
        fs: outcome.fs,
        verdict: if outcome.fs >= cfg.split_fs_threshold {
            Verdict::Split
        } else {
            Verdict::Keep
        },
        c2: Some(c2),
        seed: Some(outcome.seed),
        all_weights_zero: outcome.all_weights_zero,
        subclusters,
    })
}

pub fn stage2(
    stage1: &Stage1Result,
    dataset: &[SetplayFeatures],
    cfg: &PipelineConfig,
) -> Result<GroupedDataset, PipelineError> {
    cfg.validate()?;
    let clusters = stage1
        .clusters
        .par_iter()
        .map(|c| stage2_cluster(c, dataset, cfg))
        .collect::<Result<Vec<_>, FcmError>>()?;
    Ok(GroupedDataset {
        stage: Stage::Two,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub stage1: Stage1Result,
    pub stage2: GroupedDataset,
}

pub fn run(
    dataset: &[SetplayFeatures],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let stage1 = stage1(dataset, cfg)?;
    let stage2 = stage2(&stage1, dataset, cfg)?;
    Ok(PipelineOutput { stage1, stage2 })
}

/// Round to `digits` significant decimal digits.
pub fn round_sig(value: f64, digits: usize) -> f64 {
    if !value.is_finite() || value == 0.0 {
        return value;
    }
    format!("{:.*e}", digits.saturating_sub(1), value)
        .parse()
        .unwrap_or(value)
}

fn r9(v: f64) -> f64 {
    round_sig(v, 9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub c: usize,
    pub fs_best: f64,
    pub fs_mean: f64,
    pub fs_std: f64,
    pub best_seed: u64,
    pub all_weights_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMember {
    pub index: usize,
    pub name: String,
    pub membership: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCluster {
    pub id: usize,
    pub members: Vec<ReportMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStage2Cluster {
    pub id: usize,
    pub size: usize,
    pub fs: f64,
    pub verdict: Verdict,
    pub c2: Option<usize>,
    pub seed: Option<u64>,
    pub all_weights_zero: bool,
    pub subclusters: Vec<ReportCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStage1 {
    pub fs_curve: Vec<CurveRow>,
    pub best_c: usize,
    pub clusters: Vec<ReportCluster>,
    /// Best-C partition, one row per cluster.
    pub memberships: Vec<Vec<f64>>,
}

/// Serializable summary of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub instances: Vec<String>,
    pub stage1: ReportStage1,
    pub stage2: Vec<ReportStage2Cluster>,
    pub warnings: Vec<String>,
}

pub fn curve(stage1: &Stage1Result) -> Vec<CurveRow> {
    stage1
        .sweep
        .iter()
        .map(|e| CurveRow {
            c: e.clusters,
            fs_best: r9(e.best_fs()),
            fs_mean: r9(e.mean_fs()),
            fs_std: r9(e.std_fs()),
            best_seed: e.restarts[e.best].seed,
            all_weights_zero: e.restarts[e.best].all_weights_zero,
        })
        .collect()
}

pub fn report(
    dataset: &[SetplayFeatures],
    output: &PipelineOutput,
    cfg: &PipelineConfig,
) -> ClusterReport {
    let name = |j: usize| dataset.get(j).map(|f| f.name.clone()).unwrap_or_default();
    let cluster = |c: &Cluster| ReportCluster {
        id: c.id,
        members: c
            .members
            .iter()
            .map(|m| ReportMember {
                index: m.index,
                name: name(m.index),
                membership: r9(m.membership),
            })
            .collect(),
    };
    let s1 = &output.stage1;
    ClusterReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: *cfg,
        instances: (0..dataset.len()).map(name).collect(),
        stage1: ReportStage1 {
            fs_curve: curve(s1),
            best_c: s1.best_c,
            clusters: s1.clusters.iter().map(cluster).collect(),
            memberships: s1
                .partition
                .rows()
                .into_iter()
                .map(|r| r.into_iter().map(r9).collect())
                .collect(),
        },
        stage2: output
            .stage2
            .clusters
            .iter()
            .map(|g| ReportStage2Cluster {
                id: g.id,
                size: g.members.len(),
                fs: r9(g.fs),
                verdict: g.verdict,
                c2: g.c2,
                seed: g.seed,
                all_weights_zero: g.all_weights_zero,
                subclusters: g.subclusters.iter().map(cluster).collect(),
            })
            .collect(),
        warnings: s1.warnings.clone(),
    }
}
