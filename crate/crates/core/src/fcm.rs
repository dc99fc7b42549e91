//! Fuzzy c-means over an arbitrary symmetric dissimilarity.
//!
//! Instances are reached through a [`HybridSpace`], which splits each
//! instance into a scalar part (averaged into centroids with membership
//! weights) and a non-scalar part (copied into a centroid from the instance
//! with the highest membership in that cluster).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::PartitionMatrix;

/// Data view used by the clustering engine.
pub trait HybridSpace: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scalar features of an instance.
    fn scalars(&self, index: usize) -> &[f64];

    /// Dissimilarity between instance `index` and a centroid whose scalar
    /// features are `scalars` and whose non-scalar features are those of
    /// instance `prototype`.
    fn centroid_distance(&self, index: usize, scalars: &[f64], prototype: usize) -> f64;

    fn distance(&self, a: usize, b: usize) -> f64 {
        self.centroid_distance(a, self.scalars(b), b)
    }
}

/// Plain Euclidean vectors; no non-scalar part.
#[derive(Debug, Clone)]
pub struct EuclideanSpace {
    points: Vec<Vec<f64>>,
}

impl EuclideanSpace {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        EuclideanSpace { points }
    }

    pub fn from_values(values: &[f64]) -> Self {
        EuclideanSpace::new(values.iter().map(|&v| vec![v]).collect())
    }
}

impl HybridSpace for EuclideanSpace {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn scalars(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    fn centroid_distance(&self, index: usize, scalars: &[f64], _prototype: usize) -> f64 {
        self.points[index]
            .iter()
            .zip(scalars)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub clusters: usize,
    pub fuzzifier: f64,
    pub max_iters: usize,
    /// Stop once no membership moves by this much in one iteration.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        FcmConfig {
            clusters: 2,
            fuzzifier: 2.0,
            max_iters: 300,
            epsilon: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FcmError {
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("{clusters} clusters requested for {objects} instances")]
    TooFewInstances { clusters: usize, objects: usize },
}

impl FcmConfig {
    pub fn validate(&self, objects: usize) -> Result<(), FcmError> {
        if self.clusters < 2 {
            return Err(FcmError::InvalidConfig {
                field: "clusters",
                reason: "must be at least 2".into(),
            });
        }
        if !(self.fuzzifier.is_finite() && self.fuzzifier > 1.0) {
            return Err(FcmError::InvalidConfig {
                field: "m",
                reason: format!("fuzzifier must be > 1, got {}", self.fuzzifier),
            });
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(FcmError::InvalidConfig {
                field: "epsilon",
                reason: "must be positive".into(),
            });
        }
        if self.clusters > objects {
            return Err(FcmError::TooFewInstances {
                clusters: self.clusters,
                objects,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridCentroid {
    pub scalar_part: Vec<f64>,
    /// Instance whose non-scalar features the centroid carries.
    pub prototype: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    pub partition: PartitionMatrix,
    pub centroids: Vec<HybridCentroid>,
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Every instance was identical; the partition is uniform.
    pub degenerate: bool,
}

/// Memberships of one object given its distances to each centroid.
///
/// When some distances are zero, membership is shared equally among those
/// centroids and the others get nothing.
pub fn update_memberships(distances: &[f64], fuzzifier: f64) -> Vec<f64> {
    let zeros = distances.iter().filter(|&&d| d == 0.0).count();
    if zeros > 0 {
        let share = 1.0 / zeros as f64;
        return distances
            .iter()
            .map(|&d| if d == 0.0 { share } else { 0.0 })
            .collect();
    }
    let exponent = 2.0 / (fuzzifier - 1.0);
    distances
        .iter()
        .map(|&di| {
            let denom: f64 = distances.iter().map(|&dk| (di / dk).powf(exponent)).sum();
            1.0 / denom
        })
        .collect()
}

/// Weighted mean of the scalar features (weights `membership^m`) plus the
/// non-scalar part of the highest-membership instance, lowest index on ties.
pub fn compute_centroid(
    space: &impl HybridSpace,
    memberships: &[f64],
    fuzzifier: f64,
) -> HybridCentroid {
    let mut prototype = 0;
    for (j, &mu) in memberships.iter().enumerate() {
        if mu > memberships[prototype] {
            prototype = j;
        }
    }
    let dims = space.scalars(0).len();
    let mut numer = vec![0.0; dims];
    let mut denom = 0.0;
    for (j, &mu) in memberships.iter().enumerate() {
        let w = mu.powf(fuzzifier);
        denom += w;
        for (acc, x) in numer.iter_mut().zip(space.scalars(j)) {
            *acc += w * x;
        }
    }
    let scalar_part = if denom > 0.0 {
        numer.into_iter().map(|v| v / denom).collect()
    } else {
        space.scalars(prototype).to_vec()
    };
    HybridCentroid {
        scalar_part,
        prototype,
    }
}

fn distance_table(space: &impl HybridSpace, centroids: &[HybridCentroid]) -> Vec<Vec<f64>> {
    // indexed [object][cluster]
    (0..space.len())
        .map(|j| {
            centroids
                .iter()
                .map(|c| space.centroid_distance(j, &c.scalar_part, c.prototype))
                .collect()
        })
        .collect()
}

/// Sum over clusters and objects of `membership^m * distance^2`.
pub fn objective(
    space: &impl HybridSpace,
    centroids: &[HybridCentroid],
    partition: &PartitionMatrix,
    fuzzifier: f64,
) -> f64 {
    let mut total = 0.0;
    for (i, c) in centroids.iter().enumerate() {
        for j in 0..space.len() {
            let d = space.centroid_distance(j, &c.scalar_part, c.prototype);
            total += partition.get(i, j).powf(fuzzifier) * d * d;
        }
    }
    total
}

fn random_partition(clusters: usize, objects: usize, seed: u64) -> PartitionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..objects)
        .map(|_| {
            // (0, 1] so no column is all zeros
            let raw: Vec<f64> = (0..clusters).map(|_| 1.0 - rng.gen::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    PartitionMatrix::from_columns(clusters, &columns)
}

fn centroids_of(
    space: &impl HybridSpace,
    partition: &PartitionMatrix,
    fuzzifier: f64,
) -> Vec<HybridCentroid> {
    (0..partition.clusters())
        .map(|i| compute_centroid(space, partition.row(i), fuzzifier))
        .collect()
}

pub fn run_fcm(space: &impl HybridSpace, cfg: &FcmConfig) -> Result<FcmResult, FcmError> {
    run_fcm_observed(space, cfg, |_, _| {})
}

/// Like [`run_fcm`], calling `observe(iteration, partition)` on the initial
/// partition and after every membership update.
pub fn run_fcm_observed(
    space: &impl HybridSpace,
    cfg: &FcmConfig,
    mut observe: impl FnMut(usize, &PartitionMatrix),
) -> Result<FcmResult, FcmError> {
    let n = space.len();
    cfg.validate(n)?;
    let m = cfg.fuzzifier;

    if (1..n).all(|j| space.distance(0, j) == 0.0) {
        let partition = PartitionMatrix::uniform(cfg.clusters, n);
        observe(0, &partition);
        let centroids = centroids_of(space, &partition, m);
        let objective_history = vec![objective(space, &centroids, &partition, m)];
        return Ok(FcmResult {
            partition,
            centroids,
            objective_history,
            iterations: 0,
            converged: true,
            degenerate: true,
        });
    }

    let mut partition = random_partition(cfg.clusters, n, cfg.seed);
    observe(0, &partition);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let centroids = centroids_of(space, &partition, m);
        history.push(objective(space, &centroids, &partition, m));
        let columns: Vec<Vec<f64>> = distance_table(space, &centroids)
            .iter()
            .map(|d| update_memberships(d, m))
            .collect();
        let next = PartitionMatrix::from_columns(cfg.clusters, &columns);
        iterations += 1;
        observe(iterations, &next);
        let delta = next.max_abs_diff(&partition);
        partition = next;
        if delta < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let centroids = centroids_of(space, &partition, m);
    history.push(objective(space, &centroids, &partition, m));
    Ok(FcmResult {
        partition,
        centroids,
        objective_history: history,
        iterations,
        converged,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn membership_update_examples() {
        assert_eq!(update_memberships(&[1.0, 1.0], 2.0), vec![0.5, 0.5]);
        assert_eq!(update_memberships(&[0.0, 5.0], 2.0), vec![1.0, 0.0]);
        assert_eq!(update_memberships(&[0.0, 5.0], 1.3), vec![1.0, 0.0]);
        assert!(close(
            &update_memberships(&[1.0, 2.0], 2.0),
            &[0.8, 0.2],
            1e-15
        ));
        assert_eq!(
            update_memberships(&[0.0, 3.0, 0.0], 2.0),
            vec![0.5, 0.0, 0.5]
        );
    }

    #[test]
    fn centroid_examples() {
        let space = EuclideanSpace::from_values(&[2.0, 4.0]);
        let c = compute_centroid(&space, &[0.5, 0.5], 2.0);
        assert_eq!(c.scalar_part, vec![3.0]);
        assert_eq!(c.prototype, 0);
        assert_eq!(compute_centroid(&space, &[0.9, 0.1], 2.0).prototype, 0);
        assert_eq!(compute_centroid(&space, &[0.1, 0.9], 2.0).prototype, 1);
    }

    #[test]
    fn objective_examples() {
        let space = EuclideanSpace::from_values(&[1.0, -1.0, 1.0, -1.0]);
        let centroid = HybridCentroid {
            scalar_part: vec![0.0],
            prototype: 0,
        };
        let single = PartitionMatrix::from_rows(&[vec![1.0; 4]]).unwrap();
        assert_eq!(objective(&space, std::slice::from_ref(&centroid), &single, 2.0), 4.0);

        let doubled = EuclideanSpace::from_values(&[2.0, -2.0, 2.0, -2.0]);
        assert_eq!(objective(&doubled, &[centroid], &single, 2.0), 16.0);

        let pair = EuclideanSpace::from_values(&[0.0, 0.0, 5.0]);
        let crisp =
            PartitionMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let cs = centroids_of(&pair, &crisp, 2.0);
        assert_eq!(objective(&pair, &cs, &crisp, 2.0), 0.0);
    }

    #[test]
    fn separates_two_groups() {
        let space = EuclideanSpace::from_values(&[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]);
        let res = run_fcm(&space, &FcmConfig::default()).unwrap();
        assert!(res.converged);
        let first = if res.partition.get(0, 0) > 0.5 { 0 } else { 1 };
        for j in 0..6 {
            let expect_first = j < 3;
            assert_eq!(
                res.partition.get(first, j) > 0.9,
                expect_first,
                "object {j}"
            );
        }
    }

    #[test]
    fn identical_instances_give_uniform_partition() {
        let space = EuclideanSpace::from_values(&[3.0; 5]);
        for c in 2..=4 {
            let res = run_fcm(
                &space,
                &FcmConfig {
                    clusters: c,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(res.degenerate && res.converged);
            assert_eq!(res.partition, PartitionMatrix::uniform(c, 5));
        }
    }

    #[test]
    fn one_cluster_per_instance() {
        let values = [0.0, 4.0, 9.0, 15.0];
        let space = EuclideanSpace::from_values(&values);
        for seed in 0..10 {
            let cfg = FcmConfig {
                clusters: 4,
                seed,
                max_iters: 1000,
                ..Default::default()
            };
            let res = run_fcm(&space, &cfg).unwrap();
            for j in 0..4 {
                let best = res.partition.column(j).into_iter().fold(0.0, f64::max);
                assert!(best >= 1.0 - 1e-6, "seed {seed} object {j}: {best}");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let space = EuclideanSpace::from_values(&[0.0, 1.0, 2.0]);
        let bad_m = FcmConfig {
            fuzzifier: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            run_fcm(&space, &bad_m),
            Err(FcmError::InvalidConfig { field: "m", .. })
        ));
        let too_many = FcmConfig {
            clusters: 4,
            ..Default::default()
        };
        assert!(matches!(
            run_fcm(&space, &too_many),
            Err(FcmError::TooFewInstances { .. })
        ));
        let one = FcmConfig {
            clusters: 1,
            ..Default::default()
        };
        assert!(run_fcm(&space, &one).is_err());
    }

    #[test]
    fn same_seed_same_result() {
        let space = EuclideanSpace::from_values(&[0.0, 1.0, 5.0, 6.0, 11.0, 12.5]);
        let cfg = FcmConfig {
            clusters: 3,
            seed: 42,
            ..Default::default()
        };
        assert_eq!(
            run_fcm(&space, &cfg).unwrap(),
            run_fcm(&space, &cfg).unwrap()
        );
    }
}
