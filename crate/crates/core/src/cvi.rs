//! Crisp silhouette and Fuzzy Silhouette over a fuzzy partition.

use serde::{Deserialize, Serialize};

use crate::partition::{DistanceMatrix, PartitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteConfig {
    /// Exponent on the gap between an object's two largest memberships.
    pub alpha: f64,
}

impl Default for SilhouetteConfig {
    fn default() -> Self {
        SilhouetteConfig { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzySilhouette {
    pub value: f64,
    /// Every column was perfectly ambiguous; `value` is 0 by convention.
    pub all_weights_zero: bool,
}

/// Row of the largest membership per column, lowest row on ties.
pub fn crisp_assignment(partition: &PartitionMatrix) -> Vec<usize> {
    (0..partition.objects())
        .map(|j| {
            let mut best = 0;
            for i in 1..partition.clusters() {
                if partition.get(i, j) > partition.get(best, j) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Silhouette of object `j` under a crisp assignment. Objects alone in
/// their cluster, or with no other non-empty cluster to compare against,
/// score 0.
pub fn silhouette_object(j: usize, assignment: &[usize], pairwise: &DistanceMatrix) -> f64 {
    let clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; clusters];
    let mut counts = vec![0usize; clusters];
    for (k, &cluster) in assignment.iter().enumerate() {
        if k != j {
            sums[cluster] += pairwise.get(j, k);
            counts[cluster] += 1;
        }
    }
    let own = assignment[j];
    if counts[own] == 0 {
        return 0.0;
    }
    let a = sums[own] / counts[own] as f64;
    let b = (0..clusters)
        .filter(|&q| q != own && counts[q] > 0)
        .map(|q| sums[q] / counts[q] as f64)
        .fold(f64::INFINITY, f64::min);
    if !b.is_finite() {
        return 0.0;
    }
    let scale = a.max(b);
    if scale == 0.0 {
        0.0
    } else {
        (b - a) / scale
    }
}

pub fn silhouettes(assignment: &[usize], pairwise: &DistanceMatrix) -> Vec<f64> {
    (0..assignment.len())
        .map(|j| silhouette_object(j, assignment, pairwise))
        .collect()
}

/// Mean crisp silhouette of the partition's crisp assignment.
pub fn crisp_silhouette(partition: &PartitionMatrix, pairwise: &DistanceMatrix) -> f64 {
    let s = silhouettes(&crisp_assignment(partition), pairwise);
    s.iter().sum::<f64>() / s.len() as f64
}

/// Gap between the two largest entries of each column.
fn membership_gaps(partition: &PartitionMatrix) -> Vec<f64> {
    (0..partition.objects())
        .map(|j| {
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for v in partition.column(j) {
                if v > first {
                    second = first;
                    first = v;
                } else if v > second {
                    second = v;
                }
            }
            first - second
        })
        .collect()
}

/// Silhouettes averaged with weights `(mu_p - mu_q)^alpha`, where `mu_p`
/// and `mu_q` are each object's largest and second-largest memberships.
/// `0^0` is taken as 1, so `alpha = 0` gives the plain mean silhouette.
pub fn fuzzy_silhouette(
    partition: &PartitionMatrix,
    pairwise: &DistanceMatrix,
    cfg: &SilhouetteConfig,
) -> FuzzySilhouette {
    let s = silhouettes(&crisp_assignment(partition), pairwise);
    let weights: Vec<f64> = membership_gaps(partition)
        .into_iter()
        .map(|g| g.max(0.0).powf(cfg.alpha))
        .collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return FuzzySilhouette {
            value: 0.0,
            all_weights_zero: true,
        };
    }
    let weighted: f64 = weights.iter().zip(&s).map(|(w, s)| w * s).sum();
    FuzzySilhouette {
        value: (weighted / total).clamp(-1.0, 1.0),
        all_weights_zero: false,
    }
}
