//! Dissimilarities between setplays, steps and their non-scalar parts.
//!
//! None of these is a metric in the strict sense (the triangle inequality is
//! not guaranteed); all of them are symmetric, non-negative and zero on
//! identical inputs, which is what the clustering and validity code needs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fcm::HybridSpace;
use crate::model::{BoolTree, Point, SetplayFeatures, StepFeatures};
use crate::partition::DistanceMatrix;

/// Diagonal of the 20 m x 30 m field.
pub const FIELD_DIAGONAL: f64 = 36.055_512_754_639_89;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    /// Added once per player that has no counterpart in the other list.
    pub unmatched_player_penalty: f64,
    /// Express player-list norms in field diagonals instead of meters.
    pub normalize_features: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            unmatched_player_penalty: 36.06,
            normalize_features: false,
        }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.unmatched_player_penalty.is_finite() && self.unmatched_player_penalty >= 0.0) {
            return Err("unmatched_player_penalty must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Number of differing nodes between two condition trees, comparing
/// children position by position. A subtree present in only one tree
/// contributes all of its nodes.
pub fn diff_node(a: &BoolTree, b: &BoolTree) -> usize {
    let here = usize::from(a.label != b.label);
    let width = a.children.len().max(b.children.len());
    here + (0..width)
        .map(|i| match (a.children.get(i), b.children.get(i)) {
            (Some(x), Some(y)) => diff_node(x, y),
            (Some(only), None) | (None, Some(only)) => only.size(),
            (None, None) => 0,
        })
        .sum::<usize>()
}

/// Scalar part of a level-1 row: players ours, players theirs, steps.
pub fn level1_scalars(f: &SetplayFeatures) -> [f64; 3] {
    [
        f64::from(f.our_players_number),
        f64::from(f.their_players_number),
        f64::from(f.steps_count),
    ]
}

fn level1_from_parts(a: &[f64], b: &[f64], tree_diff: f64) -> f64 {
    let sq = |x: f64| x * x;
    (sq(a[0] - b[0]) + sq(a[1] - b[1]) + sq(tree_diff) + sq(a[2] - b[2])).sqrt()
}

/// Level-1 setplay distance. The step list is not used.
pub fn level1_distance(a: &SetplayFeatures, b: &SetplayFeatures) -> f64 {
    let tree = diff_node(&a.abort_condition, &b.abort_condition) as f64;
    level1_from_parts(&level1_scalars(a), &level1_scalars(b), tree)
}

/// Square root of the number of positions whose behaviors differ; positions
/// past the end of the shorter vector count as different.
pub fn behavior_norm(a: &[String], b: &[String]) -> f64 {
    let width = a.len().max(b.len());
    let differing = (0..width).filter(|&i| a.get(i) != b.get(i)).count();
    (differing as f64).sqrt()
}

/// Sum of distances between index-paired players plus a fixed penalty for
/// every player left without a partner.
pub fn player_list_norm(a: &[Point], b: &[Point], cfg: &DistanceConfig) -> f64 {
    let paired: f64 = a.iter().zip(b).map(|(p, q)| p.distance(q)).sum();
    let unmatched = a.len().abs_diff(b.len()) as f64;
    let total = paired + unmatched * cfg.unmatched_player_penalty;
    if cfg.normalize_features {
        total / FIELD_DIAGONAL
    } else {
        total
    }
}

pub fn step_distance(a: &StepFeatures, b: &StepFeatures, cfg: &DistanceConfig) -> f64 {
    let sq = |x: f64| x * x;
    let next = sq((a.next_step - b.next_step) as f64);
    let ours = sq(player_list_norm(
        &a.our_players_list,
        &b.our_players_list,
        cfg,
    ));
    let theirs = sq(player_list_norm(
        &a.their_players_list,
        &b.their_players_list,
        cfg,
    ));
    let cond = sq(diff_node(&a.condition, &b.condition) as f64);
    let behaviors = sq(behavior_norm(&a.behaviors_list, &b.behaviors_list));
    let scalars = sq(f64::from(a.our_players_in_step) - f64::from(b.our_players_in_step))
        + sq(f64::from(a.their_players_in_step) - f64::from(b.their_players_in_step))
        + sq(a.wait_time - b.wait_time)
        + sq(a.abort_time - b.abort_time);
    (next + ours + theirs + cond + behaviors + scalars).sqrt()
}

/// Sum of step distances over the steps both setplays have.
pub fn step_list_distance(a: &SetplayFeatures, b: &SetplayFeatures, cfg: &DistanceConfig) -> f64 {
    a.steps_list
        .iter()
        .zip(&b.steps_list)
        .map(|(x, y)| step_distance(x, y, cfg))
        .sum()
}

/// Level-2 setplay distance: the level-1 distance plus the (unsquared) step
/// distances over common steps.
pub fn level2_distance(a: &SetplayFeatures, b: &SetplayFeatures, cfg: &DistanceConfig) -> f64 {
    level1_distance(a, b) + step_list_distance(a, b, cfg)
}

fn square_table(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
    (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            // evaluate with the smaller index first so the table is exactly symmetric
            if i <= j {
                f(i, j)
            } else {
                f(j, i)
            }
        })
        .collect()
}

/// Level-1 view of a dataset for the clustering engine. Tree differences
/// between instances are computed once up front.
pub struct Level1Space {
    n: usize,
    scalars: Vec<[f64; 3]>,
    tree_diff: Vec<f64>,
}

impl Level1Space {
    pub fn new(data: &[SetplayFeatures]) -> Self {
        let n = data.len();
        Level1Space {
            n,
            scalars: data.iter().map(level1_scalars).collect(),
            tree_diff: square_table(n, |i, j| {
                diff_node(&data[i].abort_condition, &data[j].abort_condition) as f64
            }),
        }
    }
}

impl HybridSpace for Level1Space {
    fn len(&self) -> usize {
        self.n
    }

    fn scalars(&self, index: usize) -> &[f64] {
        &self.scalars[index]
    }

    fn centroid_distance(&self, index: usize, scalars: &[f64], prototype: usize) -> f64 {
        level1_from_parts(
            &self.scalars[index],
            scalars,
            self.tree_diff[index * self.n + prototype],
        )
    }
}

/// Level-2 view: level-1 part plus the step-list sums, which only depend on
/// the instance and the centroid's prototype.
pub struct Level2Space {
    level1: Level1Space,
    step_sums: Vec<f64>,
}

impl Level2Space {
    pub fn new(data: &[SetplayFeatures], cfg: &DistanceConfig) -> Self {
        Level2Space {
            level1: Level1Space::new(data),
            step_sums: square_table(data.len(), |i, j| {
                step_list_distance(&data[i], &data[j], cfg)
            }),
        }
    }
}

impl HybridSpace for Level2Space {
    fn len(&self) -> usize {
        self.level1.n
    }

    fn scalars(&self, index: usize) -> &[f64] {
        self.level1.scalars(index)
    }

    fn centroid_distance(&self, index: usize, scalars: &[f64], prototype: usize) -> f64 {
        self.level1.centroid_distance(index, scalars, prototype)
            + self.step_sums[index * self.level1.n + prototype]
    }
}

/// Instance-to-instance dissimilarities of a space.
pub fn pairwise(space: &impl HybridSpace) -> DistanceMatrix {
    let n = space.len();
    DistanceMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { space.distance(i, j) })
}
