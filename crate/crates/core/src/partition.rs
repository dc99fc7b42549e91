//! Dense matrices shared by the clustering engine and the validity index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column sums may deviate from one by at most this much.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("partition needs at least one cluster and one object")]
    Empty,
    #[error("ragged partition: row {row} has {len} entries, expected {expected}")]
    Ragged {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("membership {value} at ({row}, {col}) is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("column {col} sums to {sum}")]
    ColumnSum { col: usize, sum: f64 },
}

/// C x N fuzzy membership matrix; entry (i, j) is the membership of object
/// j in cluster i. Every column sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMatrix {
    clusters: usize,
    objects: usize,
    /// row-major
    values: Vec<f64>,
}

impl PartitionMatrix {
    pub fn uniform(clusters: usize, objects: usize) -> Self {
        PartitionMatrix {
            clusters,
            objects,
            values: vec![1.0 / clusters as f64; clusters * objects],
        }
    }

    /// Build from rows, checking range and column sums.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PartitionError> {
        let p = Self::from_rows_unchecked(rows)?;
        p.check()?;
        Ok(p)
    }

    /// Build from rows; columns whose sums drift from one by less than
    /// `tolerance` are rescaled.
    pub fn from_rows_renormalized(
        rows: &[Vec<f64>],
        tolerance: f64,
    ) -> Result<Self, PartitionError> {
        let mut p = Self::from_rows_unchecked(rows)?;
        for j in 0..p.objects {
            let sum: f64 = (0..p.clusters).map(|i| p.get(i, j)).sum();
            if (sum - 1.0).abs() < tolerance && sum > 0.0 {
                for i in 0..p.clusters {
                    p.values[i * p.objects + j] /= sum;
                }
            }
        }
        p.check()?;
        Ok(p)
    }

    fn from_rows_unchecked(rows: &[Vec<f64>]) -> Result<Self, PartitionError> {
        let clusters = rows.len();
        let objects = rows.first().map_or(0, Vec::len);
        if clusters == 0 || objects == 0 {
            return Err(PartitionError::Empty);
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != objects {
                return Err(PartitionError::Ragged {
                    row,
                    len: r.len(),
                    expected: objects,
                });
            }
        }
        Ok(PartitionMatrix {
            clusters,
            objects,
            values: rows.concat(),
        })
    }

    /// Build from per-object membership columns.
    pub(crate) fn from_columns(clusters: usize, columns: &[Vec<f64>]) -> Self {
        let objects = columns.len();
        let mut values = vec![0.0; clusters * objects];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * objects + j] = v;
            }
        }
        PartitionMatrix {
            clusters,
            objects,
            values,
        }
    }

    pub fn check(&self) -> Result<(), PartitionError> {
        for i in 0..self.clusters {
            for j in 0..self.objects {
                let value = self.get(i, j);
                if !(0.0..=1.0).contains(&value) {
                    return Err(PartitionError::OutOfRange {
                        row: i,
                        col: j,
                        value,
                    });
                }
            }
        }
        for j in 0..self.objects {
            let sum = self.column(j).iter().sum::<f64>();
            if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                return Err(PartitionError::ColumnSum { col: j, sum });
            }
        }
        Ok(())
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn get(&self, cluster: usize, object: usize) -> f64 {
        self.values[cluster * self.objects + object]
    }

    pub fn row(&self, cluster: usize) -> &[f64] {
        &self.values[cluster * self.objects..(cluster + 1) * self.objects]
    }

    pub fn column(&self, object: usize) -> Vec<f64> {
        (0..self.clusters).map(|i| self.get(i, object)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.clusters).map(|i| self.row(i).to_vec()).collect()
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &PartitionMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric N x N dissimilarity table with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        DistanceMatrix { n, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(
            rows.iter().all(|r| r.len() == n),
            "distance matrix must be square"
        );
        DistanceMatrix {
            n,
            values: rows.concat(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n)
            .all(|i| self.get(i, i) == 0.0 && (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Restriction to the given objects, in the given order.
    pub fn subset(&self, members: &[usize]) -> DistanceMatrix {
        DistanceMatrix::from_fn(members.len(), |a, b| self.get(members[a], members[b]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_column() {
        let err = PartitionMatrix::from_rows(&[vec![0.5, 0.2], vec![0.5, 0.7]]).unwrap_err();
        assert!(matches!(err, PartitionError::ColumnSum { col: 1, .. }));
    }

    #[test]
    fn rejects_out_of_range() {
        let err = PartitionMatrix::from_rows(&[vec![1.5], vec![-0.5]]).unwrap_err();
        assert!(matches!(err, PartitionError::OutOfRange { .. }));
    }

    #[test]
    fn renormalizes_small_drift_only() {
        let p =
            PartitionMatrix::from_rows_renormalized(&[vec![0.3000004], vec![0.7]], 1e-6).unwrap();
        assert!((p.column(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(PartitionMatrix::from_rows_renormalized(&[vec![0.4], vec![0.7]], 1e-6).is_err());
    }

    #[test]
    fn columns_round_trip() {
        let p = PartitionMatrix::from_columns(2, &[vec![0.25, 0.75], vec![1.0, 0.0]]);
        assert_eq!(p.row(0), &[0.25, 1.0]);
        assert_eq!(p.column(0), vec![0.25, 0.75]);
        p.check().unwrap();
    }

    #[test]
    fn subset_keeps_order() {
        let d = DistanceMatrix::from_fn(4, |i, j| (i * 10 + j) as f64);
        let s = d.subset(&[3, 1]);
        assert_eq!(s.get(0, 1), 13.0);
        assert!(s.is_symmetric());
    }
}
