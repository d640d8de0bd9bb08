//! Datasets, class filtering, seeded subsampling, and labeled/unlabeled/test
//! splits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail_arg, Error, Result};
use crate::matrix::Matrix;
use crate::rng::{streams, Stream};

/// Feature matrix (one sample per row) with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    class_count: usize,
}

impl Dataset {
    /// Validates and wraps a feature matrix.
    ///
    /// `class_count` defaults to `max(label) + 1` when labels are given and to
    /// 0 otherwise.
    pub fn new(features: Matrix, labels: Option<Vec<usize>>, class_count: Option<usize>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            bail_arg!(
                "dataset must have at least one row and column, got {}x{}",
                features.rows(),
                features.cols()
            );
        }
        if let Some(pos) = features.as_slice().iter().position(|x| !x.is_finite()) {
            bail_arg!(
                "non-finite feature at row {}, column {}",
                pos / features.cols(),
                pos % features.cols()
            );
        }
        let inferred = labels.as_ref().map_or(0, |l| l.iter().max().map_or(0, |m| m + 1));
        let class_count = class_count.unwrap_or(inferred);
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::Consistency(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.rows()
                )));
            }
            if inferred > class_count {
                bail_arg!("label {} out of range for {} classes", inferred - 1, class_count);
            }
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn into_parts(self) -> (Matrix, Option<Vec<usize>>, usize) {
        (self.features, self.labels, self.class_count)
    }

    fn require_labels(&self, op: &str) -> Result<&[usize]> {
        match &self.labels {
            Some(l) => Ok(l),
            None => Err(Error::Argument(format!("{op} requires labels"))),
        }
    }

    /// Rows `idx` in the given order, keeping labels and class count.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            bail_arg!("empty row selection");
        }
        Ok(Self {
            features: self.features.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            class_count: self.class_count,
        })
    }

    /// Keeps rows whose label is in `keep`; label `keep[p]` becomes `p`.
    pub fn filter_classes(&self, keep: &[usize]) -> Result<Self> {
        let labels = self.require_labels("filter_classes")?;
        if keep.is_empty() {
            bail_arg!("filter_classes: empty class list");
        }
        let mut remap = vec![usize::MAX; self.class_count];
        for (p, &c) in keep.iter().enumerate() {
            if c >= self.class_count {
                bail_arg!("filter_classes: unknown class {} (have {})", c, self.class_count);
            }
            if remap[c] != usize::MAX {
                bail_arg!("filter_classes: class {} listed twice", c);
            }
            remap[c] = p;
        }
        let rows: Vec<usize> = (0..self.len()).filter(|&i| remap[labels[i]] != usize::MAX).collect();
        if rows.is_empty() {
            bail_arg!("filter_classes: no rows carry the requested classes");
        }
        Ok(Self {
            features: self.features.select_rows(&rows),
            labels: Some(rows.iter().map(|&i| remap[labels[i]]).collect()),
            class_count: keep.len(),
        })
    }

    /// `n` rows drawn uniformly without replacement, in draw order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            bail_arg!("subsample: n={} exceeds {} rows", n, self.len());
        }
        let idx = Stream::new(seed, streams::SUBSAMPLE).sample_indices(self.len(), n);
        self.select(&idx)
    }

    /// Class-balanced labeled set, then `n_unlabeled` rows from the remainder,
    /// then everything left over as the test set.
    ///
    /// Class `c` gets `n_labeled / C` rows plus one extra for the first
    /// `n_labeled % C` classes.
    pub fn split_semi(&self, n_labeled: usize, n_unlabeled: usize, seed: u64) -> Result<SemiSplit> {
        let labels = self.require_labels("split_semi")?;
        let m = self.len();
        let c = self.class_count;
        if n_labeled + n_unlabeled > m {
            bail_arg!(
                "split_semi: {} labeled + {} unlabeled exceeds {} rows",
                n_labeled,
                n_unlabeled,
                m
            );
        }
        if n_labeled < c {
            bail_arg!("split_semi: need at least one labeled row per class ({})", c);
        }
        let mut quota: Vec<usize> = (0..c).map(|k| n_labeled / c + usize::from(k < n_labeled % c)).collect();
        let mut available = vec![0usize; c];
        for &l in labels {
            available[l] += 1;
        }
        if let Some(k) = (0..c).find(|&k| available[k] < quota[k]) {
            return Err(Error::Balance(format!(
                "class {} has {} rows, needs {}",
                k, available[k], quota[k]
            )));
        }

        let mut order: Vec<usize> = (0..m).collect();
        Stream::new(seed, streams::SPLIT).shuffle(&mut order);

        let mut labeled_rows = Vec::with_capacity(n_labeled);
        let mut rest = Vec::with_capacity(m - n_labeled);
        for &i in &order {
            let q = &mut quota[labels[i]];
            if *q > 0 {
                *q -= 1;
                labeled_rows.push(i);
            } else {
                rest.push(i);
            }
        }
        let test_rows = rest.split_off(n_unlabeled);
        let unlabeled_rows = rest;

        let labeled = self.select(&labeled_rows)?;
        let unlabeled = Unlabeled {
            features: self.features.select_rows(&unlabeled_rows),
            audit_labels: unlabeled_rows.iter().map(|&i| labels[i]).collect(),
            source_rows: unlabeled_rows,
        };
        let test = if test_rows.is_empty() {
            None
        } else {
            Some(self.select(&test_rows)?)
        };
        Ok(SemiSplit {
            labeled,
            unlabeled,
            test,
            labeled_rows,
            test_rows,
        })
    }

    pub fn normalize(&self, mode: Normalization) -> Self {
        let mut out = self.clone();
        let m = self.len();
        let d = self.dim();
        match mode {
            Normalization::None => {}
            Normalization::UnitRange => {
                let data = out.features.as_mut_slice();
                let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
                let span = hi - lo;
                for x in data.iter_mut() {
                    *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
                }
            }
            Normalization::ZScore => {
                for j in 0..d {
                    let mean = (0..m).map(|i| self.features[(i, j)]).sum::<f64>() / m as f64;
                    let var = (0..m)
                        .map(|i| {
                            let z = self.features[(i, j)] - mean;
                            z * z
                        })
                        .sum::<f64>()
                        / m as f64;
                    let sd = libm::sqrt(var);
                    for i in 0..m {
                        out.features[(i, j)] = if sd > 0.0 {
                            (self.features[(i, j)] - mean) / sd
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Global min-max scaling of the whole matrix to `[0, 1]`.
    UnitRange,
    /// Per-column standardization; constant columns become 0.
    ZScore,
    None,
}

/// Unlabeled partition. Only the features are public; the true labels are
/// kept for audit metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Unlabeled {
    pub features: Matrix,
    audit_labels: Vec<usize>,
    source_rows: Vec<usize>,
}

impl Unlabeled {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    /// True labels of the unlabeled rows. For evaluation only; never passed to
    /// the trainer.
    pub fn audit_labels(&self) -> &[usize] {
        &self.audit_labels
    }

    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiSplit {
    pub labeled: Dataset,
    pub unlabeled: Unlabeled,
    pub test: Option<Dataset>,
    labeled_rows: Vec<usize>,
    test_rows: Vec<usize>,
}

impl SemiSplit {
    pub fn labeled_rows(&self) -> &[usize] {
        &self.labeled_rows
    }

    pub fn unlabeled_rows(&self) -> &[usize] {
        self.unlabeled.source_rows()
    }

    pub fn test_rows(&self) -> &[usize] {
        &self.test_rows
    }

    /// Labeled rows followed by unlabeled rows. The neighbor graph for
    /// training is built over this matrix, in this order.
    pub fn pool_features(&self) -> Matrix {
        if self.unlabeled.is_empty() {
            return self.labeled.features().clone();
        }
        self.labeled
            .features()
            .vstack(&self.unlabeled.features)
            .expect("partitions share the source dimension")
    }
}
