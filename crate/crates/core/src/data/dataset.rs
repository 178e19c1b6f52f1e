//! The universal data currency: flat feature vectors with integer labels.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::seed::rng_from;
use rand::seq::SliceRandom;

/// Feature matrix `[N × d]` plus one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    /// Validates row/label agreement, label range, and finiteness.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::Validation("class_count must be positive".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::Validation(format!(
                "label {l} at row {i} exceeds class_count {class_count}"
            )));
        }
        if let Some((i, _)) = features
            .outer_iter()
            .enumerate()
            .find(|(_, row)| !row.iter().all(|v| v.is_finite()))
        {
            return Err(Error::Numeric {
                context: "dataset features".into(),
                batch_index: i,
            });
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices of every sample with the given label, ascending.
    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset holding the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::Validation(format!(
                "row index {bad} out of range for dataset of {}",
                self.len()
            )));
        }
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Ok(Self {
            features,
            labels,
            class_count: self.class_count,
        })
    }

    /// Appends rows that all share one label (used for generated samples).
    pub fn append_rows(&mut self, rows: &Array2<f64>, label: usize) -> Result<()> {
        if rows.ncols() != self.dim() {
            return Err(Error::shape(
                "append_rows",
                format!("{} columns", self.dim()),
                format!("{} columns", rows.ncols()),
            ));
        }
        if label >= self.class_count {
            return Err(Error::Validation(format!(
                "label {label} exceeds class_count {}",
                self.class_count
            )));
        }
        if let Some((i, _)) = rows
            .outer_iter()
            .enumerate()
            .find(|(_, row)| !row.iter().all(|v| v.is_finite()))
        {
            return Err(Error::Numeric {
                context: "appended rows".into(),
                batch_index: i,
            });
        }
        self.features.append(Axis(0), rows.view()).map_err(|_| {
            Error::shape(
                "append_rows",
                format!("{} columns", self.dim()),
                format!("{} columns", rows.ncols()),
            )
        })?;
        self.labels.extend(std::iter::repeat_n(label, rows.nrows()));
        Ok(())
    }

    /// True when every feature lies in `[0, 1]`; loaders enforce this.
    pub fn in_unit_range(&self) -> bool {
        self.features.iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}

/// Seeded stratified split into (train, test) with `test_fraction` of each
/// class (rounded down, at least one sample stays in train per class).
pub fn stratified_split(
    dataset: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Validation(format!(
            "test_fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let mut rng = rng_from(seed);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for class in 0..dataset.class_count() {
        let mut rows = dataset.indices_of_class(class);
        rows.shuffle(&mut rng);
        let take = ((rows.len() as f64) * test_fraction).floor() as usize;
        let take = take.min(rows.len().saturating_sub(1));
        test_rows.extend_from_slice(&rows[..take]);
        train_rows.extend_from_slice(&rows[take..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok((dataset.select(&train_rows)?, dataset.select(&test_rows)?))
}
