//! Agreement, ROC and permutation statistics.

mod permutation;
mod roc;

pub use permutation::{permutation_test, permutation_test_indexed, PermutationResult, Statistic};
pub use roc::{
    bootstrap_roc, operating_point, roc, youden_point, BandPoint, BootstrapOptions, BootstrapRoc, OperatingPoint,
    RocCurve, RocPoint,
};

use serde::Serialize;
use std::fmt::Debug;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} observations required, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("label at position {0} is not on the scale")]
    UnknownLabel(usize),
    #[error("expected disagreement is zero; kappa is undefined")]
    DegenerateMarginals,
    #[error("ROC analysis needs both positive and negative cases")]
    SingleClassTruth,
    #[error("score at position {0} is not finite")]
    NonFiniteScore(usize),
    #[error("no threshold reaches sensitivity {0}")]
    Unreachable(f64),
    #[error("bootstrap replicate {0} drew a single class on every retry")]
    BootstrapExhausted(usize),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("alignment error: {0}")]
    Alignment(String),
}

/// Ordered categories of a rating scale.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalScale<T> {
    categories: Vec<T>,
}

impl<T: PartialEq + Clone + Debug> OrdinalScale<T> {
    pub fn new(categories: Vec<T>) -> Result<Self, StatsError> {
        if categories.len() < 2 {
            return Err(StatsError::InvalidScale("at least two categories required".into()));
        }
        for (i, c) in categories.iter().enumerate() {
            if categories[..i].contains(c) {
                return Err(StatsError::InvalidScale(format!("duplicate category {c:?}")));
            }
        }
        Ok(OrdinalScale { categories })
    }

    pub fn k(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[T] {
        &self.categories
    }

    pub fn index_of(&self, label: &T) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    pub fn indices(&self, labels: &[T]) -> Result<Vec<usize>, StatsError> {
        labels.iter().enumerate().map(|(i, l)| self.index_of(l).ok_or(StatsError::UnknownLabel(i))).collect()
    }
}

impl OrdinalScale<u8> {
    /// Benign (0) followed by grade groups 1 to 5.
    pub fn grade_groups() -> Self {
        OrdinalScale { categories: (0..=5).collect() }
    }

    /// Benign (0) followed by the nine Gleason scores, see [`crate::grading::SCORE_SCALE`].
    pub fn gleason_scores() -> Self {
        OrdinalScale { categories: (0..=crate::grading::SCORE_SCALE.len() as u8).collect() }
    }
}

/// Counts with reference categories as rows and predictions as columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_indices(reference: &[usize], predicted: &[usize], k: usize) -> Result<Self, StatsError> {
        if reference.len() != predicted.len() {
            return Err(StatsError::LengthMismatch(reference.len(), predicted.len()));
        }
        let mut counts = vec![0u64; k * k];
        for (i, (&r, &p)) in reference.iter().zip(predicted).enumerate() {
            if r >= k || p >= k {
                return Err(StatsError::UnknownLabel(i));
            }
            counts[r * k + p] += 1;
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn column_totals(&self) -> Vec<u64> {
        (0..self.k).map(|j| (0..self.k).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.diagonal() as f64 / self.total() as f64
    }

    /// Quadratic-weighted Cohen's kappa, `1 - Σ w·O / Σ w·E` with
    /// `w_ij = (i - j)²` and `E` the product of the marginals. Evaluated in
    /// integer arithmetic up to the final division.
    pub fn quadratic_kappa(&self) -> Result<f64, StatsError> {
        let n = self.total() as u128;
        let rows = self.row_totals();
        let cols = self.column_totals();
        let mut observed: u128 = 0;
        let mut expected: u128 = 0;
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                let w = i.abs_diff(j).pow(2) as u128;
                observed += w * self.get(i, j) as u128;
                expected += w * r as u128 * c as u128;
            }
        }
        if expected == 0 {
            return Err(StatsError::DegenerateMarginals);
        }
        Ok(1.0 - (n * observed) as f64 / expected as f64)
    }
}

pub fn confusion<T: PartialEq + Clone + Debug>(
    reference: &[T],
    predicted: &[T],
    scale: &OrdinalScale<T>,
) -> Result<ConfusionMatrix, StatsError> {
    if reference.len() != predicted.len() {
        return Err(StatsError::LengthMismatch(reference.len(), predicted.len()));
    }
    if reference.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    let r = scale.indices(reference)?;
    let p = scale.indices(predicted)?;
    ConfusionMatrix::from_indices(&r, &p, scale.k())
}

pub fn quadratic_kappa<T: PartialEq + Clone + Debug>(
    reference: &[T],
    predicted: &[T],
    scale: &OrdinalScale<T>,
) -> Result<f64, StatsError> {
    if reference.len() < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: reference.len() });
    }
    confusion(reference, predicted, scale)?.quadratic_kappa()
}

pub fn accuracy<T: PartialEq>(reference: &[T], predicted: &[T]) -> Result<f64, StatsError> {
    if reference.len() != predicted.len() {
        return Err(StatsError::LengthMismatch(reference.len(), predicted.len()));
    }
    if reference.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    let hits = reference.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / reference.len() as f64)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(reference: &[bool], predicted: &[bool]) -> Result<f64, StatsError> {
    if reference.len() != predicted.len() {
        return Err(StatsError::LengthMismatch(reference.len(), predicted.len()));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&r, &p) in reference.iter().zip(predicted) {
        match (r, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1_from_counts(tp, fp, fn_))
}

pub(crate) fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    // 2·P·R/(P+R) reduces to 2TP/(2TP+FP+FN)
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
