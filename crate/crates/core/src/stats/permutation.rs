use super::{f1_from_counts, median, ConfusionMatrix, OrdinalScale, StatsError};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Debug;

/// Test statistic: the system's metric minus the panel's median metric,
/// each computed against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Statistic {
    KappaVsMedian,
    AccuracyVsMedian,
    /// F1 after binarising labels: scale index `>= positive_from` is positive.
    F1VsMedian {
        positive_from: usize,
    },
}

impl Statistic {
    pub fn name(&self) -> String {
        match self {
            Statistic::KappaVsMedian => "kappa_vs_median".into(),
            Statistic::AccuracyVsMedian => "accuracy_vs_median".into(),
            Statistic::F1VsMedian { positive_from } => format!("f1_vs_median_ge{positive_from}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    pub statistic: Statistic,
    pub observed_statistic: f64,
    pub null_samples: usize,
    /// `(1 + #{|T_perm| >= |T_obs|}) / (iterations + 1)`.
    pub p_two_tailed: f64,
}

const TIE_TOLERANCE: f64 = 1e-12;

fn metric(statistic: Statistic, reference: &[usize], grader: &[usize], k: usize) -> f64 {
    match statistic {
        Statistic::KappaVsMedian => {
            let cm = ConfusionMatrix::from_indices(reference, grader, k).expect("validated labels");
            // zero expected disagreement only happens when both raters give
            // the same single category, which is perfect agreement
            cm.quadratic_kappa().unwrap_or(1.0)
        }
        Statistic::AccuracyVsMedian => {
            let hits = reference.iter().zip(grader).filter(|(a, b)| a == b).count();
            hits as f64 / reference.len() as f64
        }
        Statistic::F1VsMedian { positive_from } => {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (&r, &g) in reference.iter().zip(grader) {
                match (r >= positive_from, g >= positive_from) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            f1_from_counts(tp, fp, fn_)
        }
    }
}

fn statistic_value(statistic: Statistic, reference: &[usize], system: &[usize], panel: &[Vec<usize>], k: usize) -> f64 {
    let panel_metrics: Vec<f64> = panel.iter().map(|p| metric(statistic, reference, p, k)).collect();
    metric(statistic, reference, system, k) - median(&panel_metrics)
}

/// Swap permutation test of a system against a reader panel.
///
/// In each iteration every case independently draws one member of
/// {system} ∪ panel uniformly and exchanges that member's label with the
/// system's (drawing the system itself leaves the case unchanged). The
/// statistic is recomputed on the swapped labels; iteration `i` uses its own
/// random stream so the result is identical for any thread count.
pub fn permutation_test_indexed(
    system: &[usize],
    panel: &[Vec<usize>],
    reference: &[usize],
    k: usize,
    statistic: Statistic,
    iterations: usize,
    seed: u64,
) -> Result<PermutationResult, StatsError> {
    let n = reference.len();
    if panel.is_empty() {
        return Err(StatsError::Alignment("panel has no readers".into()));
    }
    if system.len() != n {
        return Err(StatsError::Alignment(format!("system has {} cases, reference {n}", system.len())));
    }
    if let Some((r, p)) = panel.iter().enumerate().find(|(_, p)| p.len() != n) {
        return Err(StatsError::Alignment(format!("reader {r} has {} cases, reference {n}", p.len())));
    }
    if n == 0 {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    if iterations == 0 {
        return Err(StatsError::InvalidArgument("iterations must be at least 1".into()));
    }
    if let Some(pos) = reference.iter().chain(system).chain(panel.iter().flatten()).position(|&l| l >= k) {
        return Err(StatsError::UnknownLabel(pos % n));
    }
    if let Statistic::F1VsMedian { positive_from } = statistic {
        if positive_from == 0 || positive_from >= k {
            return Err(StatsError::InvalidArgument(format!("positive_from {positive_from} outside 1..{k}")));
        }
    }

    let observed = statistic_value(statistic, reference, system, panel, k);
    let readers = panel.len();
    let exceed = (0..iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = rng::stream(seed, rng::PERMUTATION, it as u64);
            let mut sys = system.to_vec();
            let mut pan = panel.to_vec();
            for (c, s) in sys.iter_mut().enumerate() {
                let pick = rng.random_range(0..=readers);
                if pick > 0 {
                    std::mem::swap(s, &mut pan[pick - 1][c]);
                }
            }
            let t = statistic_value(statistic, reference, &sys, &pan, k);
            t.abs() + TIE_TOLERANCE >= observed.abs()
        })
        .filter(|&hit| hit)
        .count();

    Ok(PermutationResult {
        statistic,
        observed_statistic: observed,
        null_samples: iterations,
        p_two_tailed: (1 + exceed) as f64 / (iterations + 1) as f64,
    })
}

/// [`permutation_test_indexed`] over labels of an ordinal scale.
pub fn permutation_test<T: PartialEq + Clone + Debug>(
    system: &[T],
    panel: &[Vec<T>],
    reference: &[T],
    scale: &OrdinalScale<T>,
    statistic: Statistic,
    iterations: usize,
    seed: u64,
) -> Result<PermutationResult, StatsError> {
    let sys = scale.indices(system)?;
    let reference = scale.indices(reference)?;
    let pan = panel.iter().map(|p| scale.indices(p)).collect::<Result<Vec<_>, _>>()?;
    permutation_test_indexed(&sys, &pan, &reference, scale.k(), statistic, iterations, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_graders_give_p_one() {
        let reference = vec![0, 1, 2, 3, 4, 5, 2, 1];
        let system = vec![0, 1, 2, 2, 4, 5, 3, 1];
        let panel = vec![system.clone(); 4];
        let r = permutation_test_indexed(&system, &panel, &reference, 6, Statistic::KappaVsMedian, 200, 1).unwrap();
        assert_eq!(r.observed_statistic, 0.0);
        assert_eq!(r.p_two_tailed, 1.0);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let reference = vec![0, 1, 2, 3, 4, 5, 2, 1, 1, 3];
        let system = vec![0, 1, 2, 3, 4, 5, 2, 1, 1, 3];
        let panel = vec![vec![1, 1, 3, 3, 4, 4, 2, 2, 1, 3], vec![0, 2, 2, 3, 5, 5, 1, 1, 0, 4]];
        let a = permutation_test_indexed(&system, &panel, &reference, 6, Statistic::AccuracyVsMedian, 500, 42).unwrap();
        let b = permutation_test_indexed(&system, &panel, &reference, 6, Statistic::AccuracyVsMedian, 500, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.p_two_tailed >= 1.0 / 501.0 && a.p_two_tailed <= 1.0);
    }

    #[test]
    fn alignment_errors() {
        let e = permutation_test_indexed(&[0, 1], &[vec![0]], &[0, 1], 2, Statistic::AccuracyVsMedian, 10, 0);
        assert!(matches!(e, Err(StatsError::Alignment(_))));
        let e = permutation_test_indexed(&[0, 1], &[], &[0, 1], 2, Statistic::AccuracyVsMedian, 10, 0);
        assert!(matches!(e, Err(StatsError::Alignment(_))));
        let e = permutation_test_indexed(&[0], &[vec![0]], &[0, 1], 2, Statistic::AccuracyVsMedian, 10, 0);
        assert!(matches!(e, Err(StatsError::Alignment(_))));
    }

    /// Two cases, two readers: three equally likely swap choices per case,
    /// nine configurations in total.
    #[test]
    fn toy_instance_matches_enumeration() {
        let reference = vec![1usize, 0];
        let system = vec![1usize, 0];
        let panel = vec![vec![0usize, 0], vec![0usize, 1]];
        for statistic in [Statistic::AccuracyVsMedian, Statistic::F1VsMedian { positive_from: 1 }] {
            let observed = statistic_value(statistic, &reference, &system, &panel, 2);
            let mut hits = 0;
            for a in 0..3 {
                for b in 0..3 {
                    let mut sys = system.clone();
                    let mut pan = panel.clone();
                    for (c, pick) in [a, b].into_iter().enumerate() {
                        if pick > 0 {
                            std::mem::swap(&mut sys[c], &mut pan[pick - 1][c]);
                        }
                    }
                    let t = statistic_value(statistic, &reference, &sys, &pan, 2);
                    if t.abs() + TIE_TOLERANCE >= observed.abs() {
                        hits += 1;
                    }
                }
            }
            let q = hits as f64 / 9.0;
            let iterations = 40_000;
            let r = permutation_test_indexed(&system, &panel, &reference, 2, statistic, iterations, 7).unwrap();
            assert_eq!(r.observed_statistic, observed);
            let sd = (q * (1.0 - q) / iterations as f64).sqrt();
            let expected = (1.0 + q * iterations as f64) / (iterations + 1) as f64;
            assert!(
                (r.p_two_tailed - expected).abs() <= 4.0 * sd + 1e-9,
                "{statistic:?}: p {} vs exact {expected}",
                r.p_two_tailed
            );
        }
    }
}
