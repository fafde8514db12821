use super::{percentile, StatsError};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// One operating point: cases with `score >= threshold` are called positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub false_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Ascending threshold: starts at (1, 1), ends with the `+inf`
    /// threshold at (0, 0).
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    /// Sensitivity at a false positive rate, linear between curve points;
    /// on a vertical segment the highest sensitivity is taken.
    pub fn sensitivity_at(&self, fpr: f64) -> f64 {
        let mut best: Option<f64> = None;
        // walk from (0,0) toward (1,1)
        let pts: Vec<&RocPoint> = self.points.iter().rev().collect();
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (a.false_positive_rate, b.false_positive_rate);
            if fa <= fpr && fpr <= fb {
                let s = if fb > fa {
                    a.sensitivity + (b.sensitivity - a.sensitivity) * (fpr - fa) / (fb - fa)
                } else {
                    a.sensitivity.max(b.sensitivity)
                };
                best = Some(best.map_or(s, |v: f64| v.max(s)));
            }
        }
        best.unwrap_or(0.0)
    }

    /// Area by the trapezoid rule over the curve points.
    pub fn trapezoid_auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                (w[0].false_positive_rate - w[1].false_positive_rate) * (w[0].sensitivity + w[1].sensitivity) / 2.0
            })
            .sum()
    }
}

fn check_inputs(scores: &[f64], truth: &[bool]) -> Result<(usize, usize), StatsError> {
    if scores.len() != truth.len() {
        return Err(StatsError::LengthMismatch(scores.len(), truth.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(StatsError::NonFiniteScore(i));
    }
    let pos = truth.iter().filter(|t| **t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(StatsError::SingleClassTruth);
    }
    Ok((pos, neg))
}

/// ROC curve over every distinct score. The area is the Mann-Whitney
/// statistic with ties counted one half, computed from doubled mid-ranks in
/// integer arithmetic.
pub fn roc(scores: &[f64], truth: &[bool]) -> Result<RocCurve, StatsError> {
    let (pos, neg) = check_inputs(scores, truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut doubled_rank_sum: u128 = 0;
    // (threshold, positives in group, negatives in group), ascending
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == s {
            if truth[order[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        // ranks i+1..=j share the mid-rank (i+1+j)/2
        doubled_rank_sum += (gp as u128) * (i + 1 + j) as u128;
        groups.push((s, gp, gn));
        i = j;
    }
    let (np, nn) = (pos as u128, neg as u128);
    let doubled_u = doubled_rank_sum - np * (np + 1);
    let auc = doubled_u as f64 / (2 * np * nn) as f64;

    let mut points = Vec::with_capacity(groups.len() + 1);
    let (mut tp, mut fp) = (pos, neg);
    for &(s, gp, gn) in &groups {
        points.push(RocPoint {
            threshold: s,
            sensitivity: tp as f64 / pos as f64,
            false_positive_rate: fp as f64 / neg as f64,
        });
        tp -= gp;
        fp -= gn;
    }
    points.push(RocPoint { threshold: f64::INFINITY, sensitivity: 0.0, false_positive_rate: 0.0 });
    Ok(RocCurve { points, auc, positives: pos, negatives: neg })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl OperatingPoint {
    fn of(p: &RocPoint) -> Self {
        OperatingPoint { threshold: p.threshold, sensitivity: p.sensitivity, specificity: 1.0 - p.false_positive_rate }
    }
}

/// The most specific threshold whose sensitivity is at least
/// `min_sensitivity`.
pub fn operating_point(curve: &RocCurve, min_sensitivity: f64) -> Result<OperatingPoint, StatsError> {
    if !(min_sensitivity > 0.0 && min_sensitivity <= 1.0) {
        return Err(StatsError::InvalidArgument(format!("min_sensitivity {min_sensitivity} outside (0, 1]")));
    }
    curve
        .points
        .iter()
        .filter(|p| p.sensitivity + 1e-12 >= min_sensitivity)
        .max_by(|a, b| {
            (1.0 - a.false_positive_rate)
                .total_cmp(&(1.0 - b.false_positive_rate))
                .then(a.sensitivity.total_cmp(&b.sensitivity))
                .then(a.threshold.total_cmp(&b.threshold))
        })
        .map(OperatingPoint::of)
        .ok_or(StatsError::Unreachable(min_sensitivity))
}

/// Finite threshold maximising sensitivity + specificity - 1; ties go to
/// the higher threshold.
pub fn youden_point(curve: &RocCurve) -> OperatingPoint {
    curve
        .points
        .iter()
        .filter(|p| p.threshold.is_finite())
        .max_by(|a, b| {
            (a.sensitivity - a.false_positive_rate)
                .total_cmp(&(b.sensitivity - b.false_positive_rate))
                .then(a.threshold.total_cmp(&b.threshold))
        })
        .map(OperatingPoint::of)
        .expect("curve has a finite threshold")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Central coverage of the percentile interval.
    pub level: f64,
    /// Number of evenly spaced false positive rates in the band.
    pub grid_points: usize,
    /// Redraws allowed for a replicate that sampled a single class.
    pub max_redraws: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { replicates: 1000, seed: 0, level: 0.95, grid_points: 101, max_redraws: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandPoint {
    pub false_positive_rate: f64,
    pub mean_sensitivity: f64,
    pub lower_sensitivity: f64,
    pub upper_sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapRoc {
    pub point_auc: f64,
    pub mean_auc: f64,
    pub auc_ci: (f64, f64),
    pub replicate_aucs: Vec<f64>,
    pub band: Vec<BandPoint>,
}

/// Case-level bootstrap of the ROC curve. Replicate `i` draws from its own
/// stream derived from `(seed, i)`, so results do not depend on how
/// replicates are scheduled across threads.
pub fn bootstrap_roc(scores: &[f64], truth: &[bool], opts: &BootstrapOptions) -> Result<BootstrapRoc, StatsError> {
    if opts.replicates == 0 {
        return Err(StatsError::InvalidArgument("replicates must be at least 1".into()));
    }
    if opts.grid_points < 2 {
        return Err(StatsError::InvalidArgument("grid_points must be at least 2".into()));
    }
    let point = roc(scores, truth)?;
    let n = scores.len();
    let grid: Vec<f64> = (0..opts.grid_points).map(|i| i as f64 / (opts.grid_points - 1) as f64).collect();

    let replicates: Vec<(f64, Vec<f64>)> = (0..opts.replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(opts.seed, rng::BOOTSTRAP, i as u64);
            let mut s = vec![0.0; n];
            let mut t = vec![false; n];
            for _ in 0..=opts.max_redraws {
                for k in 0..n {
                    let j = rng.random_range(0..n);
                    s[k] = scores[j];
                    t[k] = truth[j];
                }
                match roc(&s, &t) {
                    Ok(curve) => {
                        let tprs = grid.iter().map(|&f| curve.sensitivity_at(f)).collect();
                        return Ok((curve.auc, tprs));
                    }
                    Err(StatsError::SingleClassTruth) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(StatsError::BootstrapExhausted(i))
        })
        .collect::<Vec<Result<_, _>>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    let tail = (1.0 - opts.level) / 2.0;
    let mut aucs: Vec<f64> = replicates.iter().map(|r| r.0).collect();
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let replicate_aucs = aucs.clone();
    aucs.sort_by(f64::total_cmp);
    let auc_ci = (percentile(&aucs, tail), percentile(&aucs, 1.0 - tail));

    let band = grid
        .iter()
        .enumerate()
        .map(|(g, &fpr)| {
            let mut col: Vec<f64> = replicates.iter().map(|r| r.1[g]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            col.sort_by(f64::total_cmp);
            BandPoint {
                false_positive_rate: fpr,
                mean_sensitivity: mean,
                lower_sensitivity: percentile(&col, tail),
                upper_sensitivity: percentile(&col, 1.0 - tail),
            }
        })
        .collect();

    Ok(BootstrapRoc { point_auc: point.auc, mean_auc, auc_ci, replicate_aucs, band })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pair_count_auc(scores: &[f64], truth: &[bool]) -> f64 {
        let mut twice = 0u64;
        let (mut np, mut nn) = (0u64, 0u64);
        for (i, &ti) in truth.iter().enumerate() {
            if ti {
                np += 1
            } else {
                nn += 1
            }
            if !ti {
                continue;
            }
            for (j, &tj) in truth.iter().enumerate() {
                if tj {
                    continue;
                }
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
        twice as f64 / (2 * np * nn) as f64
    }

    #[test]
    fn separated_and_tied() {
        let c = roc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(c.auc, 1.0);
        let c = roc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points.len(), 2);
    }

    #[test]
    fn curve_endpoints_and_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..50).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect();
        let t: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        let c = roc(&s, &t).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.false_positive_rate, first.sensitivity), (1.0, 1.0));
        assert_eq!((last.false_positive_rate, last.sensitivity), (0.0, 0.0));
        for w in c.points.windows(2) {
            assert!(w[1].threshold > w[0].threshold);
            assert!(w[1].sensitivity <= w[0].sensitivity);
            assert!(w[1].false_positive_rate <= w[0].false_positive_rate);
        }
        assert!((c.auc - pair_count_auc(&s, &t)).abs() <= 1e-12);
        assert!((c.auc - c.trapezoid_auc()).abs() <= 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(roc(&[0.1, 0.2], &[true, true]), Err(StatsError::SingleClassTruth));
        assert_eq!(roc(&[0.1, f64::NAN], &[true, false]), Err(StatsError::NonFiniteScore(1)));
        assert_eq!(roc(&[0.1], &[true, false]), Err(StatsError::LengthMismatch(1, 2)));
    }

    #[test]
    fn operating_points() {
        let c = roc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        let op = operating_point(&c, 0.99).unwrap();
        assert_eq!((op.sensitivity, op.specificity, op.threshold), (1.0, 1.0, 0.8));
        let c = roc(&[0.3; 4], &[false, false, true, true]).unwrap();
        assert_eq!(operating_point(&c, 1.0).unwrap().specificity, 0.0);
        assert!(operating_point(&c, 0.0).is_err());
        let y = youden_point(&roc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap());
        assert_eq!(y.threshold, 0.8);
    }

    #[test]
    fn operating_point_matches_sweep() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let t: Vec<bool> = (0..100).map(|_| rng.random_bool(0.4)).collect();
        let s: Vec<f64> =
            t.iter().map(|&p| (rng.random_range(0..20) as f64 + if p { 6.0 } else { 0.0 }) / 30.0).collect();
        let c = roc(&s, &t).unwrap();
        for &target in &[0.5, 0.8, 0.9, 0.99, 1.0] {
            let op = operating_point(&c, target).unwrap();
            // sweep every distinct score directly on the data
            let mut distinct = s.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let np = t.iter().filter(|x| **x).count() as f64;
            let nn = t.len() as f64 - np;
            let mut best: Option<(f64, f64, f64)> = None;
            for &th in &distinct {
                let tp = s.iter().zip(&t).filter(|(v, p)| **p && **v >= th).count() as f64;
                let tn = s.iter().zip(&t).filter(|(v, p)| !**p && **v < th).count() as f64;
                let (sens, spec) = (tp / np, tn / nn);
                if sens >= target && best.is_none_or(|b| spec > b.2 || (spec == b.2 && sens > b.1)) {
                    best = Some((th, sens, spec));
                }
            }
            let b = best.unwrap();
            assert_eq!((op.sensitivity, op.specificity), (b.1, b.2), "target {target}");
        }
    }

    #[test]
    fn bootstrap_determinism_and_separable() {
        let s = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let t = [false, false, false, true, true, true];
        let opts = BootstrapOptions { replicates: 1, seed: 9, ..Default::default() };
        let a = bootstrap_roc(&s, &t, &opts).unwrap();
        let b = bootstrap_roc(&s, &t, &opts).unwrap();
        assert_eq!(a, b);
        let opts = BootstrapOptions { replicates: 200, seed: 9, ..Default::default() };
        let r = bootstrap_roc(&s, &t, &opts).unwrap();
        assert_eq!(r.auc_ci, (1.0, 1.0));
        assert!(r
            .band
            .iter()
            .all(|p| p.lower_sensitivity <= p.mean_sensitivity && p.mean_sensitivity <= p.upper_sensitivity));
    }

    #[test]
    fn bootstrap_rejects_zero_replicates() {
        let opts = BootstrapOptions { replicates: 0, ..Default::default() };
        assert!(bootstrap_roc(&[0.1, 0.9], &[false, true], &opts).is_err());
    }

    #[test]
    fn bootstrap_exhausts_on_tiny_input() {
        // with one positive in two cases, half of all draws are single-class;
        // zero redraws must eventually fail some replicate
        let opts = BootstrapOptions { replicates: 64, max_redraws: 0, seed: 1, ..Default::default() };
        assert!(matches!(bootstrap_roc(&[0.1, 0.9], &[false, true], &opts), Err(StatsError::BootstrapExhausted(_))));
    }
}
