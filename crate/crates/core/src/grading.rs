//! From class areas to Gleason score and grade group.
//!
//! Grading is two-staged: pixel counts are normalised over the epithelium
//! into a [`VolumeProfile`], then threshold rules pick the primary and
//! secondary pattern. Two rule sets are supported: biopsy scoring (most
//! common plus highest pattern, with tertiary substitution) and
//! prostatectomy-style scoring (the two most common patterns).

use crate::raster::{ClassAreas, LabelMask, TissueClass};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Fractions within this distance below a threshold count as reaching it.
pub const THRESHOLD_TOLERANCE: f64 = 1e-9;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradingError {
    #[error("mask contains no epithelium")]
    NoEpithelium,
    #[error("invalid volume profile: {0}")]
    InvalidProfile(String),
    #[error("invalid Gleason score {0}")]
    InvalidScore(String),
    #[error("invalid grade group {0}")]
    InvalidGradeGroup(u8),
    #[error("invalid threshold profile: {0}")]
    InvalidThresholds(String),
}

/// Epithelial volume fractions. Sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub pct_benign: f64,
    pub pct_g3: f64,
    pub pct_g4: f64,
    pub pct_g5: f64,
}

impl VolumeProfile {
    pub fn new(pct_benign: f64, pct_g3: f64, pct_g4: f64, pct_g5: f64) -> Result<Self, GradingError> {
        let p = VolumeProfile { pct_benign, pct_g3, pct_g4, pct_g5 };
        let parts = p.as_array();
        if parts.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + SUM_TOLERANCE) {
            return Err(GradingError::InvalidProfile(format!("{parts:?} has a component outside [0, 1]")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(GradingError::InvalidProfile(format!("components sum to {sum}")));
        }
        Ok(p)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.pct_benign, self.pct_g3, self.pct_g4, self.pct_g5]
    }

    /// Fraction for Gleason pattern 3, 4 or 5.
    pub fn grade_fraction(&self, grade: u8) -> f64 {
        match grade {
            3 => self.pct_g3,
            4 => self.pct_g4,
            5 => self.pct_g5,
            _ => 0.0,
        }
    }

    pub fn tumor_fraction(&self) -> f64 {
        self.pct_g3 + self.pct_g4 + self.pct_g5
    }
}

/// Normalises tumor and benign areas over the epithelium. Background,
/// non-epithelial tissue and hard negatives are excluded.
pub fn volume_profile(areas: &ClassAreas) -> Result<VolumeProfile, GradingError> {
    let total = areas.epithelial_total();
    if total == 0 {
        return Err(GradingError::NoEpithelium);
    }
    let t = total as f64;
    Ok(VolumeProfile {
        pct_benign: areas.get(TissueClass::BenignEpithelium) as f64 / t,
        pct_g3: areas.get(TissueClass::Gleason3) as f64 / t,
        pct_g4: areas.get(TissueClass::Gleason4) as f64 / t,
        pct_g5: areas.get(TissueClass::Gleason5) as f64 / t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GleasonScore {
    pub primary: u8,
    pub secondary: u8,
    pub tertiary: Option<u8>,
}

impl GleasonScore {
    pub fn new(primary: u8, secondary: u8, tertiary: Option<u8>) -> Result<Self, GradingError> {
        let valid = |g: u8| (3..=5).contains(&g);
        let ok =
            valid(primary) && valid(secondary) && tertiary.is_none_or(|t| valid(t) && t != primary && t != secondary);
        if !ok {
            return Err(GradingError::InvalidScore(format!("{primary}+{secondary} (tertiary {tertiary:?})")));
        }
        Ok(GleasonScore { primary, secondary, tertiary })
    }

    pub fn pure(grade: u8) -> Result<Self, GradingError> {
        Self::new(grade, grade, None)
    }

    pub fn is_pure(&self) -> bool {
        self.primary == self.secondary && self.tertiary.is_none()
    }

    pub fn sum(&self) -> u8 {
        self.primary + self.secondary
    }

    /// Primary and secondary, ignoring the tertiary pattern.
    pub fn pattern_pair(&self) -> (u8, u8) {
        (self.primary, self.secondary)
    }

    /// Distinct grades named anywhere in the score.
    pub fn grades(&self) -> Vec<u8> {
        let mut g = vec![self.primary, self.secondary];
        g.extend(self.tertiary);
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn grade_group(&self) -> GradeGroup {
        score_to_grade_group(self)
    }
}

impl fmt::Display for GleasonScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.primary, self.secondary)?;
        if let Some(t) = self.tertiary {
            write!(f, " (tertiary {t})")?;
        }
        Ok(())
    }
}

/// ISUP grade group 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GradeGroup(u8);

impl GradeGroup {
    pub fn new(value: u8) -> Result<Self, GradingError> {
        if (1..=5).contains(&value) {
            Ok(GradeGroup(value))
        } else {
            Err(GradingError::InvalidGradeGroup(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for GradeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GG{}", self.0)
    }
}

/// 3+3 → 1, 3+4 → 2, 4+3 → 3, 3+5 / 5+3 / 4+4 → 4, everything higher → 5.
pub fn score_to_grade_group(s: &GleasonScore) -> GradeGroup {
    let group = match (s.primary, s.secondary) {
        (p, q) if p + q <= 6 => 1,
        (3, 4) => 2,
        (4, 3) => 3,
        (3, 5) | (5, 3) | (4, 4) => 4,
        _ => 5,
    };
    GradeGroup(group)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Benign,
    Malignant { score: GleasonScore, grade_group: GradeGroup },
}

impl Verdict {
    pub fn malignant(score: GleasonScore) -> Self {
        Verdict::Malignant { score, grade_group: score_to_grade_group(&score) }
    }

    /// Ordinal category: 0 for benign, otherwise the grade group.
    pub fn category(&self) -> u8 {
        match self {
            Verdict::Benign => 0,
            Verdict::Malignant { grade_group, .. } => grade_group.value(),
        }
    }

    pub fn is_malignant(&self) -> bool {
        matches!(self, Verdict::Malignant { .. })
    }

    pub fn score(&self) -> Option<GleasonScore> {
        match self {
            Verdict::Benign => None,
            Verdict::Malignant { score, .. } => Some(*score),
        }
    }

    pub fn grade_group(&self) -> Option<GradeGroup> {
        match self {
            Verdict::Benign => None,
            Verdict::Malignant { grade_group, .. } => Some(*grade_group),
        }
    }

    /// Position on the Gleason-score scale [`SCORE_SCALE`]: 0 for benign,
    /// then scores ordered by sum and primary pattern.
    pub fn score_category(&self) -> u8 {
        match self {
            Verdict::Benign => 0,
            Verdict::Malignant { score, .. } => {
                let pair = score.pattern_pair();
                SCORE_SCALE.iter().position(|p| *p == pair).expect("valid score on scale") as u8 + 1
            }
        }
    }
}

/// Malignant (primary, secondary) pairs in ordinal order.
pub const SCORE_SCALE: [(u8, u8); 9] = [(3, 3), (3, 4), (4, 3), (3, 5), (4, 4), (5, 3), (4, 5), (5, 4), (5, 5)];

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Benign => f.write_str("benign"),
            Verdict::Malignant { score, grade_group } => write!(f, "{score} {grade_group}"),
        }
    }
}

/// Continuous scores for ROC analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScores {
    /// Tumor fraction of the epithelium.
    pub malignancy_score: f64,
    /// Fraction of the epithelium in pattern 4 or 5.
    pub aggressiveness_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub verdict: Verdict,
    pub profile: VolumeProfile,
    pub tumor_fraction: f64,
    pub risk_scores: RiskScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Most common pattern plus the highest other pattern.
    #[serde(alias = "BiopsyHighest")]
    BiopsyHighest,
    /// The two most common patterns.
    #[serde(alias = "ProstatectomyMostCommon")]
    ProstatectomyMostCommon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdProfile {
    /// Below this tumor fraction a biopsy is benign.
    pub tumor_threshold: f64,
    /// Minimum fraction for a second pattern to enter the score.
    pub secondary_threshold: f64,
    /// Minimum fraction for a higher tertiary pattern to replace the secondary.
    pub tertiary_floor: f64,
    pub scoring_mode: ScoringMode,
}

impl ThresholdProfile {
    pub fn biopsy() -> Self {
        ThresholdProfile {
            tumor_threshold: 0.10,
            secondary_threshold: 0.07,
            tertiary_floor: 0.01,
            scoring_mode: ScoringMode::BiopsyHighest,
        }
    }

    pub fn tma() -> Self {
        ThresholdProfile {
            tumor_threshold: 0.01,
            secondary_threshold: 0.02,
            tertiary_floor: 0.0,
            scoring_mode: ScoringMode::ProstatectomyMostCommon,
        }
    }

    pub fn validate(&self) -> Result<(), GradingError> {
        let in_unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !(in_unit(self.tumor_threshold) && in_unit(self.secondary_threshold) && in_unit(self.tertiary_floor)) {
            return Err(GradingError::InvalidThresholds("fractions must lie in [0, 1]".into()));
        }
        if self.tumor_threshold <= 0.0 {
            return Err(GradingError::InvalidThresholds("tumor_threshold must be positive".into()));
        }
        if self.tertiary_floor > self.secondary_threshold {
            return Err(GradingError::InvalidThresholds("tertiary_floor exceeds secondary_threshold".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GradingError> {
        let p: ThresholdProfile =
            serde_json::from_str(text).map_err(|e| GradingError::InvalidThresholds(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// `biopsy`, `tma`, or a path to a JSON profile.
    pub fn resolve(spec: &str) -> Result<Self, GradingError> {
        match spec {
            "biopsy" => Ok(Self::biopsy()),
            "tma" => Ok(Self::tma()),
            path => {
                let text = std::fs::read_to_string(Path::new(path))
                    .map_err(|e| GradingError::InvalidThresholds(format!("{path}: {e}")))?;
                Self::from_json(&text)
            }
        }
    }
}

impl Default for ThresholdProfile {
    fn default() -> Self {
        Self::biopsy()
    }
}

fn reaches(fraction: f64, threshold: f64) -> bool {
    fraction + THRESHOLD_TOLERANCE >= threshold
}

/// Pattern grades by decreasing fraction; equal fractions put the higher
/// grade first.
fn ranked(p: &VolumeProfile) -> [(u8, f64); 3] {
    let mut r = [(3, p.pct_g3), (4, p.pct_g4), (5, p.pct_g5)];
    r.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0)));
    r
}

fn biopsy_score(p: &VolumeProfile, t: &ThresholdProfile) -> GleasonScore {
    let order = ranked(p);
    let primary = order[0].0;
    let others = || order[1..].iter().filter(|(_, f)| *f > 0.0);
    let has_secondary = others().any(|&(_, f)| reaches(f, t.secondary_threshold));
    if !has_secondary {
        return GleasonScore { primary, secondary: primary, tertiary: None };
    }
    // with a qualifying secondary, any higher pattern above the tertiary
    // floor takes the secondary slot
    let secondary = others()
        .filter(|&&(_, f)| reaches(f, t.tertiary_floor))
        .map(|&(g, _)| g)
        .max()
        .expect("qualifying secondary is above the tertiary floor");
    GleasonScore { primary, secondary, tertiary: None }
}

fn prostatectomy_score(p: &VolumeProfile, t: &ThresholdProfile) -> GleasonScore {
    let order = ranked(p);
    let primary = order[0].0;
    let (g2, f2) = order[1];
    let secondary = if f2 > 0.0 && reaches(f2, t.secondary_threshold) { g2 } else { primary };
    let top = primary.max(secondary);
    let tertiary = order
        .iter()
        .filter(|&&(g, f)| g != primary && g != secondary && g > top && f > 0.0 && reaches(f, t.tertiary_floor))
        .map(|&(g, _)| g)
        .max();
    GleasonScore { primary, secondary, tertiary }
}

pub fn diagnose(p: &VolumeProfile, profile: &ThresholdProfile) -> Diagnosis {
    let tumor_fraction = p.tumor_fraction();
    let risk_scores = RiskScores { malignancy_score: tumor_fraction, aggressiveness_score: p.pct_g4 + p.pct_g5 };
    let benign = tumor_fraction <= 0.0 || !reaches(tumor_fraction, profile.tumor_threshold);
    let verdict = if benign {
        Verdict::Benign
    } else {
        let score = match profile.scoring_mode {
            ScoringMode::BiopsyHighest => biopsy_score(p, profile),
            ScoringMode::ProstatectomyMostCommon => prostatectomy_score(p, profile),
        };
        Verdict::malignant(score)
    };
    Diagnosis { verdict, profile: *p, tumor_fraction, risk_scores }
}

pub fn diagnose_areas(areas: &ClassAreas, profile: &ThresholdProfile) -> Result<Diagnosis, GradingError> {
    Ok(diagnose(&volume_profile(areas)?, profile))
}

/// Class areas, volume profile and threshold rules in one call.
pub fn grade_mask(m: &LabelMask, profile: &ThresholdProfile) -> Result<Diagnosis, GradingError> {
    diagnose_areas(&m.class_areas(), profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vp(b: f64, g3: f64, g4: f64, g5: f64) -> VolumeProfile {
        VolumeProfile::new(b, g3, g4, g5).unwrap()
    }

    fn score(d: &Diagnosis) -> (u8, u8, u8) {
        match d.verdict {
            Verdict::Malignant { score, grade_group } => (score.primary, score.secondary, grade_group.value()),
            Verdict::Benign => (0, 0, 0),
        }
    }

    fn areas(pairs: &[(TissueClass, u64)]) -> ClassAreas {
        let mut a = ClassAreas::new();
        for (c, n) in pairs {
            a.add(*c, *n);
        }
        a
    }

    #[test]
    fn normalises_over_epithelium() {
        use TissueClass::*;
        let p = volume_profile(&areas(&[(BenignEpithelium, 50), (Gleason3, 30), (Gleason4, 20)])).unwrap();
        assert_eq!(p.as_array(), [0.5, 0.3, 0.2, 0.0]);
        let p = volume_profile(&areas(&[(BenignEpithelium, 10), (Background, 990)])).unwrap();
        assert_eq!(p.as_array(), [1.0, 0.0, 0.0, 0.0]);
        let p = volume_profile(&areas(&[(Gleason4, 10), (HardNegative, 30), (NonEpithelialTissue, 5)])).unwrap();
        assert_eq!(p.as_array(), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(volume_profile(&areas(&[(Background, 100)])), Err(GradingError::NoEpithelium));
    }

    #[test]
    fn grade_group_examples() {
        let gg = |p, s| score_to_grade_group(&GleasonScore::new(p, s, None).unwrap()).value();
        assert_eq!(gg(3, 3), 1);
        assert_eq!(gg(4, 3), 3);
        assert_eq!(gg(5, 3), 4);
        assert_eq!(gg(5, 4), 5);
    }

    #[test]
    fn biopsy_examples() {
        let b = ThresholdProfile::biopsy();
        let d = diagnose(&vp(0.95, 0.05, 0.0, 0.0), &b);
        assert_eq!(d.verdict, Verdict::Benign);
        assert!((d.tumor_fraction - 0.05).abs() < 1e-15);
        assert_eq!(score(&diagnose(&vp(0.20, 0.48, 0.32, 0.0), &b)), (3, 4, 2));
        assert_eq!(score(&diagnose(&vp(0.05, 0.90, 0.05, 0.0), &b)), (3, 3, 1));
        assert_eq!(score(&diagnose(&vp(0.0, 0.55, 0.42, 0.03), &b)), (3, 5, 4));
    }

    #[test]
    fn tma_example() {
        let d = diagnose(&vp(0.985, 0.005, 0.01, 0.0), &ThresholdProfile::tma());
        assert_eq!(score(&d), (4, 4, 4));
    }

    #[test]
    fn threshold_is_inclusive() {
        let b = ThresholdProfile::biopsy();
        assert!(diagnose(&vp(0.90, 0.10, 0.0, 0.0), &b).verdict.is_malignant());
        assert!(!diagnose(&vp(0.9000001, 0.0999999, 0.0, 0.0), &b).verdict.is_malignant());
        // secondary at exactly 7 %
        assert_eq!(score(&diagnose(&vp(0.0, 0.93, 0.07, 0.0), &b)), (3, 4, 2));
    }

    #[test]
    fn primary_tie_takes_higher_grade() {
        let b = ThresholdProfile::biopsy();
        assert_eq!(score(&diagnose(&vp(0.0, 0.5, 0.5, 0.0), &b)), (4, 3, 3));
        let t = ThresholdProfile::tma();
        assert_eq!(score(&diagnose(&vp(0.0, 0.0, 0.5, 0.5), &t)), (5, 4, 5));
    }

    #[test]
    fn prostatectomy_ignores_tertiary_for_grading() {
        let t = ThresholdProfile::tma();
        let d = diagnose(&vp(0.0, 0.6, 0.3, 0.1), &t);
        assert_eq!(score(&d), (3, 4, 2));
        assert_eq!(d.verdict.score().unwrap().tertiary, Some(5));
        // biopsy rule substitutes the same pattern
        assert_eq!(score(&diagnose(&vp(0.0, 0.6, 0.3, 0.1), &ThresholdProfile::biopsy())), (3, 5, 4));
    }

    #[test]
    fn risk_scores() {
        let d = diagnose(&vp(0.5, 0.2, 0.2, 0.1), &ThresholdProfile::biopsy());
        assert!((d.risk_scores.malignancy_score - 0.5).abs() < 1e-12);
        assert!((d.risk_scores.aggressiveness_score - 0.3).abs() < 1e-12);
    }

    #[test]
    fn profile_json() {
        let p = ThresholdProfile::from_json(
            r#"{"tumor_threshold":0.1,"secondary_threshold":0.07,"tertiary_floor":0.01,"scoring_mode":"biopsy_highest"}"#,
        )
        .unwrap();
        assert_eq!(p, ThresholdProfile::biopsy());
        let p = ThresholdProfile::from_json(
            r#"{"tumor_threshold":0.01,"secondary_threshold":0.02,"tertiary_floor":0.0,"scoring_mode":"ProstatectomyMostCommon"}"#,
        )
        .unwrap();
        assert_eq!(p, ThresholdProfile::tma());
        assert!(ThresholdProfile::from_json(
            r#"{"tumor_threshold":0.1,"secondary_threshold":0.01,"tertiary_floor":0.05,"scoring_mode":"biopsy_highest"}"#
        )
        .is_err());
    }

    #[test]
    fn score_validation() {
        assert!(GleasonScore::new(2, 3, None).is_err());
        assert!(GleasonScore::new(3, 4, Some(4)).is_err());
        assert!(GleasonScore::new(3, 4, Some(5)).is_ok());
    }

    #[test]
    fn grade_mask_composes() {
        let m = LabelMask::filled(4, 4, 1.0, TissueClass::BenignEpithelium).unwrap();
        assert_eq!(grade_mask(&m, &ThresholdProfile::biopsy()).unwrap().verdict, Verdict::Benign);
        let m = LabelMask::filled(4, 4, 1.0, TissueClass::Background).unwrap();
        assert_eq!(grade_mask(&m, &ThresholdProfile::biopsy()), Err(GradingError::NoEpithelium));
    }
}
