//! Training-label construction from upstream segmentations and report labels.
//!
//! Upstream tissue, tumor and epithelium masks are binary: any class other
//! than background counts as "on".

use crate::grading::{GleasonScore, Verdict};
use crate::raster::{label_glands, relabel_components, zip_map, Connectivity, LabelMask, RasterError, TissueClass};
use crate::stats::{self, OrdinalScale, StatsError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelgenError {
    #[error("report score {0} is not pure")]
    MixedScoreUnsupported(GleasonScore),
    #[error("segmenter output is required")]
    MissingSegmenterOutput,
    #[error("report of case {0} is not negative")]
    NotANegativeCase(String),
    #[error("report of case {0} carries no Gleason score")]
    NotAScoredCase(String),
    #[error("case sets differ: {0}")]
    CaseSetMismatch(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportVerdict {
    Negative,
    Score(GleasonScore),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportLabel {
    pub case_id: String,
    pub verdict: ReportVerdict,
}

impl ReportLabel {
    /// The diagnosis the report implies.
    pub fn as_verdict(&self) -> Verdict {
        match self.verdict {
            ReportVerdict::Negative => Verdict::Benign,
            ReportVerdict::Score(s) => Verdict::malignant(s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpstreamMasks {
    pub tissue: LabelMask,
    pub tumor: LabelMask,
    pub epithelium: LabelMask,
    pub segmenter_output: Option<LabelMask>,
}

impl UpstreamMasks {
    pub fn new(
        tissue: LabelMask,
        tumor: LabelMask,
        epithelium: LabelMask,
        segmenter_output: Option<LabelMask>,
    ) -> Result<Self, LabelgenError> {
        let shape = tissue.shape();
        for m in [&tumor, &epithelium].into_iter().chain(segmenter_output.as_ref()) {
            if m.shape() != shape {
                return Err(RasterError::ShapeMismatch { left: shape, right: m.shape() }.into());
            }
        }
        Ok(UpstreamMasks { tissue, tumor, epithelium, segmenter_output })
    }
}

fn on(c: TissueClass) -> bool {
    c != TissueClass::Background
}

/// Labels epithelium from the masks, tumor epithelium with the report's
/// single grade.
pub fn compose_pure(u: &UpstreamMasks, r: &ReportLabel) -> Result<LabelMask, LabelgenError> {
    let tumor_class = match r.verdict {
        ReportVerdict::Negative => TissueClass::BenignEpithelium,
        ReportVerdict::Score(s) if s.is_pure() => TissueClass::from_grade(s.primary).expect("valid grade"),
        ReportVerdict::Score(s) => return Err(LabelgenError::MixedScoreUnsupported(s)),
    };
    let out = zip_map(&[&u.tissue, &u.tumor, &u.epithelium], |c| match (on(c[0]), on(c[1]), on(c[2])) {
        (_, true, true) => tumor_class,
        (_, false, true) => TissueClass::BenignEpithelium,
        (true, _, false) => TissueClass::NonEpithelialTissue,
        (false, _, false) => TissueClass::Background,
    })?;
    Ok(out)
}

/// Nearest of `present` to `grade`, ties toward the lower grade.
fn nearest_grade(grade: u8, present: &[u8]) -> u8 {
    *present.iter().min_by_key(|&&g| ((g as i16 - grade as i16).abs(), g)).expect("score names at least one grade")
}

/// One class per gland of the segmenter output: the gland's modal class, or
/// the nearest reported grade when the modal grade is not in the report.
/// Glands voted hard-negative become benign.
pub fn refine_mixed(
    u: &UpstreamMasks,
    r: &ReportLabel,
    connectivity: Connectivity,
) -> Result<LabelMask, LabelgenError> {
    let score = match r.verdict {
        ReportVerdict::Score(s) => s,
        ReportVerdict::Negative => return Err(LabelgenError::NotAScoredCase(r.case_id.clone())),
    };
    let seg = u.segmenter_output.as_ref().ok_or(LabelgenError::MissingSegmenterOutput)?;
    let present = score.grades();
    let glands = label_glands(seg, connectivity);
    let assignment: BTreeMap<u32, TissueClass> = glands
        .components
        .iter()
        .map(|c| {
            let class = match c.class.grade() {
                Some(g) => TissueClass::from_grade(nearest_grade(g, &present)).expect("valid grade"),
                None => TissueClass::BenignEpithelium,
            };
            (c.id, class)
        })
        .collect();
    Ok(relabel_components(seg, &glands, &assignment)?)
}

/// For negative biopsies: every pixel the segmenter graded as tumor becomes
/// hard-negative, all other epithelium benign.
pub fn mine_hard_negatives(u: &UpstreamMasks, r: &ReportLabel) -> Result<LabelMask, LabelgenError> {
    if r.verdict != ReportVerdict::Negative {
        return Err(LabelgenError::NotANegativeCase(r.case_id.clone()));
    }
    let seg = u.segmenter_output.as_ref().ok_or(LabelgenError::MissingSegmenterOutput)?;
    Ok(seg.map_classes(|c| {
        if c.is_tumor() {
            TissueClass::HardNegative
        } else if c.is_glandular() {
            TissueClass::BenignEpithelium
        } else {
            c
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelQuality {
    pub cases: usize,
    pub score_accuracy: f64,
    /// `None` when the marginals leave kappa undefined.
    pub score_kappa: Option<f64>,
    pub grade_group_accuracy: f64,
    pub grade_group_kappa: Option<f64>,
}

fn kappa_or_none(reference: &[u8], labels: &[u8], scale: &OrdinalScale<u8>) -> Result<Option<f64>, StatsError> {
    match stats::quadratic_kappa(reference, labels, scale) {
        Ok(k) => Ok(Some(k)),
        Err(StatsError::DegenerateMarginals) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Agreement of automatically retrieved labels with a reference, on the
/// Gleason-score scale and on the grade-group scale.
pub fn label_quality(
    auto: &BTreeMap<String, Verdict>,
    reference: &BTreeMap<String, Verdict>,
) -> Result<LabelQuality, LabelgenError> {
    if let Some(id) = auto.keys().find(|k| !reference.contains_key(*k)) {
        return Err(LabelgenError::CaseSetMismatch(format!("{id} has no reference")));
    }
    if let Some(id) = reference.keys().find(|k| !auto.contains_key(*k)) {
        return Err(LabelgenError::CaseSetMismatch(format!("{id} has no label")));
    }
    let pairs: Vec<(&Verdict, &Verdict)> = reference.iter().map(|(k, v)| (v, &auto[k])).collect();
    let ref_scores: Vec<u8> = pairs.iter().map(|p| p.0.score_category()).collect();
    let auto_scores: Vec<u8> = pairs.iter().map(|p| p.1.score_category()).collect();
    let ref_gg: Vec<u8> = pairs.iter().map(|p| p.0.category()).collect();
    let auto_gg: Vec<u8> = pairs.iter().map(|p| p.1.category()).collect();
    Ok(LabelQuality {
        cases: pairs.len(),
        score_accuracy: stats::accuracy(&ref_scores, &auto_scores)?,
        score_kappa: kappa_or_none(&ref_scores, &auto_scores, &OrdinalScale::gleason_scores())?,
        grade_group_accuracy: stats::accuracy(&ref_gg, &auto_gg)?,
        grade_group_kappa: kappa_or_none(&ref_gg, &auto_gg, &OrdinalScale::grade_groups())?,
    })
}
