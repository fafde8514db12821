//! Gleason grading engine.
//!
//! Converts pixel-labelled prostate biopsy masks into Gleason scores and
//! grade groups, rebuilds training labels from upstream segmentations,
//! runs the three-round expert consensus protocol over recorded reads and
//! evaluates graders with agreement, ROC and permutation statistics.

pub mod cli;
pub mod consensus;
pub mod grading;
pub mod labelgen;
pub mod raster;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;

pub use grading::{
    diagnose, grade_mask, score_to_grade_group, Diagnosis, GleasonScore, GradeGroup, ThresholdProfile, Verdict,
    VolumeProfile,
};
pub use raster::{ClassAreas, LabelMask, TissueClass};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
