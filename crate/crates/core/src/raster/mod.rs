//! Run-length encoded tissue label masks.
//!
//! A [`LabelMask`] stores one canonical run list per row: run lengths sum to
//! the mask width and no two neighbouring runs carry the same class, so two
//! masks holding the same pixels are structurally equal. Everything in this
//! module works on runs directly; the only place a full pixel grid is
//! materialised is [`LabelMask::decode`] and the [`dense`] small-path.

mod components;
pub mod dense;
pub mod pgm;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub use components::{
    connected_components, label_glands, majority_vote, relabel_components, BoundingBox, Component, Connectivity,
    GlandLabeling,
};

/// Default height of a row band for tiled processing.
pub const DEFAULT_BAND_HEIGHT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid class code {code} at pixel index {index}")]
    InvalidClassCode { index: u64, code: u8 },
    #[error("empty grid")]
    EmptyGrid,
    #[error("buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: u64, actual: u64 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("row {row} covers {covered} pixels, mask width is {width}")]
    RowWidth { row: u32, covered: u64, width: u32 },
    #[error("gland labeling covers {labeled} runs, mask has {runs}")]
    LabelingMismatch { runs: usize, labeled: usize },
    #[error("no class assignment for component {0}")]
    MissingAssignment(u32),
    #[error("invalid pixel spacing {0}")]
    InvalidSpacing(f64),
}

/// Tissue class stored per pixel. The discriminant is the on-disk byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum TissueClass {
    Background = 0,
    NonEpithelialTissue = 1,
    BenignEpithelium = 2,
    Gleason3 = 3,
    Gleason4 = 4,
    Gleason5 = 5,
    HardNegative = 6,
}

impl TissueClass {
    pub const COUNT: usize = 7;

    pub const ALL: [TissueClass; Self::COUNT] = [
        TissueClass::Background,
        TissueClass::NonEpithelialTissue,
        TissueClass::BenignEpithelium,
        TissueClass::Gleason3,
        TissueClass::Gleason4,
        TissueClass::Gleason5,
        TissueClass::HardNegative,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Benign epithelium or a Gleason pattern: the volume denominator.
    pub fn is_epithelial(self) -> bool {
        matches!(
            self,
            TissueClass::BenignEpithelium | TissueClass::Gleason3 | TissueClass::Gleason4 | TissueClass::Gleason5
        )
    }

    pub fn is_tumor(self) -> bool {
        self.grade().is_some()
    }

    /// Classes that take part in connected-component analysis.
    pub fn is_glandular(self) -> bool {
        !matches!(self, TissueClass::Background | TissueClass::NonEpithelialTissue)
    }

    pub fn grade(self) -> Option<u8> {
        match self {
            TissueClass::Gleason3 => Some(3),
            TissueClass::Gleason4 => Some(4),
            TissueClass::Gleason5 => Some(5),
            _ => None,
        }
    }

    pub fn from_grade(grade: u8) -> Option<Self> {
        match grade {
            3 => Some(TissueClass::Gleason3),
            4 => Some(TissueClass::Gleason4),
            5 => Some(TissueClass::Gleason5),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TissueClass::Background => "background",
            TissueClass::NonEpithelialTissue => "non_epithelial",
            TissueClass::BenignEpithelium => "benign",
            TissueClass::Gleason3 => "gleason3",
            TissueClass::Gleason4 => "gleason4",
            TissueClass::Gleason5 => "gleason5",
            TissueClass::HardNegative => "hard_negative",
        }
    }
}

impl fmt::Display for TissueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A horizontal run of identically labelled pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Run {
    pub class: TissueClass,
    pub len: u32,
}

impl Run {
    pub fn new(class: TissueClass, len: u32) -> Self {
        Run { class, len }
    }
}

/// Pixel counts per tissue class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassAreas {
    counts: [u64; TissueClass::COUNT],
}

impl ClassAreas {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [u64; TissueClass::COUNT]) -> Self {
        ClassAreas { counts }
    }

    pub fn get(&self, class: TissueClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn add(&mut self, class: TissueClass, count: u64) {
        self.counts[class.index()] += count;
    }

    pub fn merge(&mut self, other: &ClassAreas) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += *b;
        }
    }

    pub fn counts(&self) -> &[u64; TissueClass::COUNT] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn epithelial_total(&self) -> u64 {
        TissueClass::ALL.iter().filter(|c| c.is_epithelial()).map(|c| self.get(*c)).sum()
    }

    /// Multiplies every count by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        let mut counts = self.counts;
        for c in counts.iter_mut() {
            *c *= factor;
        }
        ClassAreas { counts }
    }
}

/// Builds a canonical [`LabelMask`] one row at a time.
#[derive(Debug)]
pub struct MaskBuilder {
    width: u32,
    spacing: f64,
    runs: Vec<Run>,
    row_starts: Vec<usize>,
}

impl MaskBuilder {
    pub fn new(width: u32, spacing: f64) -> Self {
        MaskBuilder { width, spacing, runs: Vec::new(), row_starts: vec![0] }
    }

    pub fn rows(&self) -> u32 {
        (self.row_starts.len() - 1) as u32
    }

    /// Appends a row of raw class bytes. `first_index` is the linear pixel
    /// index of the row's first byte, used for error reporting.
    pub fn push_raw_row(&mut self, row: &[u8], first_index: u64) -> Result<(), RasterError> {
        if row.len() != self.width as usize {
            return Err(RasterError::RowWidth { row: self.rows(), covered: row.len() as u64, width: self.width });
        }
        let start = self.runs.len();
        let mut current: Option<Run> = None;
        for (x, &code) in row.iter().enumerate() {
            let class = TissueClass::from_code(code)
                .ok_or(RasterError::InvalidClassCode { index: first_index + x as u64, code })?;
            match current.as_mut() {
                Some(run) if run.class == class => run.len += 1,
                _ => {
                    if let Some(run) = current.take() {
                        self.runs.push(run);
                    }
                    current = Some(Run::new(class, 1));
                }
            }
        }
        if let Some(run) = current {
            self.runs.push(run);
        }
        debug_assert!(self.runs.len() > start);
        self.row_starts.push(self.runs.len());
        Ok(())
    }

    /// Appends a row given as runs; adjacent equal classes and zero-length
    /// runs are normalised away.
    pub fn push_runs<I>(&mut self, runs: I) -> Result<(), RasterError>
    where
        I: IntoIterator<Item = Run>,
    {
        let start = self.runs.len();
        let mut covered: u64 = 0;
        for run in runs {
            if run.len == 0 {
                continue;
            }
            covered += run.len as u64;
            if self.runs.len() > start {
                let last = self.runs.last_mut().expect("row has a run");
                if last.class == run.class {
                    last.len += run.len;
                    continue;
                }
            }
            self.runs.push(run);
        }
        if covered != self.width as u64 {
            self.runs.truncate(start);
            return Err(RasterError::RowWidth { row: self.rows(), covered, width: self.width });
        }
        self.row_starts.push(self.runs.len());
        Ok(())
    }

    pub fn finish(self) -> Result<LabelMask, RasterError> {
        if self.width == 0 || self.rows() == 0 {
            return Err(RasterError::EmptyGrid);
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(RasterError::InvalidSpacing(self.spacing));
        }
        Ok(LabelMask {
            width: self.width,
            height: self.rows(),
            spacing: self.spacing,
            runs: self.runs,
            row_starts: self.row_starts,
        })
    }
}

/// A 2-D tissue label raster stored as canonical per-row runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    spacing: f64,
    runs: Vec<Run>,
    row_starts: Vec<usize>,
}

/// Encodes a row-major byte grid into a canonical mask.
pub fn encode_mask(raw: &[u8], width: u32, height: u32, spacing: f64) -> Result<LabelMask, RasterError> {
    LabelMask::encode(raw, width, height, spacing)
}

impl LabelMask {
    pub fn encode(raw: &[u8], width: u32, height: u32, spacing: f64) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyGrid);
        }
        let expected = width as u64 * height as u64;
        if raw.len() as u64 != expected {
            return Err(RasterError::BufferSize { expected, actual: raw.len() as u64 });
        }
        let mut builder = MaskBuilder::new(width, spacing);
        for (y, row) in raw.chunks_exact(width as usize).enumerate() {
            builder.push_raw_row(row, y as u64 * width as u64)?;
        }
        builder.finish()
    }

    /// A mask filled with a single class.
    pub fn filled(width: u32, height: u32, spacing: f64, class: TissueClass) -> Result<Self, RasterError> {
        let mut builder = MaskBuilder::new(width, spacing);
        for _ in 0..height {
            builder.push_runs([Run::new(class, width)])?;
        }
        builder.finish()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn shape(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Micrometres per pixel.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    pub fn row(&self, y: u32) -> &[Run] {
        let y = y as usize;
        &self.runs[self.row_starts[y]..self.row_starts[y + 1]]
    }

    /// Global index of the first run of row `y`.
    pub fn row_offset(&self, y: u32) -> usize {
        self.row_starts[y as usize]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Run]> + '_ {
        (0..self.height).map(move |y| self.row(y))
    }

    pub fn decode_row_into(&self, y: u32, out: &mut Vec<u8>) {
        for run in self.row(y) {
            out.extend(std::iter::repeat_n(run.class.code(), run.len as usize));
        }
    }

    /// Expands the mask into a row-major byte grid.
    pub fn decode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixel_count() as usize);
        for y in 0..self.height {
            self.decode_row_into(y, &mut out);
        }
        out
    }

    pub fn get(&self, x: u32, y: u32) -> TissueClass {
        let mut start = 0u32;
        for run in self.row(y) {
            if x < start + run.len {
                return run.class;
            }
            start += run.len;
        }
        panic!("pixel ({x}, {y}) outside mask of width {}", self.width);
    }

    /// Row bands of at most `band_height` rows, top to bottom.
    pub fn bands(&self, band_height: usize) -> impl Iterator<Item = Band<'_>> + '_ {
        let band_height = band_height.max(1) as u32;
        (0..self.height).step_by(band_height as usize).map(move |y0| Band {
            mask: self,
            y0,
            y1: (y0 + band_height).min(self.height),
        })
    }

    pub fn class_areas(&self) -> ClassAreas {
        let mut areas = ClassAreas::new();
        for run in &self.runs {
            areas.add(run.class, run.len as u64);
        }
        areas
    }

    /// Class areas accumulated band by band.
    pub fn class_areas_tiled(&self, band_height: usize) -> ClassAreas {
        self.bands(band_height).fold(ClassAreas::new(), |mut acc, band| {
            acc.merge(&band.class_areas());
            acc
        })
    }

    /// Applies a per-class mapping run by run, keeping the encoding canonical.
    pub fn map_classes(&self, mut f: impl FnMut(TissueClass) -> TissueClass) -> LabelMask {
        let mut builder = MaskBuilder::new(self.width, self.spacing);
        for row in self.rows() {
            builder.push_runs(row.iter().map(|r| Run::new(f(r.class), r.len))).expect("mapping preserves row width");
        }
        builder.finish().expect("mapped mask has the source shape")
    }

    /// Nearest-neighbour downsampling keeping every `factor`-th pixel.
    pub fn downsample(&self, factor: u32) -> LabelMask {
        let factor = factor.max(1);
        let width = self.width.div_ceil(factor);
        let mut builder = MaskBuilder::new(width, self.spacing * factor as f64);
        for y in (0..self.height).step_by(factor as usize) {
            let mut out = Vec::new();
            let mut x0 = 0u32;
            let mut next = 0u32;
            for run in self.row(y) {
                let x1 = x0 + run.len;
                let mut n = 0u32;
                while next < x1 {
                    n += 1;
                    next += factor;
                }
                if n > 0 {
                    out.push(Run::new(run.class, n));
                }
                x0 = x1;
            }
            builder.push_runs(out).expect("downsampled row width");
        }
        builder.finish().expect("downsampled mask is non-empty")
    }
}

/// A contiguous block of rows `y0..y1` of a mask.
#[derive(Debug, Clone, Copy)]
pub struct Band<'a> {
    mask: &'a LabelMask,
    pub y0: u32,
    pub y1: u32,
}

impl<'a> Band<'a> {
    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [Run]> + 'a {
        let mask = self.mask;
        (self.y0..self.y1).map(move |y| mask.row(y))
    }

    pub fn class_areas(&self) -> ClassAreas {
        let mut areas = ClassAreas::new();
        for row in self.rows() {
            for run in row {
                areas.add(run.class, run.len as u64);
            }
        }
        areas
    }

    pub fn decode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.mask.width as usize * self.height() as usize);
        for y in self.y0..self.y1 {
            self.mask.decode_row_into(y, &mut out);
        }
        out
    }
}

/// Pixels whose class fails `keep` become background.
pub fn mask_keep(m: &LabelMask, keep: impl Fn(TissueClass) -> bool) -> LabelMask {
    m.map_classes(|c| if keep(c) { c } else { TissueClass::Background })
}

/// Pixels of `m` whose counterpart in `gate` fails `keep` become background.
pub fn mask_and(m: &LabelMask, gate: &LabelMask, keep: impl Fn(TissueClass) -> bool) -> Result<LabelMask, RasterError> {
    zip_map(&[m, gate], |classes| if keep(classes[1]) { classes[0] } else { TissueClass::Background })
}

/// Combines equally shaped masks pixel by pixel, walking run boundaries
/// instead of pixels. `f` receives the classes of all inputs at a position.
pub fn zip_map(
    masks: &[&LabelMask],
    mut f: impl FnMut(&[TissueClass]) -> TissueClass,
) -> Result<LabelMask, RasterError> {
    let first = *masks.first().ok_or(RasterError::EmptyGrid)?;
    for m in &masks[1..] {
        if m.shape() != first.shape() {
            return Err(RasterError::ShapeMismatch { left: first.shape(), right: m.shape() });
        }
    }
    let mut builder = MaskBuilder::new(first.width, first.spacing);
    let mut idx = vec![0usize; masks.len()];
    let mut remaining = vec![0u32; masks.len()];
    let mut classes = vec![TissueClass::Background; masks.len()];
    let mut out = Vec::new();
    for y in 0..first.height {
        let rows: Vec<&[Run]> = masks.iter().map(|m| m.row(y)).collect();
        for (i, row) in rows.iter().enumerate() {
            idx[i] = 0;
            remaining[i] = row[0].len;
            classes[i] = row[0].class;
        }
        out.clear();
        let mut x = 0u32;
        while x < first.width {
            let step = *remaining.iter().min().expect("at least one mask");
            out.push(Run::new(f(&classes), step));
            x += step;
            if x == first.width {
                break;
            }
            for (i, row) in rows.iter().enumerate() {
                remaining[i] -= step;
                if remaining[i] == 0 {
                    idx[i] += 1;
                    remaining[i] = row[idx[i]].len;
                    classes[i] = row[idx[i]].class;
                }
            }
        }
        builder.push_runs(out.iter().copied())?;
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TissueClass::*;

    fn runs(row: &[Run]) -> Vec<(TissueClass, u32)> {
        row.iter().map(|r| (r.class, r.len)).collect()
    }

    #[test]
    fn encode_single_row() {
        let m = encode_mask(&[2, 2, 3, 3], 4, 1, 1.0).unwrap();
        assert_eq!(runs(m.row(0)), vec![(BenignEpithelium, 2), (Gleason3, 2)]);
    }

    #[test]
    fn encode_constant_grid() {
        let m = encode_mask(&[0, 0, 0, 0], 2, 2, 1.0).unwrap();
        assert_eq!(runs(m.row(0)), vec![(Background, 2)]);
        assert_eq!(runs(m.row(1)), vec![(Background, 2)]);
    }

    #[test]
    fn encode_rejects_unknown_code() {
        let err = encode_mask(&[2, 7, 2], 3, 1, 1.0).unwrap_err();
        assert_eq!(err, RasterError::InvalidClassCode { index: 1, code: 7 });
    }

    #[test]
    fn encode_rejects_empty() {
        assert_eq!(encode_mask(&[], 0, 0, 1.0).unwrap_err(), RasterError::EmptyGrid);
        assert_eq!(encode_mask(&[], 4, 0, 1.0).unwrap_err(), RasterError::EmptyGrid);
    }

    #[test]
    fn class_areas_by_inspection() {
        let m = encode_mask(&[2, 2, 3, 3], 4, 1, 1.0).unwrap();
        let a = m.class_areas();
        assert_eq!(a.get(BenignEpithelium), 2);
        assert_eq!(a.get(Gleason3), 2);
        assert_eq!(a.total(), 4);
        let bg = LabelMask::filled(10, 10, 1.0, Background).unwrap();
        assert_eq!(bg.class_areas().get(Background), 100);
    }

    #[test]
    fn keep_predicate() {
        let m = encode_mask(&[2, 3, 1, 3], 4, 1, 1.0).unwrap();
        let kept = mask_keep(&m, |c| c == Gleason3);
        assert_eq!(kept.decode(), vec![0, 3, 0, 3]);
        assert_eq!(mask_keep(&m, |_| true), m);
    }

    #[test]
    fn mask_and_shape_mismatch() {
        let a = LabelMask::filled(4, 2, 1.0, Gleason3).unwrap();
        let b = LabelMask::filled(2, 4, 1.0, Gleason3).unwrap();
        assert!(matches!(mask_and(&a, &b, |_| true), Err(RasterError::ShapeMismatch { .. })));
    }

    #[test]
    fn mask_and_gates_by_other_mask() {
        let tumor = encode_mask(&[4, 4, 4, 4], 4, 1, 1.0).unwrap();
        let tissue = encode_mask(&[2, 1, 2, 0], 4, 1, 1.0).unwrap();
        let out = mask_and(&tumor, &tissue, |c| c.is_epithelial()).unwrap();
        assert_eq!(out.decode(), vec![4, 0, 4, 0]);
    }

    #[test]
    fn downsample_picks_grid_pixels() {
        let raw: Vec<u8> = (0..36).map(|i| (i % 7) as u8).collect();
        let m = encode_mask(&raw, 6, 6, 0.5).unwrap();
        let d = m.downsample(4);
        assert_eq!(d.shape(), (2, 2));
        assert_eq!(d.decode(), vec![raw[0], raw[4], raw[24], raw[28]]);
        assert_eq!(d.spacing(), 2.0);
    }

    fn grid() -> impl Strategy<Value = (u32, u32, Vec<u8>)> {
        (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
            // few classes so runs are long enough to matter
            prop::collection::vec(prop::sample::select(vec![0u8, 2, 3, 3, 4, 6]), (w * h) as usize)
                .prop_map(move |v| (w, h, v))
        })
    }

    proptest! {
        #[test]
        fn roundtrip_and_canonical((w, h, raw) in grid()) {
            let m = encode_mask(&raw, w, h, 1.0).unwrap();
            prop_assert_eq!(m.decode(), raw);
            for row in m.rows() {
                prop_assert_eq!(row.iter().map(|r| r.len as u64).sum::<u64>(), w as u64);
                prop_assert!(row.windows(2).all(|p| p[0].class != p[1].class));
            }
        }

        #[test]
        fn areas_total_and_tiling((w, h, raw) in grid(), band in 1usize..9) {
            let m = encode_mask(&raw, w, h, 1.0).unwrap();
            let a = m.class_areas();
            prop_assert_eq!(a.total(), (w * h) as u64);
            prop_assert_eq!(m.class_areas_tiled(band), a);
        }

        #[test]
        fn keep_is_idempotent((w, h, raw) in grid()) {
            let m = encode_mask(&raw, w, h, 1.0).unwrap();
            let once = mask_keep(&m, |c| c.is_tumor());
            prop_assert_eq!(mask_keep(&once, |c| c.is_tumor()), once.clone());
            let gated = mask_and(&m, &m, |c| c != Gleason3).unwrap();
            prop_assert_eq!(mask_and(&gated, &m, |c| c != Gleason3).unwrap(), gated);
        }
    }
}
