//! Ground-truthed synthetic biopsies and a noisy segmenter stand-in.
//!
//! [`generate`] places non-overlapping elliptical glands on a rectangle of
//! non-epithelial tissue and assigns gland classes so the realised
//! epithelial fractions land within [`PROFILE_TOLERANCE`] of the target.
//! [`corrupt`] perturbs a mask gland by gland through a class confusion
//! matrix and optional boundary jitter.

use crate::grading::{diagnose, Diagnosis, GradingError, ThresholdProfile, VolumeProfile};
use crate::raster::{label_glands, Connectivity, LabelMask, MaskBuilder, Run, TissueClass};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum absolute deviation of a realised fraction from its target.
pub const PROFILE_TOLERANCE: f64 = 0.02;

const PLACEMENT_ATTEMPTS: usize = 1000;
/// Minimum empty pixels between gland bounding boxes.
const GLAND_GAP: i64 = 2;

const EPITHELIAL: [TissueClass; 4] =
    [TissueClass::BenignEpithelium, TissueClass::Gleason3, TissueClass::Gleason4, TissueClass::Gleason5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("could only place {placed} of {requested} glands")]
    PlacementOverflow { placed: u32, requested: u32 },
    #[error("realised profile deviates {deviation:.4} from target")]
    ProfileUnrealizable { deviation: f64 },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Grading(#[from] GradingError),
}

fn default_spacing() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub gland_count: u32,
    pub target_profile: VolumeProfile,
    /// Inclusive range of ellipse semi-axis lengths in pixels.
    pub gland_size_range: [u32; 2],
    pub seed: u64,
    #[serde(default = "default_spacing")]
    pub spacing_um: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::InvalidSpec("width and height must be positive".into()));
        }
        let [lo, hi] = self.gland_size_range;
        if lo == 0 || lo > hi {
            return Err(SynthError::InvalidSpec(format!("bad gland_size_range [{lo}, {hi}]")));
        }
        let p = self.target_profile;
        VolumeProfile::new(p.pct_benign, p.pct_g3, p.pct_g4, p.pct_g5)?;
        if !(self.spacing_um.is_finite() && self.spacing_um > 0.0) {
            return Err(SynthError::InvalidSpec("spacing_um must be positive".into()));
        }
        Ok(())
    }

    /// Same layout parameters with a derived seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        SynthSpec { seed, ..self.clone() }
    }
}

/// An axis-aligned elliptical gland centred on a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gland {
    pub cx: u32,
    pub cy: u32,
    pub rx: u32,
    pub ry: u32,
    pub class: TissueClass,
    pub area: u64,
}

impl Gland {
    /// Inclusive pixel span of row `y`, if the gland covers it.
    fn span(&self, y: u32) -> Option<(u32, u32)> {
        let dy = y as f64 - self.cy as f64;
        if dy.abs() > self.ry as f64 {
            return None;
        }
        let t = 1.0 - (dy / self.ry as f64).powi(2);
        let half = (self.rx as f64 * t.max(0.0).sqrt() + 1e-9).floor() as u32;
        Some((self.cx - half, self.cx + half))
    }

    fn rasterized_area(&self) -> u64 {
        (self.cy - self.ry..=self.cy + self.ry).filter_map(|y| self.span(y)).map(|(a, b)| (b - a + 1) as u64).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub mask: LabelMask,
    pub glands: Vec<Gland>,
    /// Diagnosis of the realised mask.
    pub truth: Diagnosis,
}

fn tissue_margin(spec: &SynthSpec) -> u32 {
    spec.width.min(spec.height) / 40
}

struct Occupancy {
    cell: i64,
    cols: i64,
    cells: Vec<Vec<(i64, i64, i64, i64)>>,
}

impl Occupancy {
    fn new(width: u32, height: u32, cell: i64) -> Self {
        let cols = (width as i64 / cell) + 1;
        let rows = (height as i64 / cell) + 1;
        Occupancy { cell, cols, cells: vec![Vec::new(); (cols * rows) as usize] }
    }

    fn cells_of(&self, b: (i64, i64, i64, i64)) -> impl Iterator<Item = usize> + '_ {
        let (x0, y0, x1, y1) = b;
        let rows = self.cells.len() as i64 / self.cols;
        let cx0 = (x0 / self.cell).clamp(0, self.cols - 1);
        let cx1 = (x1 / self.cell).clamp(0, self.cols - 1);
        let cy0 = (y0 / self.cell).clamp(0, rows - 1);
        let cy1 = (y1 / self.cell).clamp(0, rows - 1);
        (cy0..=cy1).flat_map(move |cy| (cx0..=cx1).map(move |cx| (cy * self.cols + cx) as usize))
    }

    fn free(&self, b: (i64, i64, i64, i64)) -> bool {
        let grown = (b.0 - GLAND_GAP, b.1 - GLAND_GAP, b.2 + GLAND_GAP, b.3 + GLAND_GAP);
        self.cells_of(grown)
            .all(|i| self.cells[i].iter().all(|o| grown.2 < o.0 || o.2 < grown.0 || grown.3 < o.1 || o.3 < grown.1))
    }

    fn insert(&mut self, b: (i64, i64, i64, i64)) {
        let ids: Vec<usize> = self.cells_of(b).collect();
        for i in ids {
            self.cells[i].push(b);
        }
    }
}

fn place_glands(spec: &SynthSpec) -> Result<Vec<Gland>, SynthError> {
    let margin = tissue_margin(spec) as i64;
    let [lo, hi] = spec.gland_size_range;
    let mut rng = rng::stream(spec.seed, rng::SYNTH_LAYOUT, 0);
    let mut occupancy = Occupancy::new(spec.width, spec.height, 2 * hi as i64 + 2 * GLAND_GAP + 1);
    let mut glands = Vec::with_capacity(spec.gland_count as usize);
    let (w, h) = (spec.width as i64, spec.height as i64);
    for _ in 0..spec.gland_count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let rx = rng.random_range(lo..=hi) as i64;
            let ry = rng.random_range(lo..=hi) as i64;
            let (xmin, xmax) = (margin + rx, w - 1 - margin - rx);
            let (ymin, ymax) = (margin + ry, h - 1 - margin - ry);
            if xmin > xmax || ymin > ymax {
                continue;
            }
            let cx = rng.random_range(xmin..=xmax);
            let cy = rng.random_range(ymin..=ymax);
            let bbox = (cx - rx, cy - ry, cx + rx, cy + ry);
            if occupancy.free(bbox) {
                occupancy.insert(bbox);
                let mut g = Gland {
                    cx: cx as u32,
                    cy: cy as u32,
                    rx: rx as u32,
                    ry: ry as u32,
                    class: TissueClass::BenignEpithelium,
                    area: 0,
                };
                g.area = g.rasterized_area();
                glands.push(g);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SynthError::PlacementOverflow { placed: glands.len() as u32, requested: spec.gland_count });
        }
    }
    Ok(glands)
}

fn max_deviation(assigned: &[u64; 4], total: u64, target: &[f64; 4]) -> f64 {
    (0..4).map(|c| (assigned[c] as f64 / total as f64 - target[c]).abs()).fold(0.0, f64::max)
}

/// Greedy largest-deficit assignment, largest glands first, followed by
/// single-gland moves that lower the worst deviation.
fn assign_classes(glands: &mut [Gland], target: &VolumeProfile) -> Result<(), SynthError> {
    if glands.is_empty() {
        return Ok(());
    }
    let target = target.as_array();
    let total: u64 = glands.iter().map(|g| g.area).sum();
    let mut order: Vec<usize> = (0..glands.len()).collect();
    order.sort_by(|&a, &b| glands[b].area.cmp(&glands[a].area).then(a.cmp(&b)));
    let mut assigned = [0u64; 4];
    let mut class_of = vec![0usize; glands.len()];
    for &i in &order {
        let c = (0..4)
            .filter(|&c| target[c] > 0.0)
            .max_by(|&a, &b| {
                let da = target[a] * total as f64 - assigned[a] as f64;
                let db = target[b] * total as f64 - assigned[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("target profile has a positive component");
        class_of[i] = c;
        assigned[c] += glands[i].area;
    }
    let mut current = max_deviation(&assigned, total, &target);
    'improve: while current > 1e-12 {
        for i in 0..glands.len() {
            for c in (0..4).filter(|&c| target[c] > 0.0 && c != class_of[i]) {
                let mut trial = assigned;
                trial[class_of[i]] -= glands[i].area;
                trial[c] += glands[i].area;
                let d = max_deviation(&trial, total, &target);
                if d + 1e-15 < current {
                    assigned = trial;
                    class_of[i] = c;
                    current = d;
                    continue 'improve;
                }
            }
        }
        break;
    }
    if current > PROFILE_TOLERANCE {
        return Err(SynthError::ProfileUnrealizable { deviation: current });
    }
    for (g, c) in glands.iter_mut().zip(class_of) {
        g.class = EPITHELIAL[c];
    }
    Ok(())
}

/// Renders glands over a tissue rectangle, row by row, straight into runs.
pub fn rasterize(width: u32, height: u32, spacing: f64, margin: u32, glands: &[Gland]) -> LabelMask {
    let mut by_top: Vec<&Gland> = glands.iter().collect();
    by_top.sort_by_key(|g| (g.cy - g.ry, g.cx));
    let mut next = 0;
    let mut active: Vec<&Gland> = Vec::new();
    let mut spans: Vec<(u32, u32, TissueClass)> = Vec::new();
    let mut row: Vec<Run> = Vec::new();
    let mut builder = MaskBuilder::new(width, spacing);
    let tissue_rows = margin..height.saturating_sub(margin);
    let (tx0, tx1) = (margin, width.saturating_sub(margin));
    for y in 0..height {
        while next < by_top.len() && by_top[next].cy - by_top[next].ry <= y {
            active.push(by_top[next]);
            next += 1;
        }
        active.retain(|g| g.cy + g.ry >= y);
        row.clear();
        if !tissue_rows.contains(&y) || tx0 >= tx1 {
            row.push(Run::new(TissueClass::Background, width));
        } else {
            spans.clear();
            spans.extend(active.iter().filter_map(|g| g.span(y).map(|(a, b)| (a, b, g.class))));
            spans.sort_unstable_by_key(|s| s.0);
            row.push(Run::new(TissueClass::Background, tx0));
            let mut x = tx0;
            for &(a, b, class) in &spans {
                row.push(Run::new(TissueClass::NonEpithelialTissue, a - x));
                row.push(Run::new(class, b - a + 1));
                x = b + 1;
            }
            row.push(Run::new(TissueClass::NonEpithelialTissue, tx1 - x));
            row.push(Run::new(TissueClass::Background, width - tx1));
        }
        builder.push_runs(row.iter().copied()).expect("rasterized row spans the width");
    }
    builder.finish().expect("non-empty canvas")
}

pub fn generate(spec: &SynthSpec) -> Result<SyntheticCase, SynthError> {
    generate_with(spec, &ThresholdProfile::biopsy())
}

/// Generates a case and diagnoses the realised mask under `profile`.
pub fn generate_with(spec: &SynthSpec, profile: &ThresholdProfile) -> Result<SyntheticCase, SynthError> {
    spec.validate()?;
    let mut glands = place_glands(spec)?;
    assign_classes(&mut glands, &spec.target_profile)?;
    let mask = rasterize(spec.width, spec.height, spec.spacing_um, tissue_margin(spec), &glands);
    let truth = crate::grading::grade_mask(&mask, profile)?;
    Ok(SyntheticCase { mask, glands, truth })
}

/// Realised epithelial fractions of a set of glands.
pub fn realized_profile(glands: &[Gland]) -> Option<VolumeProfile> {
    let total: u64 = glands.iter().map(|g| g.area).sum();
    if total == 0 {
        return None;
    }
    let frac =
        |c: TissueClass| glands.iter().filter(|g| g.class == c).map(|g| g.area).sum::<u64>() as f64 / total as f64;
    Some(VolumeProfile {
        pct_benign: frac(TissueClass::BenignEpithelium),
        pct_g3: frac(TissueClass::Gleason3),
        pct_g4: frac(TissueClass::Gleason4),
        pct_g5: frac(TissueClass::Gleason5),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Row-stochastic matrix over benign, G3, G4, G5.
    pub gland_confusion: [[f64; 4]; 4],
    #[serde(default)]
    pub boundary_jitter: u32,
    pub seed: u64,
}

impl NoiseModel {
    pub fn identity(seed: u64) -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        NoiseModel { gland_confusion: m, boundary_jitter: 0, seed }
    }

    /// Keeps a gland's class with probability `1 - rate`, otherwise moves it
    /// uniformly to one of the other three classes.
    pub fn symmetric(rate: f64, seed: u64) -> Self {
        let mut m = [[rate / 3.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0 - rate;
        }
        NoiseModel { gland_confusion: m, boundary_jitter: 0, seed }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (i, row) in self.gland_confusion.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(SynthError::InvalidNoise(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(SynthError::InvalidNoise(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    fn sample(&self, from: usize, u: f64) -> usize {
        let row = &self.gland_confusion[from];
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u within rounding of 1: last class with positive mass
        row.iter().rposition(|p| *p > 0.0).unwrap_or(from)
    }
}

/// Resamples each gland's class from its confusion row and, with jitter,
/// dilates or erodes each gland by up to `boundary_jitter` pixels.
///
/// Boundary jitter works on a decoded grid and is meant for desk-scale masks.
pub fn corrupt(m: &LabelMask, noise: &NoiseModel) -> Result<LabelMask, SynthError> {
    noise.validate()?;
    let glands = label_glands(m, Connectivity::Four);
    let mut rng = rng::stream(noise.seed, rng::SYNTH_NOISE, 0);
    let jitter = noise.boundary_jitter as i64;
    // per gland: replacement class (None keeps pixels as they are), jitter
    let mut plan: Vec<(Option<TissueClass>, i64)> = Vec::with_capacity(glands.len());
    for c in &glands.components {
        let u: f64 = rng.random();
        let d = if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
        let replacement = EPITHELIAL.iter().position(|e| *e == c.class).and_then(|from| {
            let to = EPITHELIAL[noise.sample(from, u)];
            (to != c.class).then_some(to)
        });
        plan.push((replacement, d));
    }

    let mut builder = MaskBuilder::new(m.width(), m.spacing());
    for y in 0..m.height() {
        let offset = m.row_offset(y);
        let row = m.row(y).iter().enumerate().map(|(i, r)| {
            let id = glands.run_ids[offset + i];
            match id {
                0 => *r,
                id => Run::new(plan[id as usize - 1].0.unwrap_or(r.class), r.len),
            }
        });
        builder.push_runs(row).expect("row width preserved");
    }
    let recoloured = builder.finish().expect("shape preserved");
    if plan.iter().all(|p| p.1 == 0) {
        return Ok(recoloured);
    }
    Ok(jitter_boundaries(&recoloured, &glands, &plan))
}

fn jitter_boundaries(
    m: &LabelMask,
    glands: &crate::raster::GlandLabeling,
    plan: &[(Option<TissueClass>, i64)],
) -> LabelMask {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let mut grid = m.decode();
    let mut owner = vec![0u32; grid.len()];
    let mut p = 0usize;
    for y in 0..m.height() {
        let offset = m.row_offset(y);
        for (i, r) in m.row(y).iter().enumerate() {
            let id = glands.run_ids[offset + i];
            owner[p..p + r.len as usize].fill(id);
            p += r.len as usize;
        }
    }
    let neighbours = |x: i64, y: i64| {
        [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
            .into_iter()
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < w && b < h)
            .map(move |(a, b)| (b * w + a) as usize)
    };
    for (k, comp) in glands.components.iter().enumerate() {
        let (_, d) = plan[k];
        if d == 0 {
            continue;
        }
        let id = comp.id;
        let bb = comp.bounding_box;
        let reach = d.abs();
        let x0 = (bb.x0 as i64 - reach).max(0);
        let y0 = (bb.y0 as i64 - reach).max(0);
        let x1 = (bb.x1 as i64 + reach).min(w - 1);
        let y1 = (bb.y1 as i64 + reach).min(h - 1);
        for _ in 0..reach {
            let mut changes: Vec<(usize, u8, u32)> = Vec::new();
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = (y * w + x) as usize;
                    if d < 0 && owner[i] == id && neighbours(x, y).any(|n| owner[n] != id) {
                        changes.push((i, TissueClass::NonEpithelialTissue.code(), 0));
                    } else if d > 0 && grid[i] == TissueClass::NonEpithelialTissue.code() {
                        if let Some(n) = neighbours(x, y).find(|&n| owner[n] == id) {
                            changes.push((i, grid[n], id));
                        }
                    }
                }
            }
            for (i, code, o) in changes {
                grid[i] = code;
                owner[i] = o;
            }
        }
    }
    LabelMask::encode(&grid, m.width(), m.height(), m.spacing()).expect("valid codes")
}

/// Grades an already generated mask; convenience for noisy copies.
pub fn diagnose_mask(m: &LabelMask, profile: &ThresholdProfile) -> Result<Diagnosis, GradingError> {
    let p = crate::grading::volume_profile(&m.class_areas())?;
    Ok(diagnose(&p, profile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::Verdict;

    fn spec(target: [f64; 4], seed: u64) -> SynthSpec {
        SynthSpec {
            width: 400,
            height: 300,
            gland_count: 60,
            target_profile: VolumeProfile::new(target[0], target[1], target[2], target[3]).unwrap(),
            gland_size_range: [6, 12],
            seed,
            spacing_um: 1.0,
        }
    }

    #[test]
    fn benign_target() {
        let case = generate(&spec([1.0, 0.0, 0.0, 0.0], 1)).unwrap();
        let a = case.mask.class_areas();
        assert_eq!(a.get(TissueClass::Gleason3) + a.get(TissueClass::Gleason4) + a.get(TissueClass::Gleason5), 0);
        assert!(a.get(TissueClass::BenignEpithelium) > 0);
        assert_eq!(case.truth.verdict, Verdict::Benign);
    }

    #[test]
    fn gg2_target() {
        let case = generate(&spec([0.2, 0.48, 0.32, 0.0], 2)).unwrap();
        assert_eq!(case.truth.verdict.category(), 2);
        let realised = crate::grading::volume_profile(&case.mask.class_areas()).unwrap();
        for (r, t) in realised.as_array().iter().zip([0.2, 0.48, 0.32, 0.0]) {
            assert!((r - t).abs() <= PROFILE_TOLERANCE, "{realised:?}");
        }
        assert_eq!(realized_profile(&case.glands).unwrap(), realised);
    }

    #[test]
    fn same_seed_same_mask() {
        let a = generate(&spec([0.3, 0.3, 0.3, 0.1], 5)).unwrap();
        let b = generate(&spec([0.3, 0.3, 0.3, 0.1], 5)).unwrap();
        assert_eq!(a.mask, b.mask);
        let c = generate(&spec([0.3, 0.3, 0.3, 0.1], 6)).unwrap();
        assert_ne!(a.mask, c.mask);
    }

    #[test]
    fn glands_are_separate_components() {
        let case = generate(&spec([0.3, 0.3, 0.3, 0.1], 8)).unwrap();
        let labels = label_glands(&case.mask, Connectivity::Eight);
        assert_eq!(labels.len(), case.glands.len());
    }

    #[test]
    fn overflow() {
        let mut s = spec([1.0, 0.0, 0.0, 0.0], 1);
        s.gland_count = 5000;
        assert!(matches!(generate(&s), Err(SynthError::PlacementOverflow { .. })));
    }

    #[test]
    fn identity_noise_is_identity() {
        let case = generate(&spec([0.3, 0.3, 0.3, 0.1], 3)).unwrap();
        assert_eq!(corrupt(&case.mask, &NoiseModel::identity(4)).unwrap(), case.mask);
    }

    #[test]
    fn deterministic_g3_to_g4() {
        let case = generate(&spec([0.2, 0.5, 0.3, 0.0], 3)).unwrap();
        let mut noise = NoiseModel::identity(1);
        noise.gland_confusion[1] = [0.0, 0.0, 1.0, 0.0];
        let out = corrupt(&case.mask, &noise).unwrap();
        let before = case.mask.class_areas();
        let after = out.class_areas();
        assert_eq!(after.get(TissueClass::Gleason3), 0);
        assert_eq!(
            after.get(TissueClass::Gleason4),
            before.get(TissueClass::Gleason3) + before.get(TissueClass::Gleason4)
        );
    }

    #[test]
    fn jitter_keeps_non_glandular_background() {
        let case = generate(&spec([0.3, 0.3, 0.3, 0.1], 9)).unwrap();
        let mut noise = NoiseModel::identity(2);
        noise.boundary_jitter = 2;
        let out = corrupt(&case.mask, &noise).unwrap();
        assert_ne!(out, case.mask);
        assert_eq!(
            out.class_areas().get(TissueClass::Background),
            case.mask.class_areas().get(TissueClass::Background)
        );
        assert_eq!(out.shape(), case.mask.shape());
    }

    #[test]
    fn noise_validation() {
        let mut n = NoiseModel::identity(0);
        n.gland_confusion[2] = [0.5, 0.6, 0.0, 0.0];
        assert!(corrupt(&LabelMask::filled(2, 2, 1.0, TissueClass::Background).unwrap(), &n).is_err());
    }
}
