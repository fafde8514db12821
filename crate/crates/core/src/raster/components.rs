//! Run-based connected-component labelling.
//!
//! Rows are scanned top to bottom once. Each glandular run is linked to the
//! overlapping runs of the previous row through a union-find over provisional
//! labels, so working memory is one row of segments plus one entry per
//! provisional label, never a per-pixel label image.

use super::{LabelMask, MaskBuilder, RasterError, Run, TissueClass};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    /// Edge neighbours only.
    #[default]
    Four,
    /// Edge and corner neighbours.
    Eight,
}

impl Connectivity {
    pub fn from_neighbours(n: u32) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }

    pub fn neighbours(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    fn point(x: u32, y: u32) -> Self {
        BoundingBox { x0: x, y0: y, x1: x, y1: y }
    }

    fn union(&mut self, other: &BoundingBox) {
        self.x0 = self.x0.min(other.x0);
        self.y0 = self.y0.min(other.y0);
        self.x1 = self.x1.max(other.x1);
        self.y1 = self.y1.max(other.y1);
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Component {
    /// Dense id starting at 1, in row-major order of the first pixel.
    pub id: u32,
    pub class: TissueClass,
    pub pixel_count: u64,
    pub bounding_box: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Grouping {
    SameClass,
    AnyGlandular,
}

#[derive(Debug, Clone)]
struct Stats {
    first: (u32, u32),
    pixels: u64,
    bbox: BoundingBox,
    class_counts: [u64; TissueClass::COUNT],
}

impl Stats {
    fn absorb(&mut self, other: &Stats) {
        self.first = self.first.min(other.first);
        self.pixels += other.pixels;
        self.bbox.union(&other.bbox);
        for (a, b) in self.class_counts.iter_mut().zip(other.class_counts.iter()) {
            *a += *b;
        }
    }
}

#[derive(Debug, Default)]
struct Forest {
    parent: Vec<u32>,
    rank: Vec<u8>,
    stats: Vec<Stats>,
}

impl Forest {
    fn make(&mut self, stats: Stats) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        self.stats.push(stats);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (root, child) = match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => (rb, ra),
            std::cmp::Ordering::Greater => (ra, rb),
            std::cmp::Ordering::Equal => {
                self.rank[ra as usize] += 1;
                (ra, rb)
            }
        };
        self.parent[child as usize] = root;
        let child_stats = self.stats[child as usize].clone();
        self.stats[root as usize].absorb(&child_stats);
        root
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    x0: u32,
    x1: u32,
    class: TissueClass,
    label: u32,
}

struct Scan {
    forest: Forest,
    /// Provisional label per glandular run, `u32::MAX` elsewhere.
    run_labels: Option<Vec<u32>>,
}

fn scan(m: &LabelMask, connectivity: Connectivity, grouping: Grouping, keep_run_labels: bool) -> Scan {
    let reach = match connectivity {
        Connectivity::Four => 0,
        Connectivity::Eight => 1,
    };
    let mut forest = Forest::default();
    let mut run_labels = keep_run_labels.then(|| Vec::with_capacity(m.run_count()));
    let mut prev: Vec<Segment> = Vec::new();
    let mut cur: Vec<Segment> = Vec::new();

    for y in 0..m.height() {
        cur.clear();
        let mut x = 0u32;
        let mut j = 0usize;
        for run in m.row(y) {
            let (x0, x1) = (x, x + run.len);
            x = x1;
            if !run.class.is_glandular() {
                if let Some(labels) = run_labels.as_mut() {
                    labels.push(u32::MAX);
                }
                continue;
            }
            // previous-row segment [a, b) touches [x0, x1) when a < x1 + reach && b + reach > x0
            while j < prev.len() && prev[j].x1 + reach <= x0 {
                j += 1;
            }
            let mut label: Option<u32> = None;
            let mut k = j;
            while k < prev.len() && prev[k].x0 < x1 + reach {
                let seg = prev[k];
                let compatible = match grouping {
                    Grouping::SameClass => seg.class == run.class,
                    Grouping::AnyGlandular => true,
                };
                if compatible {
                    label = Some(match label {
                        None => forest.find(seg.label),
                        Some(l) => forest.union(l, seg.label),
                    });
                }
                k += 1;
            }
            // in-row neighbour of another class (only possible when grouping ignores class)
            if grouping == Grouping::AnyGlandular {
                if let Some(left) = cur.last().filter(|s| s.x1 == x0) {
                    label = Some(match label {
                        None => forest.find(left.label),
                        Some(l) => forest.union(l, left.label),
                    });
                }
            }
            let mut counts = [0u64; TissueClass::COUNT];
            counts[run.class.index()] = run.len as u64;
            let mut bbox = BoundingBox::point(x0, y);
            bbox.x1 = x1 - 1;
            let stats = Stats { first: (y, x0), pixels: run.len as u64, bbox, class_counts: counts };
            let label = match label {
                Some(l) => {
                    let root = forest.find(l);
                    forest.stats[root as usize].absorb(&stats);
                    root
                }
                None => forest.make(stats),
            };
            if let Some(labels) = run_labels.as_mut() {
                labels.push(label);
            }
            cur.push(Segment { x0, x1, class: run.class, label });
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Scan { forest, run_labels }
}

/// Lower rank wins a majority-vote tie: benign before hard-negative before
/// increasing Gleason grade.
fn tie_rank(class: TissueClass) -> u8 {
    match class {
        TissueClass::BenignEpithelium => 0,
        TissueClass::HardNegative => 1,
        TissueClass::Gleason3 => 2,
        TissueClass::Gleason4 => 3,
        TissueClass::Gleason5 => 4,
        TissueClass::NonEpithelialTissue => 5,
        TissueClass::Background => 6,
    }
}

/// Modal class of a pixel histogram, ties broken toward the lower grade.
pub(crate) fn modal_class(counts: &[u64; TissueClass::COUNT]) -> TissueClass {
    TissueClass::ALL
        .iter()
        .copied()
        .filter(|c| c.is_glandular() && counts[c.index()] > 0)
        .max_by(|a, b| counts[a.index()].cmp(&counts[b.index()]).then(tie_rank(*b).cmp(&tie_rank(*a))))
        .unwrap_or(TissueClass::Background)
}

/// Resolves roots into components ordered by first pixel; returns the
/// components, their class histograms and a root-to-id table.
fn finish(forest: &mut Forest) -> (Vec<Component>, Vec<[u64; TissueClass::COUNT]>, Vec<u32>) {
    let n = forest.parent.len();
    let mut roots: Vec<u32> = (0..n as u32).filter(|&i| forest.parent[i as usize] == i).collect();
    roots.sort_by_key(|&r| forest.stats[r as usize].first);
    let mut id_of = vec![0u32; n];
    let mut components = Vec::with_capacity(roots.len());
    let mut histograms = Vec::with_capacity(roots.len());
    for (i, &r) in roots.iter().enumerate() {
        let id = i as u32 + 1;
        id_of[r as usize] = id;
        let s = &forest.stats[r as usize];
        components.push(Component {
            id,
            class: modal_class(&s.class_counts),
            pixel_count: s.pixels,
            bounding_box: s.bbox,
        });
        histograms.push(s.class_counts);
    }
    for i in 0..n as u32 {
        let r = forest.find(i);
        id_of[i as usize] = id_of[r as usize];
    }
    (components, histograms, id_of)
}

/// Same-class connected components of every glandular pixel (background and
/// non-epithelial tissue are never componentised).
pub fn connected_components(m: &LabelMask, connectivity: Connectivity) -> Vec<Component> {
    let mut s = scan(m, connectivity, Grouping::SameClass, false);
    finish(&mut s.forest).0
}

/// Glands: connected regions of glandular pixels regardless of class.
#[derive(Debug, Clone)]
pub struct GlandLabeling {
    pub connectivity: Connectivity,
    /// One entry per gland; `class` is the gland's modal class.
    pub components: Vec<Component>,
    /// Pixel histogram per gland, indexed like `components`.
    pub class_counts: Vec<[u64; TissueClass::COUNT]>,
    /// Gland id per run of the source mask, 0 for non-glandular runs.
    pub run_ids: Vec<u32>,
}

impl GlandLabeling {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

pub fn label_glands(m: &LabelMask, connectivity: Connectivity) -> GlandLabeling {
    let mut s = scan(m, connectivity, Grouping::AnyGlandular, true);
    let (components, class_counts, id_of) = finish(&mut s.forest);
    let run_ids = s
        .run_labels
        .expect("run labels requested")
        .into_iter()
        .map(|l| if l == u32::MAX { 0 } else { id_of[l as usize] })
        .collect();
    GlandLabeling { connectivity, components, class_counts, run_ids }
}

/// Modal class per gland, ties toward the lower grade.
pub fn majority_vote(labeling: &GlandLabeling) -> BTreeMap<u32, TissueClass> {
    labeling.components.iter().map(|c| (c.id, c.class)).collect()
}

/// Paints every pixel of gland `i` with `assignment[i]`.
pub fn relabel_components(
    m: &LabelMask,
    labeling: &GlandLabeling,
    assignment: &BTreeMap<u32, TissueClass>,
) -> Result<LabelMask, RasterError> {
    if labeling.run_ids.len() != m.run_count() {
        return Err(RasterError::LabelingMismatch { runs: m.run_count(), labeled: labeling.run_ids.len() });
    }
    let mut table = vec![TissueClass::Background; labeling.components.len() + 1];
    for c in &labeling.components {
        table[c.id as usize] = *assignment.get(&c.id).ok_or(RasterError::MissingAssignment(c.id))?;
    }
    let mut builder = MaskBuilder::new(m.width(), m.spacing());
    for y in 0..m.height() {
        let offset = m.row_offset(y);
        let row = m.row(y).iter().enumerate().map(|(i, r)| {
            let id = labeling.run_ids[offset + i];
            if id == 0 {
                *r
            } else {
                Run::new(table[id as usize], r.len)
            }
        });
        builder.push_runs(row)?;
    }
    builder.finish()
}
