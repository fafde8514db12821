//! Pixel-grid reference path for small masks.
//!
//! Works on a fully decoded row-major byte grid. Used to cross-check the
//! run-based routines on down-scaled masks; memory is O(width × height).

use super::components::{modal_class, BoundingBox, Component, Connectivity};
use super::{ClassAreas, TissueClass};

pub fn class_areas(raw: &[u8]) -> ClassAreas {
    let mut counts = [0u64; TissueClass::COUNT];
    for &b in raw {
        counts[b as usize] += 1;
    }
    ClassAreas::from_counts(counts)
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Same-class components of glandular pixels, pixel union-find.
pub fn connected_components(raw: &[u8], width: u32, height: u32, connectivity: Connectivity) -> Vec<Component> {
    label(raw, width, height, connectivity, true)
}

/// Glands: glandular pixels joined regardless of class.
pub fn glands(raw: &[u8], width: u32, height: u32, connectivity: Connectivity) -> Vec<Component> {
    label(raw, width, height, connectivity, false)
}

fn label(raw: &[u8], width: u32, height: u32, connectivity: Connectivity, same_class: bool) -> Vec<Component> {
    let (w, h) = (width as usize, height as usize);
    assert_eq!(raw.len(), w * h, "grid size");
    let mut parent: Vec<u32> = (0..(w * h) as u32).collect();
    let glandular = |b: u8| TissueClass::from_code(b).is_some_and(|c| c.is_glandular());
    let mut offsets: Vec<(isize, isize)> = vec![(-1, 0), (0, -1)];
    if connectivity == Connectivity::Eight {
        offsets.extend([(-1, -1), (1, -1)]);
    }
    for y in 0..h {
        for x in 0..w {
            let b = raw[y * w + x];
            if !glandular(b) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if (same_class && raw[n] == b) || (!same_class && glandular(raw[n])) {
                    let (a, c) = (find(&mut parent, (y * w + x) as u32), find(&mut parent, n as u32));
                    if a != c {
                        parent[a.max(c) as usize] = a.min(c);
                    }
                }
            }
        }
    }
    // roots are the smallest index of their set, so root order is first-pixel order
    let mut id_of = vec![0u32; w * h];
    let mut comps: Vec<Component> = Vec::new();
    let mut hist: Vec<[u64; TissueClass::COUNT]> = Vec::new();
    for i in 0..w * h {
        if !glandular(raw[i]) {
            continue;
        }
        let r = find(&mut parent, i as u32) as usize;
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        if r == i {
            comps.push(Component {
                id: comps.len() as u32 + 1,
                class: TissueClass::Background,
                pixel_count: 0,
                bounding_box: BoundingBox { x0: x, y0: y, x1: x, y1: y },
            });
            hist.push([0; TissueClass::COUNT]);
            id_of[i] = comps.len() as u32;
        }
        let k = id_of[r] as usize - 1;
        let c = &mut comps[k];
        c.pixel_count += 1;
        let bb = &mut c.bounding_box;
        bb.x0 = bb.x0.min(x);
        bb.x1 = bb.x1.max(x);
        bb.y1 = bb.y1.max(y);
        hist[k][raw[i] as usize] += 1;
    }
    for (c, h) in comps.iter_mut().zip(&hist) {
        c.class = modal_class(h);
    }
    comps
}
