//! Flat binary morphology with disk structuring elements, hole filling and
//! 8-connected component labelling.

use super::raster::BinaryMask;
use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Disk of radius `r`: offsets with `dx² + dy² ≤ r²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Result<Self> {
        if radius < 1 {
            return Err(Error::InvalidParameter(
                "structuring element radius must be >= 1".into(),
            ));
        }
        let r = radius as isize;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        Ok(Self { radius, offsets })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    /// Per-row horizontal half extent: for `dy` in `-r..=r`, the largest `dx`.
    fn row_extents(&self) -> Vec<(isize, isize)> {
        let r = self.radius as isize;
        (-r..=r)
            .map(|dy| {
                let half = self
                    .offsets
                    .iter()
                    .filter(|o| o.1 == dy)
                    .map(|o| o.0)
                    .max()
                    .unwrap_or(0);
                (dy, half)
            })
            .collect()
    }
}

/// What pixels beyond the frame read as during erosion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameValue {
    /// Frame acts as foreground; erosion never shrinks from the image edge.
    Foreground,
    /// Frame acts as background; the image edge is an object boundary.
    Background,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
    FillHoles,
    RemoveSmall(usize),
}

pub fn morphology(mask: &BinaryMask, op: MorphOp, se: &StructuringElement) -> BinaryMask {
    match op {
        MorphOp::Erode => erode(mask, se),
        MorphOp::Dilate => dilate(mask, se),
        MorphOp::Open => open(mask, se),
        MorphOp::Close => close(mask, se),
        MorphOp::FillHoles => fill_holes(mask),
        MorphOp::RemoveSmall(area) => remove_small(mask, area),
    }
}

pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    // Row-run formulation: a pixel is set when any SE row segment covers a set pixel.
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let prefix = row_prefix_counts(mask);
    let extents = se.row_extents();
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        extents.iter().any(|&(dy, half)| {
            let yy = y + dy;
            if yy < 0 || yy >= h {
                return false;
            }
            let lo = (x - half).max(0);
            let hi = (x + half).min(w - 1);
            lo <= hi && range_count(&prefix, mask.width(), yy as usize, lo as usize, hi as usize) > 0
        })
    })
}

/// Erosion with the frame treated as foreground (adjoint of [`dilate`]).
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    erode_with_frame(mask, se, FrameValue::Foreground)
}

pub fn erode_with_frame(mask: &BinaryMask, se: &StructuringElement, frame: FrameValue) -> BinaryMask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let prefix = row_prefix_counts(mask);
    let extents = se.row_extents();
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let (x, y) = (x as isize, y as isize);
        extents.iter().all(|&(dy, half)| {
            let yy = y + dy;
            if yy < 0 || yy >= h {
                return frame == FrameValue::Foreground;
            }
            let lo = x - half;
            let hi = x + half;
            if (lo < 0 || hi >= w) && frame == FrameValue::Background {
                return false;
            }
            let (lo, hi) = (lo.max(0) as usize, hi.min(w - 1) as usize);
            range_count(&prefix, mask.width(), yy as usize, lo, hi) == hi - lo + 1
        })
    })
}

fn row_prefix_counts(mask: &BinaryMask) -> Vec<u32> {
    let w = mask.width();
    let mut prefix = vec![0u32; (w + 1) * mask.height()];
    for y in 0..mask.height() {
        let row = &mut prefix[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            row[x + 1] = row[x] + mask.get(x, y) as u32;
        }
    }
    prefix
}

#[inline]
fn range_count(prefix: &[u32], w: usize, y: usize, lo: usize, hi: usize) -> usize {
    let row = &prefix[y * (w + 1)..(y + 1) * (w + 1)];
    (row[hi + 1] - row[lo]) as usize
}

pub fn open(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

pub fn close(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    erode(&dilate(mask, se), se)
}

/// Fills background components (8-connected) that do not reach the image border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && !mask.get(x, y) {
                outside[y * w + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (nx, ny) in neighbors8(x, y, w, h) {
            let i = ny * w + nx;
            if !outside[i] && !mask.get(nx, ny) {
                outside[i] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    BinaryMask::from_vec(w, h, outside.into_iter().map(|o| !o).collect())
}

/// Deletes 8-connected components with fewer than `min_area` pixels.
pub fn remove_small(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    let mut out = BinaryMask::new(mask.width(), mask.height());
    for comp in connected_components(mask) {
        if comp.area >= min_area {
            for &(x, y) in &comp.pixels {
                out.set(x, y, true);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    pub area: usize,
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for &(x, y) in &self.pixels {
            m.set(x, y, true);
        }
        m
    }
}

/// 8-connected components, ordered by the raster position of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[y * w + x] {
                continue;
            }
            seen[y * w + x] = true;
            queue.push_back((x, y));
            let mut pixels = Vec::new();
            while let Some((px, py)) = queue.pop_front() {
                pixels.push((px, py));
                for (nx, ny) in neighbors8(px, py, w, h) {
                    let i = ny * w + nx;
                    if !seen[i] && mask.get(nx, ny) {
                        seen[i] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(px, py)| (py, px));
            out.push(Component {
                id: out.len(),
                area: pixels.len(),
                pixels,
            });
        }
    }
    out
}

/// Keeps only the largest 8-connected component (earliest in raster order on ties).
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let comps = connected_components(mask);
    match comps.iter().max_by(|a, b| a.area.cmp(&b.area).then(b.id.cmp(&a.id))) {
        Some(c) => c.to_mask(mask.width(), mask.height()),
        None => mask.clone(),
    }
}

pub(crate) fn neighbors8(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    const OFFS: [(isize, isize); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (-1, 0),
        (1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];
    OFFS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then_some((nx as usize, ny as usize))
    })
}

pub(crate) fn neighbors4(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    const OFFS: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
    OFFS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then_some((nx as usize, ny as usize))
    })
}
