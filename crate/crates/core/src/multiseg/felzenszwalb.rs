//! Felzenszwalb–Huttenlocher graph segmentation on the 8-neighbour pixel grid.

use super::LabelMap;
use crate::error::Result;
use crate::imgcore::filter::gaussian_blur;
use crate::imgcore::morph::neighbors4;
use crate::imgcore::{Plane, RasterImage};

pub const PRESMOOTH_SIGMA: f64 = 0.8;

/// Disjoint-set forest with union by rank; also tracks component size and the
/// internal difference (largest MST edge) of each component.
pub(crate) struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
    internal: Vec<f64>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    pub fn size(&self, root: u32) -> u32 {
        self.size[root as usize]
    }

    /// Joins two roots; returns the surviving root.
    pub fn union(&mut self, a: u32, b: u32, weight: f64) -> u32 {
        let (a, b) = if self.rank[a as usize] < self.rank[b as usize] {
            (b, a)
        } else {
            (a, b)
        };
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        if self.rank[a as usize] == self.rank[b as usize] {
            self.rank[a as usize] += 1;
        }
        self.internal[a as usize] = self.internal[a as usize]
            .max(self.internal[b as usize])
            .max(weight);
        a
    }
}

struct Edge {
    a: u32,
    b: u32,
    w: f64,
}

/// Graph-based segmentation. Intensities are compared on a 0–255 scale so `k`
/// keeps its customary magnitude. Regions are made 4-connected and ids are
/// assigned in raster order of first appearance.
pub fn felzenszwalb_segment(img: &RasterImage, k: f64, min_size: usize) -> Result<LabelMap> {
    img.require_channels(3)?;
    let (w, h) = (img.width(), img.height());
    let smooth: Vec<Plane> = img
        .planes()
        .iter()
        .map(|p| gaussian_blur(p, PRESMOOTH_SIGMA).map(|v| v * 255.0))
        .collect();
    let diff = |i: usize, j: usize| -> f64 {
        smooth
            .iter()
            .map(|p| {
                let d = p.data()[i] - p.data()[j];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };

    let mut edges = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push(Edge { a: i as u32, b: (i + 1) as u32, w: diff(i, i + 1) });
            }
            if y + 1 < h {
                edges.push(Edge { a: i as u32, b: (i + w) as u32, w: diff(i, i + w) });
                if x + 1 < w {
                    edges.push(Edge { a: i as u32, b: (i + w + 1) as u32, w: diff(i, i + w + 1) });
                }
                if x > 0 {
                    edges.push(Edge { a: i as u32, b: (i + w - 1) as u32, w: diff(i, i + w - 1) });
                }
            }
        }
    }
    // stable sort keeps generation order on equal weights
    edges.sort_by(|e, f| e.w.total_cmp(&f.w));

    let mut ds = DisjointSet::new(w * h);
    let threshold = |size: u32| k / size as f64;
    for e in &edges {
        let a = ds.find(e.a);
        let b = ds.find(e.b);
        if a == b {
            continue;
        }
        let ta = ds.internal[a as usize] + threshold(ds.size(a));
        let tb = ds.internal[b as usize] + threshold(ds.size(b));
        if e.w <= ta.min(tb) {
            ds.union(a, b, e.w);
        }
    }
    for e in &edges {
        let a = ds.find(e.a);
        let b = ds.find(e.b);
        if a != b && (ds.size(a) < min_size as u32 || ds.size(b) < min_size as u32) {
            ds.union(a, b, e.w);
        }
    }

    let raw: Vec<u32> = (0..(w * h) as u32).map(|i| ds.find(i)).collect();
    let colors: Vec<[f64; 3]> = (0..w * h)
        .map(|i| [smooth[0].data()[i], smooth[1].data()[i], smooth[2].data()[i]])
        .collect();
    Ok(enforce_4_connectivity(w, h, &raw, &colors, min_size))
}

/// Splits labels into 4-connected pieces and folds pieces below `min_size` into the
/// 4-adjacent piece with the closest mean colour.
pub(crate) fn enforce_4_connectivity(
    w: usize,
    h: usize,
    raw: &[u32],
    colors: &[[f64; 3]],
    min_size: usize,
) -> LabelMap {
    let pieces = LabelMap::from_raw(w, h, &split_4_connected(w, h, raw));
    let n = pieces.region_count();
    if n <= 1 {
        return pieces;
    }
    let mut sum = vec![[0.0f64; 3]; n];
    let mut area = vec![0usize; n];
    for (i, &l) in pieces.labels().iter().enumerate() {
        let l = l as usize;
        area[l] += 1;
        for c in 0..3 {
            sum[l][c] += colors[i][c];
        }
    }
    let adjacency = pieces.adjacency();
    let mut ds = DisjointSet::new(n);
    let mut merged_sum = sum.clone();
    let mut merged_area = area.clone();
    let mut neighbors: Vec<std::collections::BTreeSet<u32>> = adjacency
        .iter()
        .map(|s| s.iter().map(|&v| v as u32).collect())
        .collect();
    loop {
        let mut changed = false;
        for r in 0..n as u32 {
            let root = ds.find(r);
            if root != r || merged_area[root as usize] >= min_size {
                continue;
            }
            let mean = |id: usize| merged_sum[id].map(|s| s / merged_area[id] as f64);
            let here = mean(root as usize);
            let best = neighbors[root as usize]
                .iter()
                .map(|&nb| ds.find(nb))
                .filter(|&nb| nb != root)
                .map(|nb| {
                    let m = mean(nb as usize);
                    let d: f64 = (0..3).map(|c| (m[c] - here[c]).powi(2)).sum();
                    (d, nb)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((_, target)) = best else { continue };
            let keep = ds.union(root, target, 0.0);
            let gone = if keep == root { target } else { root };
            for c in 0..3 {
                merged_sum[keep as usize][c] += merged_sum[gone as usize][c];
            }
            merged_area[keep as usize] += merged_area[gone as usize];
            let moved = std::mem::take(&mut neighbors[gone as usize]);
            neighbors[keep as usize].extend(moved);
            changed = true;
        }
        if !changed {
            break;
        }
    }
    let relabeled: Vec<u32> = pieces
        .labels()
        .iter()
        .map(|&l| ds.find(l))
        .collect();
    LabelMap::from_raw(w, h, &relabeled)
}

fn split_4_connected(w: usize, h: usize, raw: &[u32]) -> Vec<u32> {
    let mut out = vec![u32::MAX; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if out[start] != u32::MAX {
            continue;
        }
        out[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for (nx, ny) in neighbors4(x, y, w, h) {
                let j = ny * w + nx;
                if out[j] == u32::MAX && raw[j] == raw[i] {
                    out[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_single_region() {
        let img = RasterImage::filled(50, 40, &[0.3, 0.5, 0.7]);
        let lm = felzenszwalb_segment(&img, 150.0, 50).unwrap();
        assert_eq!(lm.region_count(), 1);
    }

    #[test]
    fn two_halves_two_regions() {
        // height below min_size so the smoothed transition columns are absorbed
        let img = RasterImage::from_fn(60, 40, 3, |x, _, _| if x < 30 { 0.15 } else { 0.85 });
        let lm = felzenszwalb_segment(&img, 150.0, 50).unwrap();
        assert_eq!(lm.region_count(), 2);
        assert_ne!(lm.get(0, 0), lm.get(59, 0));
        assert_eq!(lm.get(0, 0), lm.get(20, 39));
    }

    #[test]
    fn output_is_partition() {
        let img = RasterImage::from_fn(64, 48, 3, |x, y, c| (((x / 8) * 37 + (y / 6) * 11 + c * 5) % 17) as f64 / 16.0);
        let lm = felzenszwalb_segment(&img, 100.0, 10).unwrap();
        lm.validate().unwrap();
    }
}
