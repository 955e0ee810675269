//! Fine-to-coarse region partitions: a graph-based finest level followed by
//! agglomerative merging of adjacent regions with similar mean Lab colour.

mod felzenszwalb;

pub use felzenszwalb::{felzenszwalb_segment, PRESMOOTH_SIGMA};

use crate::error::{Error, Result};
use crate::imgcore::color::lab_normalized;
use crate::imgcore::morph::neighbors4;
use crate::imgcore::RasterImage;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

/// Per-pixel region ids, contiguous from 0 and numbered in raster order of first
/// appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    region_count: usize,
}

impl LabelMap {
    /// Renumbers arbitrary labels into contiguous ids (raster order).
    pub fn from_raw(width: usize, height: usize, raw: &[u32]) -> Self {
        assert_eq!(raw.len(), width * height);
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                let next = map.len() as u32;
                *map.entry(r).or_insert(next)
            })
            .collect();
        Self {
            width,
            height,
            labels,
            region_count: map.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut a = vec![0; self.region_count];
        for &l in &self.labels {
            a[l as usize] += 1;
        }
        a
    }

    /// Pixel indices of every region, each list in raster order.
    pub fn region_pixels(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.region_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i as u32);
        }
        out
    }

    /// 4-adjacency sets between regions.
    pub fn adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.region_count];
        let w = self.width;
        for y in 0..self.height {
            for x in 0..w {
                let a = self.labels[y * w + x] as usize;
                if x + 1 < w {
                    let b = self.labels[y * w + x + 1] as usize;
                    if a != b {
                        adj[a].insert(b);
                        adj[b].insert(a);
                    }
                }
                if y + 1 < self.height {
                    let b = self.labels[(y + 1) * w + x] as usize;
                    if a != b {
                        adj[a].insert(b);
                        adj[b].insert(a);
                    }
                }
            }
        }
        adj
    }

    /// Checks contiguity, raster ordering and 4-connectivity of every region.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0u32;
        for &l in &self.labels {
            if l > next {
                return Err(Error::InvalidParameter(format!("label {l} appears before {next}")));
            }
            if l == next {
                next += 1;
            }
        }
        if next as usize != self.region_count {
            return Err(Error::InvalidParameter("region_count disagrees with labels".into()));
        }
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut visited_regions = vec![false; self.region_count];
        for start in 0..w * h {
            if seen[start] {
                continue;
            }
            let l = self.labels[start];
            if visited_regions[l as usize] {
                return Err(Error::InvalidParameter(format!("region {l} is not 4-connected")));
            }
            visited_regions[l as usize] = true;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for (nx, ny) in neighbors4(i % w, i / w, w, h) {
                    let j = ny * w + nx;
                    if !seen[j] && self.labels[j] == l {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultisegConfig {
    pub level_count: usize,
    pub felz_k: f64,
    pub felz_min_size: usize,
    /// Region count the geometric default schedule ends at.
    pub coarsest_regions: usize,
    /// Explicit region-count targets, one per level (entry 0 describes the finest
    /// map and is informational). `None` selects the geometric default.
    pub merge_schedule: Option<Vec<usize>>,
}

impl Default for MultisegConfig {
    fn default() -> Self {
        Self {
            level_count: 15,
            felz_k: 150.0,
            felz_min_size: 50,
            coarsest_regions: 8,
            merge_schedule: None,
        }
    }
}

impl MultisegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level_count == 0 {
            return Err(Error::InvalidParameter("level_count must be >= 1".into()));
        }
        if let Some(s) = &self.merge_schedule {
            if s.len() != self.level_count {
                return Err(Error::InvalidParameter(format!(
                    "merge schedule has {} entries for {} levels",
                    s.len(),
                    self.level_count
                )));
            }
            if s.windows(2).any(|p| p[1] >= p[0]) || s.iter().any(|&t| t == 0) {
                return Err(Error::InvalidParameter(
                    "merge schedule must be strictly decreasing and positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Targets for levels `1..level_count` given the finest region count.
    pub fn targets(&self, finest: usize) -> Vec<usize> {
        if let Some(s) = &self.merge_schedule {
            return s[1..].to_vec();
        }
        let levels = self.level_count;
        if levels < 2 {
            return Vec::new();
        }
        let end = self.coarsest_regions.max(1) as f64;
        let start = finest.max(1) as f64;
        let mut prev = finest;
        (1..levels)
            .map(|l| {
                let t = l as f64 / (levels - 1) as f64;
                let geo = (start * (end / start).powf(t)).round() as usize;
                let target = geo.min(prev.saturating_sub(1)).max(1);
                prev = target;
                target
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiLevelPartition {
    /// Index 0 is the finest level.
    pub levels: Vec<LabelMap>,
    /// `merge_parents[l - 1][r]` is the level-`l` id of level-`(l - 1)` region `r`.
    pub merge_parents: Vec<Vec<u32>>,
    /// Levels whose target could not be reached and that duplicate their predecessor.
    pub duplicated: Vec<bool>,
}

impl MultiLevelPartition {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn single(finest: LabelMap) -> Self {
        Self {
            levels: vec![finest],
            merge_parents: Vec::new(),
            duplicated: vec![false],
        }
    }

    /// Checks partition, refinement and monotone coarsening.
    pub fn validate(&self) -> Result<()> {
        for (l, level) in self.levels.iter().enumerate() {
            level.validate()?;
            if l == 0 {
                continue;
            }
            let prev = &self.levels[l - 1];
            if level.region_count() > prev.region_count() {
                return Err(Error::InvalidParameter(format!("level {l} is finer than level {}", l - 1)));
            }
            let parents = &self.merge_parents[l - 1];
            if parents.len() != prev.region_count() {
                return Err(Error::InvalidParameter(format!("parent map of level {l} has wrong size")));
            }
            if prev
                .labels()
                .iter()
                .zip(level.labels())
                .any(|(&child, &parent)| parents[child as usize] != parent)
            {
                return Err(Error::InvalidParameter(format!("level {l} does not refine")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    dist: f64,
    a: u32,
    b: u32,
    va: u32,
    vb: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
            .then(self.va.cmp(&other.va))
            .then(self.vb.cmp(&other.vb))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Agglomerates adjacent regions by mean-Lab distance and snapshots the partition
/// whenever the region count first reaches a scheduled target.
pub fn build_hierarchy(
    finest: &LabelMap,
    img: &RasterImage,
    cfg: &MultisegConfig,
) -> Result<MultiLevelPartition> {
    cfg.validate()?;
    img.require_channels(3)?;
    if img.width() != finest.width() || img.height() != finest.height() {
        return Err(Error::DimensionMismatch("label map and image differ in size".into()));
    }
    let n = finest.region_count();
    let mut sum = vec![[0.0f64; 3]; n];
    let mut area = vec![0f64; n];
    for (i, &l) in finest.labels().iter().enumerate() {
        let lab = lab_normalized([img.data()[3 * i], img.data()[3 * i + 1], img.data()[3 * i + 2]]);
        for c in 0..3 {
            sum[l as usize][c] += lab[c];
        }
        area[l as usize] += 1.0;
    }
    let mut neighbors: Vec<BTreeSet<u32>> = finest
        .adjacency()
        .into_iter()
        .map(|s| s.into_iter().map(|v| v as u32).collect())
        .collect();
    let mut alive = vec![true; n];
    let mut version = vec![0u32; n];
    // owner[r]: the surviving representative each finest region currently belongs to
    let mut owner: Vec<u32> = (0..n as u32).collect();

    let dist = |sum: &[[f64; 3]], area: &[f64], a: usize, b: usize| -> f64 {
        (0..3)
            .map(|c| (sum[a][c] / area[a] - sum[b][c] / area[b]).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut heap = BinaryHeap::new();
    for a in 0..n {
        for &b in &neighbors[a] {
            if (b as usize) > a {
                heap.push(Reverse(Candidate {
                    dist: dist(&sum, &area, a, b as usize),
                    a: a as u32,
                    b,
                    va: 0,
                    vb: 0,
                }));
            }
        }
    }

    let targets = cfg.targets(n);
    let mut levels = vec![finest.clone()];
    let mut merge_parents = Vec::new();
    let mut duplicated = vec![false];
    let mut count = n;

    for &target in &targets {
        let prev = levels.last().unwrap().clone();
        if target >= prev.region_count() {
            log::warn!(
                "merge target {target} unreachable from {} regions; duplicating level",
                prev.region_count()
            );
            merge_parents.push((0..prev.region_count() as u32).collect());
            levels.push(prev);
            duplicated.push(true);
            continue;
        }
        while count > target {
            let Some(Reverse(c)) = heap.pop() else { break };
            let (a, b) = (c.a as usize, c.b as usize);
            if !alive[a] || !alive[b] || version[a] != c.va || version[b] != c.vb {
                continue;
            }
            // b folds into a (a is always the smaller id)
            alive[b] = false;
            for ch in 0..3 {
                sum[a][ch] += sum[b][ch];
            }
            area[a] += area[b];
            version[a] += 1;
            let moved = std::mem::take(&mut neighbors[b]);
            for nb in moved {
                if nb as usize != a {
                    neighbors[nb as usize].remove(&(b as u32));
                    neighbors[nb as usize].insert(a as u32);
                    neighbors[a].insert(nb);
                }
            }
            neighbors[a].remove(&(b as u32));
            neighbors[a].remove(&(a as u32));
            for o in owner.iter_mut() {
                if *o == b as u32 {
                    *o = a as u32;
                }
            }
            for &nb in &neighbors[a] {
                let (x, y) = if (nb as usize) < a { (nb as usize, a) } else { (a, nb as usize) };
                heap.push(Reverse(Candidate {
                    dist: dist(&sum, &area, x, y),
                    a: x as u32,
                    b: y as u32,
                    va: version[x],
                    vb: version[y],
                }));
            }
            count -= 1;
        }
        let raw: Vec<u32> = finest.labels().iter().map(|&l| owner[l as usize]).collect();
        let level = LabelMap::from_raw(finest.width(), finest.height(), &raw);
        let mut parents = vec![0u32; prev.region_count()];
        for (&child, &parent) in prev.labels().iter().zip(level.labels()) {
            parents[child as usize] = parent;
        }
        let dup = level.region_count() == prev.region_count();
        merge_parents.push(parents);
        levels.push(level);
        duplicated.push(dup);
    }
    Ok(MultiLevelPartition {
        levels,
        merge_parents,
        duplicated,
    })
}

/// Finest segmentation plus hierarchy in one call.
pub fn segment_levels(img: &RasterImage, cfg: &MultisegConfig) -> Result<MultiLevelPartition> {
    let finest = felzenszwalb_segment(img, cfg.felz_k, cfg.felz_min_size)?;
    build_hierarchy(&finest, img, cfg)
}
