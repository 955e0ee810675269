//! Circle evidence from edge-distance histograms: every candidate centre counts
//! edge pixels per integer distance, and a peak large relative to the matching
//! circumference marks a circle.

use crate::filterbank::{prewitt_gradients, prewitt_magnitude};
use crate::imgcore::filter::gaussian_blur;
use crate::imgcore::histogram::otsu_threshold;
use crate::imgcore::morph::{dilate, StructuringElement};
use crate::imgcore::{BinaryMask, Plane};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircleConfig {
    /// A centre needs at least `rho · 2π · radius` votes.
    pub rho: f64,
    /// Distance bins below this are ignored (edge pixels vote for themselves at 0).
    pub min_radius: usize,
    pub annulus_width: f64,
    pub arc_disk_radius: usize,
    pub smoothing_sigma: f64,
    /// Evaluate every pixel as a candidate regardless of cost.
    pub exact: bool,
    /// Edge-count × candidate-count above which candidates are subsampled.
    pub work_limit: f64,
    pub subsample: usize,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            min_radius: 5,
            annulus_width: 5.0,
            arc_disk_radius: 10,
            smoothing_sigma: 3.0,
            exact: false,
            work_limit: 1e8,
            subsample: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub x: usize,
    pub y: usize,
    pub radius: usize,
    pub votes: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircleMaps {
    /// Peak height of each pixel's distance histogram.
    pub center_map: Plane,
    /// Distance bin holding that peak.
    pub radius_map: Plane,
    pub probability_map: Plane,
    pub circles: Vec<Circle>,
}

impl CircleMaps {
    fn empty(w: usize, h: usize) -> Self {
        Self {
            center_map: Plane::new(w, h),
            radius_map: Plane::new(w, h),
            probability_map: Plane::new(w, h),
            circles: Vec::new(),
        }
    }
}

/// Prewitt magnitude above its Otsu level, thinned to ridge pixels along the
/// gradient direction so each edge contributes a single-pixel curve.
pub fn edge_map(gray: &Plane) -> BinaryMask {
    let (w, h) = (gray.width(), gray.height());
    let mag = prewitt_magnitude(gray);
    let Some(t) = otsu_threshold(&mag) else {
        return BinaryMask::new(w, h);
    };
    let (gx, gy) = prewitt_gradients(gray);
    BinaryMask::from_fn(w, h, |x, y| {
        let m = mag.get(x, y);
        if m <= t {
            return false;
        }
        let angle = gy.get(x, y).atan2(gx.get(x, y));
        let sector = ((angle / std::f64::consts::FRAC_PI_4).round() as i64).rem_euclid(4);
        let (dx, dy) = match sector {
            0 => (1, 0),
            1 => (1, 1),
            2 => (0, 1),
            _ => (-1, 1),
        };
        let (x, y) = (x as isize, y as isize);
        let prev = mag.get_clamped(x - dx, y - dy);
        let next = mag.get_clamped(x + dx, y + dy);
        m >= prev && m > next
    })
}

pub fn detect_circles(gray: &Plane, cfg: &CircleConfig) -> CircleMaps {
    detect_circles_on_edges(&edge_map(gray), cfg)
}

pub fn detect_circles_on_edges(edges: &BinaryMask, cfg: &CircleConfig) -> CircleMaps {
    let (w, h) = (edges.width(), edges.height());
    let edge_px: Vec<(f64, f64)> = edges.pixels().map(|(x, y)| (x as f64, y as f64)).collect();
    if edge_px.is_empty() {
        return CircleMaps::empty(w, h);
    }
    let step = if cfg.exact || (edge_px.len() as f64) * ((w * h) as f64) <= cfg.work_limit {
        1
    } else {
        cfg.subsample.max(1)
    };
    let gw = w.div_ceil(step);
    let gh = h.div_ceil(step);
    let max_bin = ((w * w + h * h) as f64).sqrt().ceil() as usize + 1;

    // (votes, radius) per grid cell, sampled at the cell's top-left pixel
    let grid: Vec<(u32, usize)> = (0..gh)
        .into_par_iter()
        .flat_map_iter(|gy| {
            let mut hist = vec![0u32; max_bin];
            let edge_px = &edge_px;
            (0..gw)
                .map(move |gx| {
                    let (cx, cy) = ((gx * step) as f64, (gy * step) as f64);
                    hist.iter_mut().for_each(|v| *v = 0);
                    for &(ex, ey) in edge_px {
                        let d = ((ex - cx).powi(2) + (ey - cy).powi(2)).sqrt();
                        hist[d.round() as usize] += 1;
                    }
                    let mut best = (0u32, 0usize);
                    for (r, &v) in hist.iter().enumerate().skip(cfg.min_radius) {
                        if v > best.0 {
                            best = (v, r);
                        }
                    }
                    best
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let votes = |gx: isize, gy: isize| -> u32 {
        if gx < 0 || gy < 0 || gx >= gw as isize || gy >= gh as isize {
            0
        } else {
            grid[gy as usize * gw + gx as usize].0
        }
    };
    let mut circles = Vec::new();
    for gy in 0..gh {
        for gx in 0..gw {
            let (v, r) = grid[gy * gw + gx];
            if r == 0 || (v as f64) < cfg.rho * std::f64::consts::TAU * r as f64 {
                continue;
            }
            // plateau ties go to the first cell in raster order
            let mut is_max = true;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let other = votes(gx as isize + dx, gy as isize + dy);
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if other > v || (earlier && other == v) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                circles.push(Circle { x: gx * step, y: gy * step, radius: r, votes: v });
            }
        }
    }

    let center_map = Plane::from_fn(w, h, |x, y| grid[(y / step) * gw + x / step].0 as f64);
    let radius_map = Plane::from_fn(w, h, |x, y| grid[(y / step) * gw + x / step].1 as f64);
    let probability_map = probability_map(edges, &circles, cfg);
    CircleMaps {
        center_map,
        radius_map,
        probability_map,
        circles,
    }
}

/// Unit annuli around each circle and unit disks around the edge pixels lying on
/// one, smoothed and clamped to [0, 1].
fn probability_map(edges: &BinaryMask, circles: &[Circle], cfg: &CircleConfig) -> Plane {
    let (w, h) = (edges.width(), edges.height());
    if circles.is_empty() {
        return Plane::new(w, h);
    }
    let dist = |c: &Circle, x: usize, y: usize| {
        ((x as f64 - c.x as f64).powi(2) + (y as f64 - c.y as f64).powi(2)).sqrt() - c.radius as f64
    };
    let half = cfg.annulus_width / 2.0;
    let annuli = BinaryMask::from_fn(w, h, |x, y| circles.iter().any(|c| dist(c, x, y).abs() <= half));
    let arcs = BinaryMask::from_fn(w, h, |x, y| {
        edges.get(x, y) && circles.iter().any(|c| dist(c, x, y).abs() <= 1.5)
    });
    let mut union = annuli;
    if cfg.arc_disk_radius > 0 {
        let se = StructuringElement::disk(cfg.arc_disk_radius).expect("positive radius");
        union = union.or(&dilate(&arcs, &se));
    }
    gaussian_blur(&union.to_plane(), cfg.smoothing_sigma).map(|v| v.clamp(0.0, 1.0))
}

/// Mean probability over the region's pixels.
pub fn circle_probability(pixels: &[u32], maps: &CircleMaps) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let data = maps.probability_map.data();
    pixels.iter().map(|&i| data[i as usize]).sum::<f64>() / pixels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_image(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> Plane {
        Plane::from_fn(w, h, |x, y| {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                0.2
            } else {
                0.8
            }
        })
    }

    fn exact() -> CircleConfig {
        CircleConfig { exact: true, ..Default::default() }
    }

    #[test]
    fn constant_image_gives_zero_maps() {
        let maps = detect_circles(&Plane::filled(40, 30, 0.5), &exact());
        assert!(maps.center_map.data().iter().all(|&v| v == 0.0));
        assert!(maps.probability_map.data().iter().all(|&v| v == 0.0));
        assert!(maps.circles.is_empty());
    }

    #[test]
    fn finds_full_circle() {
        let maps = detect_circles(&disk_image(160, 120, 70.0, 60.0, 30.0), &exact());
        assert_eq!(maps.circles.len(), 1, "{:?}", maps.circles);
        let c = maps.circles[0];
        assert!((c.x as f64 - 70.0).abs() <= 2.0 && (c.y as f64 - 60.0).abs() <= 2.0, "{c:?}");
        assert!((c.radius as f64 - 30.0).abs() <= 2.0, "{c:?}");
        assert!(maps.probability_map.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn translation_equivariant() {
        let a = detect_circles(&disk_image(140, 110, 60.0, 50.0, 25.0), &exact());
        let b = detect_circles(&disk_image(140, 110, 67.0, 55.0, 25.0), &exact());
        assert_eq!(a.circles.len(), 1);
        assert_eq!(b.circles.len(), 1);
        assert!((b.circles[0].x as i64 - a.circles[0].x as i64 - 7).abs() <= 1);
        assert!((b.circles[0].y as i64 - a.circles[0].y as i64 - 5).abs() <= 1);
    }

    #[test]
    fn quarter_arc_rejected() {
        // thin dark quarter arc on a bright field
        let (cx, cy, r) = (30.0, 30.0, 40.0);
        let img = Plane::from_fn(120, 120, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let d = (dx * dx + dy * dy).sqrt();
            if dx >= 0.0 && dy >= 0.0 && (d - r).abs() < 1.0 { 0.2 } else { 0.8 }
        });
        let maps = detect_circles(&img, &exact());
        assert!(maps.circles.is_empty(), "{:?}", maps.circles);
    }

    #[test]
    fn region_on_annulus_scores_high() {
        let maps = detect_circles(&disk_image(160, 120, 70.0, 60.0, 30.0), &exact());
        let c = maps.circles[0];
        let ring: Vec<u32> = (0..160 * 120u32)
            .filter(|&i| {
                let (x, y) = ((i % 160) as f64, (i / 160) as f64);
                let d = ((x - c.x as f64).powi(2) + (y - c.y as f64).powi(2)).sqrt();
                (d - c.radius as f64).abs() <= 2.5
            })
            .collect();
        assert!(circle_probability(&ring, &maps) >= 0.8);
        let far: Vec<u32> = (0..160u32).collect();
        assert_eq!(circle_probability(&far, &maps), 0.0);
    }

    #[test]
    fn subsampled_mode_still_finds_circle() {
        let cfg = CircleConfig { work_limit: 0.0, ..Default::default() };
        let maps = detect_circles(&disk_image(160, 120, 72.0, 60.0, 30.0), &cfg);
        assert!(!maps.circles.is_empty());
        let c = maps.circles[0];
        assert!((c.x as f64 - 72.0).abs() <= 4.0 && (c.y as f64 - 60.0).abs() <= 4.0, "{c:?}");
    }
}
