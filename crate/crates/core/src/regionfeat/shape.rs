//! Shape statistics of a pixel set: moments, elongation, minimum-area box.

use crate::error::{Error, Result};
use crate::imgcore::hull::{convex_hull, row_extreme_points, Point};

/// Rotated rectangle; `angle` is the direction of the `width` side in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotatedBox {
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl RotatedBox {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionStats {
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
    /// Region pixels with a 4-neighbour outside the region or on the image edge.
    pub perimeter: usize,
    pub centroid: (f64, f64),
    /// Second central moments normalised by area, each pixel a unit square.
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
    pub min_box: RotatedBox,
}

impl RegionStats {
    pub fn from_pixels(pixels: Vec<(usize, usize)>, width: usize, height: usize) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = pixels.len() as f64;
        let (sx, sy) = pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
        let (cx, cy) = (sx / n, sy / n);
        let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
        for &(x, y) in &pixels {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            m20 += dx * dx;
            m02 += dy * dy;
            m11 += dx * dy;
        }
        let perimeter = boundary_count(&pixels, width, height);
        let min_box = min_area_box(&convex_hull(&row_extreme_points(&pixels)));
        Ok(Self {
            area: pixels.len(),
            perimeter,
            centroid: (cx, cy),
            mu20: m20 / n + 1.0 / 12.0,
            mu02: m02 / n + 1.0 / 12.0,
            mu11: m11 / n,
            min_box,
            pixels,
        })
    }

    /// Eigenvalues (major, minor) of the moment matrix.
    pub fn principal_moments(&self) -> (f64, f64) {
        let mean = (self.mu20 + self.mu02) / 2.0;
        let half_diff = (self.mu20 - self.mu02) / 2.0;
        let r = (half_diff * half_diff + self.mu11 * self.mu11).sqrt();
        (mean + r, (mean - r).max(0.0))
    }
}

fn boundary_count(pixels: &[(usize, usize)], width: usize, height: usize) -> usize {
    let (x0, x1) = pixels.iter().fold((usize::MAX, 0), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pixels.iter().fold((usize::MAX, 0), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let bw = x1 - x0 + 1;
    let mut inside = vec![false; bw * (y1 - y0 + 1)];
    for &(x, y) in pixels {
        inside[(y - y0) * bw + x - x0] = true;
    }
    let is_in = |x: isize, y: isize| -> bool {
        x >= x0 as isize
            && x <= x1 as isize
            && y >= y0 as isize
            && y <= y1 as isize
            && inside[(y as usize - y0) * bw + x as usize - x0]
    };
    pixels
        .iter()
        .filter(|&&(x, y)| {
            x == 0
                || y == 0
                || x + 1 == width
                || y + 1 == height
                || [(-1, 0), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|(dx, dy)| !is_in(x as isize + dx, y as isize + dy))
        })
        .count()
}

/// Rotating calipers over hull edges.
pub fn min_area_box(hull: &[Point]) -> RotatedBox {
    if hull.len() < 3 {
        let (w, angle) = match hull {
            [a, b] => (((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt(), (b.1 - a.1).atan2(b.0 - a.0)),
            _ => (0.0, 0.0),
        };
        return RotatedBox { width: w, height: 0.0, angle };
    }
    let n = hull.len();
    let mut best = RotatedBox { width: 0.0, height: 0.0, angle: 0.0 };
    let mut best_area = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        let (ux, uy) = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in hull {
            let u = p.0 * ux + p.1 * uy;
            let v = -p.0 * uy + p.1 * ux;
            lo_u = lo_u.min(u);
            hi_u = hi_u.max(u);
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        let area = (hi_u - lo_u) * (hi_v - lo_v);
        if area < best_area {
            best_area = area;
            best = RotatedBox { width: hi_u - lo_u, height: hi_v - lo_v, angle: uy.atan2(ux) };
        }
    }
    best
}

/// 1 − minor/major axis length of the moment-matched ellipse.
pub fn elongation(stats: &RegionStats) -> f64 {
    let (major, minor) = stats.principal_moments();
    if major <= 0.0 {
        return 0.0;
    }
    (1.0 - (minor / major).sqrt()).clamp(0.0, 1.0)
}

/// Region area over the area of its minimum-area bounding rectangle, the box
/// fitted to pixel centres and the ratio capped at 1.
pub fn extent(stats: &RegionStats) -> f64 {
    let box_area = stats.min_box.area();
    if box_area <= 0.0 {
        return 1.0;
    }
    (stats.area as f64 / box_area).min(1.0)
}
