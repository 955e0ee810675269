//! Convex hulls of point sets and of binary masks.

use super::raster::BinaryMask;
use crate::error::{Error, Result};

pub type Point = (f64, f64);

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; counter-clockwise in a y-up frame, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite hull input"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0
}

/// Only row extremes can be hull vertices; this keeps hull input linear in the height.
fn row_extreme_centers(mask: &BinaryMask) -> Vec<Point> {
    let mut pts = Vec::new();
    for y in 0..mask.height() {
        let mut first = None;
        let mut last = None;
        for x in 0..mask.width() {
            if mask.get(x, y) {
                first.get_or_insert(x);
                last = Some(x);
            }
        }
        if let (Some(a), Some(b)) = (first, last) {
            pts.push((a as f64, y as f64));
            if b != a {
                pts.push((b as f64, y as f64));
            }
        }
    }
    pts
}

/// Row-extreme pixel centres of a pixel list; enough to recover its convex hull.
pub fn row_extreme_points(pixels: &[(usize, usize)]) -> Vec<Point> {
    use std::collections::BTreeMap;
    let mut rows: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &(x, y) in pixels {
        let e = rows.entry(y).or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    let mut pts = Vec::with_capacity(rows.len() * 2);
    for (y, (a, b)) in rows {
        pts.push((a as f64, y as f64));
        if b != a {
            pts.push((b as f64, y as f64));
        }
    }
    pts
}

fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Filled convex hull of every set pixel centre.
///
/// Collinear inputs produce a zero-area hull; those are rasterised as the pixels
/// within half a pixel of the segment.
pub fn convex_hull_mask(mask: &BinaryMask) -> Result<BinaryMask> {
    if mask.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hull = convex_hull(&row_extreme_centers(mask));
    let (w, h) = (mask.width(), mask.height());
    if hull.len() < 3 {
        let a = hull[0];
        let b = *hull.last().unwrap();
        let mut out = BinaryMask::from_fn(w, h, |x, y| {
            dist_to_segment((x as f64, y as f64), a, b) <= 0.5 + 1e-9
        });
        // keep the result a superset even on pathological rounding
        out = out.or(mask);
        return Ok(out);
    }
    const EPS: f64 = 1e-9;
    let n = hull.len();
    let ymin = hull.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let ymax = hull.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min((h - 1) as f64) as usize;
    let mut out = BinaryMask::new(w, h);
    for y in ymin..=ymax {
        let yf = y as f64;
        // intersect the horizontal line with the convex polygon
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            let (y0, y1) = (a.1.min(b.1), a.1.max(b.1));
            if yf < y0 - EPS || yf > y1 + EPS {
                continue;
            }
            if (b.1 - a.1).abs() < EPS {
                lo = lo.min(a.0.min(b.0));
                hi = hi.max(a.0.max(b.0));
            } else {
                let t = ((yf - a.1) / (b.1 - a.1)).clamp(0.0, 1.0);
                let x = a.0 + t * (b.0 - a.0);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo > hi {
            continue;
        }
        let x0 = (lo - EPS).ceil().max(0.0) as usize;
        let x1 = (hi + EPS).floor().min((w - 1) as f64);
        if x1 < 0.0 {
            continue;
        }
        for x in x0..=(x1 as usize) {
            out.set(x, y, true);
        }
    }
    Ok(out.or(mask))
}
