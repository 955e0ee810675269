//! Exact Euclidean distance transform (separable lower-envelope algorithm) and
//! signed distance fields.

use super::raster::{BinaryMask, LevelSetField, Plane};
use crate::error::{Error, Result};

const INF: f64 = 1e20;

/// Squared distance transform of a 1-D sampled function.
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *o = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Euclidean distance from every pixel to the nearest `true` pixel.
///
/// Returns `None` when the mask has no set pixel.
pub fn distance_to_set(mask: &BinaryMask) -> Option<Plane> {
    if mask.is_empty() {
        return None;
    }
    let (w, h) = (mask.width(), mask.height());
    let n = w.max(h);
    let mut grid: Vec<f64> = mask.data().iter().map(|&b| if b { 0.0 } else { INF }).collect();
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        dt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        dt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        for x in 0..w {
            grid[y * w + x] = out[x].sqrt();
        }
    }
    Some(Plane::from_vec(w, h, grid))
}

/// Signed distance to the mask contour: negative inside, positive outside.
///
/// The contour sits half a pixel beyond the outermost mask pixels, so pixels on
/// either side of it read `∓0.5`.
pub fn signed_distance(mask: &BinaryMask) -> Result<LevelSetField> {
    if mask.is_empty() || mask.is_full() {
        return Err(Error::DegenerateMask);
    }
    let to_inside = distance_to_set(mask).ok_or(Error::DegenerateMask)?;
    let to_outside = distance_to_set(&mask.complement()).ok_or(Error::DegenerateMask)?;
    let phi = mask
        .data()
        .iter()
        .zip(to_inside.data().iter().zip(to_outside.data()))
        .map(|(&inside, (&din, &dout))| if inside { -(dout - 0.5) } else { din - 0.5 })
        .collect();
    Ok(LevelSetField {
        phi: Plane::from_vec(mask.width(), mask.height(), phi),
    })
}
