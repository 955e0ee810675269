//! From saliency map to lesion mask: threshold, area filtering and convex hull,
//! then distance-regularized level-set refinement and morphological cleanup.

use crate::error::{Error, Result};
use crate::imgcore::distance::signed_distance;
use crate::imgcore::filter::{gaussian_blur, gradient};
use crate::imgcore::histogram::channel_entropy;
use crate::imgcore::hull::convex_hull_mask;
use crate::imgcore::morph::{close, connected_components, fill_holes, largest_component, open, StructuringElement};
use crate::imgcore::{BinaryMask, LevelSetField, Plane, RasterImage};
use crate::multiseg::LabelMap;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrlseParams {
    pub mu: f64,
    pub lambda: f64,
    /// Balloon weight; positive shrinks the contour (φ < 0 inside).
    pub alpha: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub iters: usize,
    pub sigma: f64,
    /// The channel is multiplied by this before the edge indicator is computed.
    pub intensity_scale: f64,
    /// Rebuild φ as the signed distance of its own interior every this many
    /// iterations (0 disables).
    pub reinit_every: usize,
}

impl Default for DrlseParams {
    fn default() -> Self {
        Self {
            mu: 0.04,
            lambda: 5.0,
            alpha: 1.5,
            epsilon: 1.5,
            dt: 5.0,
            iters: 200,
            sigma: 1.5,
            intensity_scale: 255.0,
            reinit_every: 5,
        }
    }
}

impl DrlseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu * self.dt < 0.25) {
            return Err(Error::UnstableParams(self.mu * self.dt));
        }
        if !(self.epsilon > 0.0) || !(self.dt > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::InvalidParameter("epsilon and dt must be positive, sigma non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub threshold: f64,
    pub drlse: DrlseParams,
    pub cleanup_radius: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            drlse: DrlseParams::default(),
            cleanup_radius: 5,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter("saliency threshold must be in [0,1]".into()));
        }
        self.drlse.validate()
    }
}

/// Threshold, drop objects smaller than mean − 2·(sample std) of the object
/// areas, and return the filled convex hull of what remains.
pub fn initial_mask(saliency: &Plane, threshold: f64) -> Result<BinaryMask> {
    let bin = BinaryMask::threshold(saliency, threshold, false);
    let objects = connected_components(&bin);
    if objects.is_empty() {
        return Err(Error::NoSalientObject);
    }
    let n = objects.len() as f64;
    let mean = objects.iter().map(|c| c.area as f64).sum::<f64>() / n;
    let std = if objects.len() > 1 {
        (objects.iter().map(|c| (c.area as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let cutoff = mean - 2.0 * std;
    let mut kept = BinaryMask::new(saliency.width(), saliency.height());
    for c in objects.iter().filter(|c| c.area as f64 >= cutoff) {
        for &(x, y) in &c.pixels {
            kept.set(x, y, true);
        }
    }
    convex_hull_mask(&kept)
}

/// The connected piece of the region with the highest mean saliency (ties: lowest id).
pub fn fallback_mask(saliency: &Plane, regions: &LabelMap) -> BinaryMask {
    let n = regions.region_count();
    let mut sum = vec![0.0; n];
    let mut area = vec![0usize; n];
    for (&l, &s) in regions.labels().iter().zip(saliency.data()) {
        sum[l as usize] += s;
        area[l as usize] += 1;
    }
    let best = (0..n)
        .max_by(|&a, &b| {
            let (ma, mb) = (sum[a] / area[a] as f64, sum[b] / area[b] as f64);
            ma.total_cmp(&mb).then(b.cmp(&a))
        })
        .unwrap_or(0) as u32;
    let mask = BinaryMask::from_vec(
        regions.width(),
        regions.height(),
        regions.labels().iter().map(|&l| l == best).collect(),
    );
    largest_component(&mask)
}

/// The channel among R, G, B and gray with the largest 256-bin entropy
/// (ties resolved in that order); single-channel input is returned as is.
pub fn select_evolution_channel(img: &RasterImage) -> Plane {
    if img.channels() == 1 {
        return img.plane(0);
    }
    let entropies = channel_entropy(img);
    let mut best = 0;
    for (i, &e) in entropies.iter().enumerate() {
        if e > entropies[best] {
            best = i;
        }
    }
    if best < 3 {
        img.plane(best)
    } else {
        crate::imgcore::color::gray_plane(img)
    }
}

/// Edge indicator 1 / (1 + |∇(G_σ * I)|²).
pub fn edge_indicator(channel: &Plane, sigma: f64, scale: f64) -> Plane {
    let smooth = gaussian_blur(&channel.map(|v| v * scale), sigma);
    let (gx, gy) = gradient(&smooth);
    Plane::from_fn(channel.width(), channel.height(), |x, y| {
        1.0 / (1.0 + gx.get(x, y).powi(2) + gy.get(x, y).powi(2))
    })
}

fn neumann(phi: &mut Plane) {
    let (w, h) = (phi.width(), phi.height());
    if w < 5 || h < 5 {
        return;
    }
    let mirror = |i: usize, n: usize| -> usize {
        if i == 0 {
            2
        } else if i == n - 1 {
            n - 3
        } else {
            i
        }
    };
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                let v = phi.get(mirror(x, w), mirror(y, h));
                phi.set(x, y, v);
            }
        }
    }
}

fn divergence(nx: &Plane, ny: &Plane) -> Plane {
    let (nxx, _) = gradient(nx);
    let (_, nyy) = gradient(ny);
    Plane::from_fn(nx.width(), nx.height(), |x, y| nxx.get(x, y) + nyy.get(x, y))
}

fn laplacian(phi: &Plane) -> Plane {
    Plane::from_fn(phi.width(), phi.height(), |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        phi.get_clamped(xi - 1, yi)
            + phi.get_clamped(xi + 1, yi)
            + phi.get_clamped(xi, yi - 1)
            + phi.get_clamped(xi, yi + 1)
            - 4.0 * phi.get(x, y)
    })
}

fn dirac(x: f64, eps: f64) -> f64 {
    if x.abs() <= eps {
        (1.0 + (std::f64::consts::PI * x / eps).cos()) / (2.0 * eps)
    } else {
        0.0
    }
}

pub struct DrlseRun {
    pub field: LevelSetField,
    /// φ every `snapshot_every` iterations (when requested), tagged with the iteration.
    pub snapshots: Vec<(usize, Plane)>,
}

impl DrlseRun {
    pub fn mask(&self) -> BinaryMask {
        self.field.interior()
    }
}

pub fn drlse_evolve(init: &BinaryMask, channel: &Plane, params: &DrlseParams) -> Result<BinaryMask> {
    Ok(drlse_run(init, channel, params, 0)?.mask())
}

/// Explicit Euler updates of the edge-based DRLSE equation with the double-well
/// distance regularizer.
pub fn drlse_run(init: &BinaryMask, channel: &Plane, params: &DrlseParams, snapshot_every: usize) -> Result<DrlseRun> {
    params.validate()?;
    if init.width() != channel.width() || init.height() != channel.height() {
        return Err(Error::DimensionMismatch("initial mask and channel differ in size".into()));
    }
    let mut phi = signed_distance(init)?.phi;
    let mut snapshots = Vec::new();
    if params.iters == 0 {
        return Ok(DrlseRun {
            field: LevelSetField { phi },
            snapshots,
        });
    }
    let (w, h) = (phi.width(), phi.height());
    let g = edge_indicator(channel, params.sigma, params.intensity_scale);
    let (vx, vy) = gradient(&g);
    const TINY: f64 = 1e-10;
    for it in 1..=params.iters {
        neumann(&mut phi);
        let (px, py) = gradient(&phi);
        let n = w * h;
        let mut nx = vec![0.0; n];
        let mut ny = vec![0.0; n];
        let mut rx = vec![0.0; n];
        let mut ry = vec![0.0; n];
        for i in 0..n {
            let (a, b) = (px.data()[i], py.data()[i]);
            let s = (a * a + b * b).sqrt();
            nx[i] = a / (s + TINY);
            ny[i] = b / (s + TINY);
            // double-well potential derivative ratio d_p(s) = p'(s)/s
            let ps = if s <= 1.0 {
                (2.0 * std::f64::consts::PI * s).sin() / (2.0 * std::f64::consts::PI)
            } else {
                s - 1.0
            };
            let dps = (if ps != 0.0 { ps } else { 1.0 }) / (if s != 0.0 { s } else { 1.0 });
            rx[i] = dps * a - a;
            ry[i] = dps * b - b;
        }
        let nx = Plane::from_vec(w, h, nx);
        let ny = Plane::from_vec(w, h, ny);
        let curvature = divergence(&nx, &ny);
        let dist_reg = divergence(&Plane::from_vec(w, h, rx), &Plane::from_vec(w, h, ry));
        let lap = laplacian(&phi);
        let data = phi.data_mut();
        for i in 0..n {
            let d = dirac(data[i], params.epsilon);
            let reg = dist_reg.data()[i] + lap.data()[i];
            let edge = d * (vx.data()[i] * nx.data()[i] + vy.data()[i] * ny.data()[i])
                + d * g.data()[i] * curvature.data()[i];
            let area = d * g.data()[i];
            data[i] += params.dt * (params.mu * reg + params.lambda * edge + params.alpha * area);
        }
        if params.reinit_every > 0 && it % params.reinit_every == 0 && it < params.iters {
            // the balloon step overshoots the Dirac band and leaves a flat shelf
            // behind the front; redistancing restores unit slope there
            neumann(&mut phi);
            match signed_distance(&LevelSetField { phi: phi.clone() }.interior()) {
                Ok(f) => phi = f.phi,
                Err(Error::DegenerateMask) => {
                    log::warn!("level set vanished or filled the frame at iteration {it}");
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if snapshot_every > 0 && it % snapshot_every == 0 {
            snapshots.push((it, phi.clone()));
        }
    }
    neumann(&mut phi);
    Ok(DrlseRun {
        field: LevelSetField { phi },
        snapshots,
    })
}

/// Open then close with a disk, fill holes, keep the largest component.
pub fn final_cleanup(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let cleaned = if radius > 0 {
        let se = StructuringElement::disk(radius).expect("positive radius");
        close(&open(mask, &se), &se)
    } else {
        mask.clone()
    };
    let out = largest_component(&fill_holes(&cleaned));
    if out.is_empty() {
        log::warn!("cleanup removed the whole mask; keeping the uncleaned mask");
        return mask.clone();
    }
    out
}
