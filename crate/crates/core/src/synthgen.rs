//! Deterministic dermoscopy-like test images: a dark lesion on smooth skin, with
//! optional hair, colour-chart arcs, vignetted corners and a global colour cast.

use crate::error::{Error, Result};
use crate::imgcore::distance::signed_distance;
use crate::imgcore::morph::{fill_holes, largest_component};
use crate::imgcore::{BinaryMask, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Ellipse,
    /// Star-shaped outline with a random low-order Fourier radius.
    Blob,
    /// Either of the above, chosen per image.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub shape: ShapeFamily,
    /// Allowed lesion area as a fraction of the frame.
    pub area_fraction: (f64, f64),
    /// Mean skin RGB; each image jitters it.
    pub skin_rgb: [f64; 3],
    pub skin_jitter: f64,
    /// Lesion brightness relative to skin is `1 - contrast`, drawn from this range.
    pub contrast: (f64, f64),
    /// Width in pixels of the lesion's blurred rim, drawn from this range.
    pub edge_softness: (f64, f64),
    /// Peak relative brightness change of the darker and lighter blotches inside the lesion.
    pub variegation: f64,
    pub noise_std: f64,
    pub hair: bool,
    pub color_chart: bool,
    pub dark_corners: bool,
    pub color_cast: bool,
    /// Per-channel cast gains are drawn from `[1 - s, 1 + s]`.
    pub cast_strength: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 10,
            width: 400,
            height: 300,
            shape: ShapeFamily::Mixed,
            area_fraction: (0.05, 0.4),
            skin_rgb: [0.88, 0.68, 0.58],
            skin_jitter: 0.04,
            contrast: (0.35, 0.6),
            edge_softness: (1.0, 6.0),
            variegation: 0.25,
            noise_std: 0.01,
            hair: true,
            color_chart: true,
            dark_corners: true,
            color_cast: true,
            cast_strength: 0.2,
        }
    }
}

impl SynthSpec {
    pub fn without_artifacts(mut self) -> Self {
        self.hair = false;
        self.color_chart = false;
        self.dark_corners = false;
        self.color_cast = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.area_fraction;
        if self.count == 0 {
            return Err(Error::InvalidParameter("image count must be at least 1".into()));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::InvalidParameter("synthetic images must be at least 32x32".into()));
        }
        if !(0.0 < lo && lo <= hi && hi < 0.7) {
            return Err(Error::InvalidParameter(format!("bad area range ({lo}, {hi})")));
        }
        if !(0.0 <= self.contrast.0 && self.contrast.0 <= self.contrast.1 && self.contrast.1 < 1.0) {
            return Err(Error::InvalidParameter("contrast range must lie in [0, 1)".into()));
        }
        if !(0.0 < self.edge_softness.0 && self.edge_softness.0 <= self.edge_softness.1) {
            return Err(Error::InvalidParameter("edge softness range must be positive and ordered".into()));
        }
        if !(0.0..1.0).contains(&self.variegation) {
            return Err(Error::InvalidParameter("variegation must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.cast_strength) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("cast strength in [0,1), noise std >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthSample {
    pub image: RasterImage,
    pub gt: BinaryMask,
}

/// Seed for image `index`; generation never depends on batch order or threads.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    (0..spec.count).into_par_iter().map(|i| generate_one(spec, i)).collect()
}

pub fn generate_one(spec: &SynthSpec, index: usize) -> Result<SynthSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(spec.seed, index));
    let gt = lesion_mask(spec, &mut rng)?;
    let image = render(spec, &gt, &mut rng);
    Ok(SynthSample { image, gt })
}

struct Outline {
    cx: f64,
    cy: f64,
    /// Radius as a function of angle, relative to `scale`.
    harmonics: Vec<(f64, f64)>,
    axes: (f64, f64),
    rotation: f64,
    scale: f64,
}

impl Outline {
    fn inside(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        let (u, v) = ((dx * c + dy * s) / self.axes.0, (-dx * s + dy * c) / self.axes.1);
        let rho = (u * u + v * v).sqrt();
        let theta = v.atan2(u);
        let mut r = 1.0;
        for (k, &(amp, phase)) in self.harmonics.iter().enumerate() {
            r += amp * ((k as f64 + 2.0) * theta + phase).cos();
        }
        rho <= self.scale * r
    }
}

fn borders_touched(m: &BinaryMask) -> usize {
    let (w, h) = (m.width(), m.height());
    [
        (0..w).any(|x| m.get(x, 0)),
        (0..w).any(|x| m.get(x, h - 1)),
        (0..h).any(|y| m.get(0, y)),
        (0..h).any(|y| m.get(w - 1, y)),
    ]
    .iter()
    .filter(|&&t| t)
    .count()
}

fn lesion_mask(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<BinaryMask> {
    let (w, h) = (spec.width, spec.height);
    let total = (w * h) as f64;
    let (lo, hi) = spec.area_fraction;
    for _ in 0..1000 {
        let blob = match spec.shape {
            ShapeFamily::Ellipse => false,
            ShapeFamily::Blob => true,
            ShapeFamily::Mixed => rng.random_bool(0.5),
        };
        let target = rng.random_range(lo..=hi) * total;
        let ratio = rng.random_range(0.6..1.0);
        let harmonics: Vec<(f64, f64)> = if blob {
            (0..4).map(|k| (rng.random_range(0.0..0.12 / (k as f64 + 1.0)), rng.random_range(0.0..2.0 * PI))).collect()
        } else {
            Vec::new()
        };
        // area of the unit outline is ~ π·ratio; solve for the scale hitting the target
        let scale = (target / (PI * ratio)).sqrt();
        let margin = 0.25 * scale;
        let outline = Outline {
            cx: rng.random_range(w as f64 * 0.3..w as f64 * 0.7) + rng.random_range(-margin..=margin),
            cy: rng.random_range(h as f64 * 0.3..h as f64 * 0.7) + rng.random_range(-margin..=margin),
            harmonics,
            axes: (1.0, ratio),
            rotation: rng.random_range(0.0..PI),
            scale,
        };
        let raw = BinaryMask::from_fn(w, h, |x, y| outline.inside(x as f64 + 0.5, y as f64 + 0.5));
        let mask = fill_holes(&largest_component(&raw));
        let frac = mask.count() as f64 / total;
        if frac >= lo && frac <= hi && borders_touched(&mask) <= 2 && is_4_connected(&mask) {
            return Ok(mask);
        }
    }
    Err(Error::InvalidParameter("could not place a lesion within the area range".into()))
}

fn is_4_connected(m: &BinaryMask) -> bool {
    let (w, h) = (m.width(), m.height());
    let Some(start) = m.data().iter().position(|&v| v) else {
        return false;
    };
    let mut seen = vec![false; w * h];
    let mut stack = vec![start];
    seen[start] = true;
    let mut n = 0;
    while let Some(i) = stack.pop() {
        n += 1;
        let (x, y) = (i % w, i / w);
        let mut push = |j: usize| {
            if m.data()[j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            push(i - 1);
        }
        if x + 1 < w {
            push(i + 1);
        }
        if y > 0 {
            push(i - w);
        }
        if y + 1 < h {
            push(i + w);
        }
    }
    n == m.count()
}

fn render(spec: &SynthSpec, gt: &BinaryMask, rng: &mut ChaCha8Rng) -> RasterImage {
    let (w, h) = (spec.width, spec.height);
    let skin: [f64; 3] = spec.skin_rgb.map(|c| c + rng.random_range(-spec.skin_jitter..=spec.skin_jitter));
    let contrast = rng.random_range(spec.contrast.0..=spec.contrast.1);
    // brown lesion: darker overall and redder than the skin
    let hue_shift = [1.0, rng.random_range(0.75..0.9), rng.random_range(0.7..0.9)];
    let lesion: [f64; 3] = std::array::from_fn(|c| skin[c] * (1.0 - contrast) * hue_shift[c]);
    let shade = (rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04), rng.random_range(0.0..2.0 * PI));
    let (cx, cy) = centroid(gt);
    let sd = signed_distance(gt).expect("lesion mask is never empty or full");
    let softness = rng.random_range(spec.edge_softness.0..=spec.edge_softness.1);
    let blotches: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(2..6))
        .map(|_| {
            let (bx, by) = pick_pixel(gt, rng);
            let sigma = rng.random_range(0.05..0.2) * (gt.count() as f64).sqrt();
            (bx, by, sigma, rng.random_range(-spec.variegation..=spec.variegation))
        })
        .collect();

    let mut data = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            let i = y * w + x;
            let smooth = 1.0 + shade.0 * (2.0 * PI * u + shade.2).sin() + shade.1 * (2.0 * PI * v).cos();
            // blurred rim centred on the mask contour, so gt stays the 50% level
            let alpha = (0.5 - sd.phi.data()[i] / softness).clamp(0.0, 1.0);
            let r = (((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() / (0.5 * w as f64)).min(1.0);
            let mut core = 0.85 + 0.15 * r;
            for &(bx, by, sigma, amp) in &blotches {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                core *= 1.0 + amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            for c in 0..3 {
                let base = skin[c] * smooth;
                data[i * 3 + c] = base * (1.0 - alpha) + lesion[c] * core * alpha;
            }
        }
    }

    if spec.hair {
        let strands = rng.random_range(4..12);
        for _ in 0..strands {
            draw_hair(&mut data, w, h, rng);
        }
    }
    if spec.color_chart {
        draw_chart_arcs(&mut data, w, h, gt, rng);
    }
    if spec.dark_corners {
        let radius = rng.random_range(0.95..1.15);
        let strength = rng.random_range(0.6..0.85);
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 + 0.5) / w as f64 * 2.0 - 1.0;
                let dy = (y as f64 + 0.5) / h as f64 * 2.0 - 1.0;
                let over = ((dx * dx + dy * dy).sqrt() - radius).max(0.0) / 0.3;
                let f = 1.0 - strength * over.min(1.0);
                for c in 0..3 {
                    data[(y * w + x) * 3 + c] *= f;
                }
            }
        }
    }
    let gains: [f64; 3] = if spec.color_cast {
        std::array::from_fn(|_| rng.random_range(1.0 - spec.cast_strength..=1.0 + spec.cast_strength))
    } else {
        [1.0; 3]
    };
    let noise = spec.noise_std;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
    RasterImage::from_fn(w, h, 3, |x, y, c| {
        let n = if noise > 0.0 { gaussian(&mut noise_rng) * noise } else { 0.0 };
        data[(y * w + x) * 3 + c] * gains[c] + n
    })
}

fn centroid(m: &BinaryMask) -> (f64, f64) {
    let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in m.pixels() {
        sx += x as f64;
        sy += y as f64;
        n += 1.0;
    }
    (sx / n.max(1.0), sy / n.max(1.0))
}

fn pick_pixel(m: &BinaryMask, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let k = rng.random_range(0..m.count());
    let (x, y) = m.pixels().nth(k).expect("index below count");
    (x as f64, y as f64)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn paint_disk(data: &mut [f64], w: usize, h: usize, x: f64, y: f64, r: f64, rgb: [f64; 3]) {
    let (x0, x1) = ((x - r).floor().max(0.0) as usize, ((x + r).ceil() as isize).min(w as isize - 1));
    let (y0, y1) = ((y - r).floor().max(0.0) as usize, ((y + r).ceil() as isize).min(h as isize - 1));
    if x1 < 0 || y1 < 0 {
        return;
    }
    for yy in y0..=y1 as usize {
        for xx in x0..=x1 as usize {
            if (xx as f64 + 0.5 - x).powi(2) + (yy as f64 + 0.5 - y).powi(2) <= r * r {
                let i = (yy * w + xx) * 3;
                data[i..i + 3].copy_from_slice(&rgb);
            }
        }
    }
}

/// A dark quadratic Bézier stroke crossing part of the frame.
fn draw_hair(data: &mut [f64], w: usize, h: usize, rng: &mut ChaCha8Rng) {
    let (wf, hf) = (w as f64, h as f64);
    let p0 = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
    let len = rng.random_range(0.2..0.6) * wf;
    let ang: f64 = rng.random_range(0.0..2.0 * PI);
    let p2 = (p0.0 + len * ang.cos(), p0.1 + len * ang.sin());
    let bend = rng.random_range(-0.3..0.3) * len;
    let p1 = ((p0.0 + p2.0) / 2.0 - bend * ang.sin(), (p0.1 + p2.1) / 2.0 + bend * ang.cos());
    let width = rng.random_range(0.6..1.3);
    let tone = rng.random_range(0.05..0.2);
    let rgb = [tone, tone * 0.8, tone * 0.7];
    let steps = (len * 2.0) as usize + 1;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let a = (1.0 - t) * (1.0 - t);
        let b = 2.0 * (1.0 - t) * t;
        let c = t * t;
        let x = a * p0.0 + b * p1.0 + c * p2.0;
        let y = a * p0.1 + b * p1.1 + c * p2.1;
        paint_disk(data, w, h, x, y, width, rgb);
    }
}

/// Coloured ring segments centred outside the frame, kept off the lesion so the
/// ground truth stays the exact lesion raster.
fn draw_chart_arcs(data: &mut [f64], w: usize, h: usize, gt: &BinaryMask, rng: &mut ChaCha8Rng) {
    let (wf, hf) = (w as f64, h as f64);
    let corners = [(0.0, 0.0), (wf, 0.0), (0.0, hf), (wf, hf)];
    let arcs = rng.random_range(1..3);
    for _ in 0..arcs {
        let (kx, ky) = corners[rng.random_range(0..4)];
        let r = rng.random_range(0.12..0.22) * hf;
        let band = rng.random_range(3.0..6.0);
        let palette = [[0.15, 0.3, 0.75], [0.95, 0.95, 0.95], [0.2, 0.6, 0.3], [0.8, 0.75, 0.2]];
        let rgb = palette[rng.random_range(0..palette.len())];
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 + 0.5 - kx).powi(2) + (y as f64 + 0.5 - ky).powi(2)).sqrt();
                if (d - r).abs() <= band / 2.0 && !gt.get(x, y) {
                    let i = (y * w + x) * 3;
                    data[i..i + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::morph::connected_components;
    use crate::preprocess::{apply_color_constancy, shades_of_gray_gains};

    fn small(seed: u64, count: usize) -> SynthSpec {
        SynthSpec { seed, count, ..SynthSpec::default() }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(7, 3)).unwrap();
        let b = generate(&small(7, 3)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image.data(), y.image.data());
            assert_eq!(x.gt, y.gt);
        }
        let c = generate(&small(8, 1)).unwrap();
        assert_ne!(a[0].image.data(), c[0].image.data());
        // per-index seeds: a batch of one matches the first of a batch of three
        assert_eq!(generate(&small(7, 1)).unwrap()[0].image.data(), a[0].image.data());
    }

    #[test]
    fn gt_shape_invariants() {
        for s in generate(&small(11, 12)).unwrap() {
            assert_eq!((s.image.width(), s.image.height()), (400, 300));
            let frac = s.gt.count() as f64 / (400.0 * 300.0);
            assert!((0.05..=0.4).contains(&frac), "area fraction {frac}");
            assert_eq!(connected_components(&s.gt).len(), 1);
            assert!(is_4_connected(&s.gt));
            assert_eq!(fill_holes(&s.gt), s.gt);
            assert!(borders_touched(&s.gt) <= 2);
        }
    }

    #[test]
    fn artifacts_off_is_clean_and_lesion_darker() {
        let spec = SynthSpec { seed: 3, count: 4, noise_std: 0.0, ..SynthSpec::default() }.without_artifacts();
        for s in generate(&spec).unwrap() {
            let gray = crate::imgcore::color::gray_plane(&s.image);
            let (mut li, mut ni, mut lo, mut no) = (0.0, 0.0, 0.0, 0.0);
            for (i, &g) in gray.data().iter().enumerate() {
                if s.gt.data()[i] {
                    li += g;
                    ni += 1.0;
                } else {
                    lo += g;
                    no += 1.0;
                }
            }
            assert!(li / ni < 0.75 * lo / no);
            // no hair or chart: no very dark or saturated blue outside the lesion
            for (i, p) in s.image.data().chunks(3).enumerate() {
                if !s.gt.data()[i] {
                    assert!(p[0] > 0.5 && p[2] < p[0]);
                }
            }
        }
    }

    #[test]
    fn color_cast_is_reduced_by_constancy() {
        let spec = SynthSpec { seed: 5, count: 24, ..SynthSpec::default() };
        let data = generate(&spec).unwrap();
        let chroma = |img: &RasterImage| {
            let mut m = [0.0; 3];
            for p in img.data().chunks(3) {
                for c in 0..3 {
                    m[c] += p[c];
                }
            }
            let s = m[0] + m[1] + m[2];
            m.map(|v| v / s)
        };
        let spread = |v: &[[f64; 3]]| {
            (0..3)
                .map(|c| {
                    let mean = v.iter().map(|m| m[c]).sum::<f64>() / v.len() as f64;
                    v.iter().map(|m| (m[c] - mean).powi(2)).sum::<f64>() / v.len() as f64
                })
                .sum::<f64>()
        };
        let before: Vec<_> = data.iter().map(|s| chroma(&s.image)).collect();
        let after: Vec<_> = data
            .iter()
            .map(|s| {
                let g = shades_of_gray_gains(&s.image, 6.0).unwrap();
                chroma(&apply_color_constancy(&s.image, g).unwrap())
            })
            .collect();
        assert!(spread(&after) < 0.5 * spread(&before), "{} vs {}", spread(&after), spread(&before));
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(generate(&small(0, 0)).is_err());
        assert!(generate(&SynthSpec { area_fraction: (0.5, 0.1), ..SynthSpec::default() }).is_err());
    }
}
