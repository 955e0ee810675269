//! The 116-value regional descriptor: contrast against the neighbourhood (29),
//! regional properties (58) and contrast against the pseudo-background (29).

mod background;
mod circles;
mod diff;
mod shape;

pub use background::{extract_pseudo_background, last_peak, BackgroundConfig, PseudoBackground};
pub use circles::{
    circle_probability, detect_circles, detect_circles_on_edges, edge_map, Circle, CircleConfig, CircleMaps,
};
pub use diff::{abs_diff, chi_square, feature_diff};
pub use shape::{elongation, extent, min_area_box, RegionStats, RotatedBox};

use crate::error::{Error, Result};
use crate::filterbank::{filter_plane, lbp_codes, make_laws14, make_lm15};
use crate::imgcore::color::{gray_plane, lab_normalized, rgb_to_hsv};
use crate::imgcore::RasterImage;
use crate::multiseg::{LabelMap, MultiLevelPartition};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const CONTRAST_DIM: usize = 29;
pub const PROPERTY_DIM: usize = 58;
pub const BACKGROUND_DIM: usize = 29;
pub const DESCRIPTOR_DIM: usize = CONTRAST_DIM + PROPERTY_DIM + BACKGROUND_DIM;

// per-pixel scalar channel layout
const RGB: usize = 0;
const LAB: usize = 3;
const HSV: usize = 6;
const LM: usize = 9;
const LM_ABS: usize = 24;
const LM_MAX: usize = 39;
const LAWS_ABS: usize = 40;
const LBP: usize = 54;
const CHANNELS: usize = 55;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionFeatConfig {
    /// Bins per axis of the joint Lab histogram.
    pub lab_bins: usize,
    pub hue_bins: usize,
    pub sat_bins: usize,
    pub circle: CircleConfig,
    pub background: BackgroundConfig,
}

impl Default for RegionFeatConfig {
    fn default() -> Self {
        Self {
            lab_bins: 8,
            hue_bins: 32,
            sat_bins: 32,
            circle: CircleConfig::default(),
            background: BackgroundConfig::default(),
        }
    }
}

impl RegionFeatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lab_bins == 0 || self.hue_bins == 0 || self.sat_bins == 0 {
            return Err(Error::InvalidParameter("histogram bin counts must be positive".into()));
        }
        if !(self.circle.rho > 0.0) || !(self.circle.smoothing_sigma >= 0.0) {
            return Err(Error::InvalidParameter("circle rho must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.background.threshold_fraction) {
            return Err(Error::InvalidParameter("background threshold fraction must be in [0,1]".into()));
        }
        Ok(())
    }

    fn hist_len(&self) -> usize {
        self.lab_bins.pow(3) + self.hue_bins + self.sat_bins + 256
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionDescriptor {
    pub contrast: Vec<f64>,
    pub property: Vec<f64>,
    pub background: Vec<f64>,
    pub region_id: usize,
    pub level_index: usize,
    /// Set when the contrast block is zero because the region has no neighbours.
    pub degenerate: bool,
}

impl RegionDescriptor {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(DESCRIPTOR_DIM);
        v.extend_from_slice(&self.contrast);
        v.extend_from_slice(&self.property);
        v.extend_from_slice(&self.background);
        v
    }
}

/// Everything about an image that region descriptors are aggregated from.
pub struct ImageFeatures {
    width: usize,
    height: usize,
    channels: Vec<Vec<f64>>,
    /// Per-pixel bin index into the concatenated Lab | hue | saturation | LBP histogram.
    hist_bins: Vec<[u32; 4]>,
    hist_len: usize,
    pub circles: CircleMaps,
    pub background: PseudoBackground,
    strip: Accum,
}

impl ImageFeatures {
    pub fn compute(img: &RasterImage, cfg: &RegionFeatConfig) -> Result<Self> {
        img.require_channels(3)?;
        cfg.validate()?;
        let (w, h) = (img.width(), img.height());
        let n = w * h;
        let gray = gray_plane(img);
        let lm = filter_plane(&gray, &make_lm15());
        let laws = filter_plane(&gray, &make_laws14());
        let lbp = lbp_codes(&gray);

        let mut channels = vec![vec![0.0; n]; CHANNELS];
        let lab_off = 0u32;
        let hue_off = cfg.lab_bins.pow(3) as u32;
        let sat_off = hue_off + cfg.hue_bins as u32;
        let lbp_off = sat_off + cfg.sat_bins as u32;
        let bin = |v: f64, bins: usize| ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        let mut hist_bins = Vec::with_capacity(n);
        for i in 0..n {
            let p = img.pixel(i);
            let rgb = [p[0], p[1], p[2]];
            let lab = lab_normalized(rgb);
            let hsv = rgb_to_hsv(rgb);
            for c in 0..3 {
                channels[RGB + c][i] = rgb[c];
                channels[LAB + c][i] = lab[c];
                channels[HSV + c][i] = hsv[c];
            }
            let mut max_abs: f64 = 0.0;
            for (k, r) in lm.iter().enumerate() {
                let v = r.data()[i];
                channels[LM + k][i] = v;
                channels[LM_ABS + k][i] = v.abs();
                max_abs = max_abs.max(v.abs());
            }
            channels[LM_MAX][i] = max_abs;
            for (k, r) in laws.iter().enumerate() {
                channels[LAWS_ABS + k][i] = r.data()[i].abs();
            }
            channels[LBP][i] = lbp[i] as f64;
            let lb = cfg.lab_bins;
            let lab_bin = (bin(lab[0], lb) * lb + bin(lab[1], lb)) * lb + bin(lab[2], lb);
            hist_bins.push([
                lab_off + lab_bin as u32,
                hue_off + bin(hsv[0], cfg.hue_bins) as u32,
                sat_off + bin(hsv[1], cfg.sat_bins) as u32,
                lbp_off + lbp[i] as u32,
            ]);
        }

        let circles = detect_circles(&gray, &cfg.circle);
        let background = extract_pseudo_background(&gray, &cfg.background);
        let mut features = Self {
            width: w,
            height: h,
            channels,
            hist_bins,
            hist_len: cfg.hist_len(),
            circles,
            background,
            strip: Accum::new(0),
        };
        let strip_px: Vec<u32> = features
            .background
            .strip_mask
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u32)
            .collect();
        features.strip = features.accumulate(&strip_px);
        Ok(features)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn accumulate(&self, pixels: &[u32]) -> Accum {
        let mut a = Accum::new(self.hist_len);
        for &p in pixels {
            let p = p as usize;
            for c in 0..CHANNELS {
                let v = self.channels[c][p];
                a.sum[c] += v;
                a.sumsq[c] += v * v;
            }
            for &b in &self.hist_bins[p] {
                a.hist[b as usize] += 1.0;
            }
        }
        a.area = pixels.len() as f64;
        a
    }
}

/// Additive per-region statistics; neighbourhoods are sums of their members.
#[derive(Clone, Debug)]
struct Accum {
    area: f64,
    sum: [f64; CHANNELS],
    sumsq: [f64; CHANNELS],
    hist: Vec<f64>,
}

impl Accum {
    fn new(hist_len: usize) -> Self {
        Self {
            area: 0.0,
            sum: [0.0; CHANNELS],
            sumsq: [0.0; CHANNELS],
            hist: vec![0.0; hist_len],
        }
    }

    fn add(&mut self, other: &Accum) {
        self.area += other.area;
        for c in 0..CHANNELS {
            self.sum[c] += other.sum[c];
            self.sumsq[c] += other.sumsq[c];
        }
        for (a, b) in self.hist.iter_mut().zip(&other.hist) {
            *a += b;
        }
    }

    fn mean(&self, c: usize) -> f64 {
        self.sum[c] / self.area
    }

    fn variance(&self, c: usize) -> f64 {
        let m = self.mean(c);
        (self.sumsq[c] / self.area - m * m).max(0.0)
    }

    /// Normalised sub-histogram `range`.
    fn histogram(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let part = &self.hist[range];
        let total: f64 = part.iter().sum();
        if total == 0.0 {
            return part.to_vec();
        }
        part.iter().map(|v| v / total).collect()
    }
}

fn contrast_block(r: &Accum, n: &Accum, cfg: &RegionFeatConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(CONTRAST_DIM);
    for c in (RGB..HSV + 3).chain(LM_ABS..LM_ABS + 15).chain([LM_MAX]) {
        out.push((r.mean(c) - n.mean(c)).abs());
    }
    let lab_end = cfg.lab_bins.pow(3);
    let hue_end = lab_end + cfg.hue_bins;
    let sat_end = hue_end + cfg.sat_bins;
    for range in [0..lab_end, lab_end..hue_end, hue_end..sat_end, sat_end..sat_end + 256] {
        let d = chi_square(&r.histogram(range.clone()), &n.histogram(range)).expect("equal lengths");
        out.push(d);
    }
    debug_assert_eq!(out.len(), CONTRAST_DIM);
    out
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct PropertyInputs<'a> {
    stats: &'a RegionStats,
    accum: &'a Accum,
    pixels: &'a [u32],
    neighbor_area: f64,
    level_index: usize,
    level_count: usize,
}

fn property_block(features: &ImageFeatures, inp: &PropertyInputs) -> Vec<f64> {
    let (w, h) = (features.width as f64, features.height as f64);
    let a = inp.accum;
    let s = inp.stats;
    let mut out = Vec::with_capacity(PROPERTY_DIM);

    let mut xs: Vec<f64> = s.pixels.iter().map(|&(x, _)| (x as f64 + 0.5) / w).collect();
    let mut ys: Vec<f64> = s.pixels.iter().map(|&(_, y)| (y as f64 + 0.5) / h).collect();
    let n = xs.len() as f64;
    out.push(xs.iter().sum::<f64>() / n);
    out.push(ys.iter().sum::<f64>() / n);
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    out.extend([percentile(&xs, 0.1), percentile(&xs, 0.9), percentile(&ys, 0.1), percentile(&ys, 0.9)]);

    out.push(s.area as f64 / (w * h));
    out.push(s.perimeter as f64 / (2.0 * (w + h)));
    out.push(inp.neighbor_area / (w * h));
    let (bx0, bx1) = s.pixels.iter().fold((usize::MAX, 0), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (by0, by1) = s.pixels.iter().fold((usize::MAX, 0), |(a, b), p| (a.min(p.1), b.max(p.1)));
    out.push((bx1 - bx0 + 1) as f64 / (by1 - by0 + 1) as f64);

    for c in (RGB..HSV + 3).chain(LM..LM + 15).chain([LBP]) {
        out.push(a.variance(c));
    }
    for c in RGB..RGB + 3 {
        out.push(a.mean(c));
    }
    out.push(a.mean(LAB + 1));
    out.push(a.mean(LAB + 2));
    out.push(elongation(s));
    out.push(extent(s));
    out.push(circle_probability(inp.pixels, &features.circles));
    for c in LAWS_ABS..LAWS_ABS + 14 {
        out.push(a.mean(c));
    }
    out.push(if inp.level_count > 1 {
        inp.level_index as f64 / (inp.level_count - 1) as f64
    } else {
        0.0
    });
    debug_assert_eq!(out.len(), PROPERTY_DIM);
    out
}

/// Descriptors of every region of one level, in region-id order.
pub fn describe_level(
    features: &ImageFeatures,
    level: &LabelMap,
    level_index: usize,
    level_count: usize,
    cfg: &RegionFeatConfig,
) -> Result<Vec<RegionDescriptor>> {
    if level.width() != features.width || level.height() != features.height {
        return Err(Error::DimensionMismatch("label map and features differ in size".into()));
    }
    let pixels = level.region_pixels();
    let accums: Vec<Accum> = pixels.par_iter().map(|p| features.accumulate(p)).collect();
    let adjacency = level.adjacency();
    let w = features.width;
    let out: Result<Vec<RegionDescriptor>> = (0..level.region_count())
        .into_par_iter()
        .map(|r| {
            let mut hood = Accum::new(features.hist_len);
            for &nb in &adjacency[r] {
                hood.add(&accums[nb]);
            }
            let degenerate = adjacency[r].is_empty();
            let contrast = if degenerate {
                vec![0.0; CONTRAST_DIM]
            } else {
                contrast_block(&accums[r], &hood, cfg)
            };
            let xy: Vec<(usize, usize)> = pixels[r].iter().map(|&i| (i as usize % w, i as usize / w)).collect();
            let stats = RegionStats::from_pixels(xy, features.width, features.height)?;
            let property = property_block(
                features,
                &PropertyInputs {
                    stats: &stats,
                    accum: &accums[r],
                    pixels: &pixels[r],
                    neighbor_area: hood.area,
                    level_index,
                    level_count,
                },
            );
            let background = contrast_block(&accums[r], &features.strip, cfg);
            let desc = RegionDescriptor {
                contrast,
                property,
                background,
                region_id: r,
                level_index,
                degenerate,
            };
            if let Some(col) = desc.to_vec().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature { row: r, col });
            }
            Ok(desc)
        })
        .collect();
    out
}

/// Descriptors for all levels; `result[l][r]` describes region `r` of level `l`.
pub fn describe_partition(
    features: &ImageFeatures,
    partition: &MultiLevelPartition,
    cfg: &RegionFeatConfig,
) -> Result<Vec<Vec<RegionDescriptor>>> {
    let levels = partition.level_count();
    partition
        .levels
        .par_iter()
        .enumerate()
        .map(|(l, level)| describe_level(features, level, l, levels, cfg))
        .collect()
}

/// CSV dump of descriptors: level, region, degenerate flag, then the 116 values.
pub fn write_descriptor_csv<W: Write>(mut out: W, descriptors: &[RegionDescriptor]) -> std::io::Result<()> {
    write!(out, "level,region,degenerate")?;
    for i in 0..DESCRIPTOR_DIM {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for d in descriptors {
        write!(out, "{},{},{}", d.level_index, d.region_id, d.degenerate as u8)?;
        for v in d.to_vec() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiseg::{segment_levels, MultisegConfig};

    fn disk_scene() -> (RasterImage, LabelMap) {
        let (w, h) = (120, 90);
        let inside = |x: usize, y: usize| (x as f64 - 60.0).powi(2) + (y as f64 - 45.0).powi(2) <= 400.0;
        let img = RasterImage::from_fn(w, h, 3, |x, y, _| if inside(x, y) { 0.2 } else { 0.8 });
        let raw: Vec<u32> = (0..w * h).map(|i| inside(i % w, i / w) as u32).collect();
        (img, LabelMap::from_raw(w, h, &raw))
    }

    #[test]
    fn two_region_contrast_and_background() {
        let (img, lm) = disk_scene();
        let cfg = RegionFeatConfig::default();
        let f = ImageFeatures::compute(&img, &cfg).unwrap();
        let d = describe_level(&f, &lm, 0, 1, &cfg).unwrap();
        let disk = &d[lm.get(60, 45) as usize];
        for c in 0..3 {
            assert!((disk.contrast[c] - 0.6).abs() < 1e-12);
            assert!((disk.background[c] - 0.6).abs() < 1e-12);
        }
        assert!(!disk.degenerate);
        assert_eq!(disk.to_vec().len(), DESCRIPTOR_DIM);
        let field = &d[lm.get(0, 0) as usize];
        // the field matches the strip except for the strip's own texture-free border
        for c in 0..3 {
            assert!(field.background[c].abs() < 1e-12);
        }
    }

    #[test]
    fn identical_neighbourhood_gives_zero_contrast() {
        let img = RasterImage::filled(60, 40, &[0.4, 0.5, 0.6]);
        let raw: Vec<u32> = (0..60 * 40).map(|i| ((i % 60) / 30) as u32).collect();
        let lm = LabelMap::from_raw(60, 40, &raw);
        let cfg = RegionFeatConfig::default();
        let f = ImageFeatures::compute(&img, &cfg).unwrap();
        let d = describe_level(&f, &lm, 0, 1, &cfg).unwrap();
        for r in &d {
            assert!(r.contrast.iter().all(|&v| v.abs() < 1e-9), "{:?}", r.contrast);
            assert!(r.background.iter().all(|&v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn whole_image_region_properties() {
        let img = RasterImage::filled(50, 40, &[0.3, 0.3, 0.3]);
        let lm = LabelMap::from_raw(50, 40, &vec![0; 2000]);
        let cfg = RegionFeatConfig::default();
        let f = ImageFeatures::compute(&img, &cfg).unwrap();
        let d = &describe_level(&f, &lm, 0, 1, &cfg).unwrap()[0];
        assert!(d.degenerate);
        assert!(d.contrast.iter().all(|&v| v == 0.0));
        assert!((d.property[0] - 0.5).abs() < 1e-12 && (d.property[1] - 0.5).abs() < 1e-12);
        assert!((d.property[6] - 1.0).abs() < 1e-12);
        // colour and LBP variances, Laws energies
        assert!(d.property[10..19].iter().all(|&v| v.abs() < 1e-12));
        assert!(d.property[34].abs() < 1e-12);
        assert!(d.property[43..57].iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn level_index_feature() {
        let (img, lm) = disk_scene();
        let cfg = RegionFeatConfig::default();
        let f = ImageFeatures::compute(&img, &cfg).unwrap();
        let d = describe_level(&f, &lm, 3, 5, &cfg).unwrap();
        assert!(d.iter().all(|r| (r.property[57] - 0.75).abs() < 1e-12));
    }

    #[test]
    fn partition_descriptors_are_finite() {
        let img = RasterImage::from_fn(80, 60, 3, |x, y, c| {
            let v = ((x * 7 + y * 13 + c * 29) % 23) as f64 / 22.0;
            if (x as f64 - 40.0).powi(2) + (y as f64 - 30.0).powi(2) < 300.0 { v * 0.3 } else { 0.5 + v * 0.4 }
        });
        let p = segment_levels(&img, &MultisegConfig { level_count: 4, ..Default::default() }).unwrap();
        let cfg = RegionFeatConfig::default();
        let f = ImageFeatures::compute(&img, &cfg).unwrap();
        let all = describe_partition(&f, &p, &cfg).unwrap();
        for (l, level) in all.iter().enumerate() {
            assert_eq!(level.len(), p.levels[l].region_count());
            for d in level {
                assert_eq!(d.to_vec().len(), DESCRIPTOR_DIM);
                assert!(d.to_vec().iter().all(|v| v.is_finite()));
            }
        }
        let mut buf = Vec::new();
        write_descriptor_csv(&mut buf, &all[0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), all[0].len() + 1);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 3 + DESCRIPTOR_DIM);
    }
}
