//! Pseudo-background: the healthy-skin band found from the brightest histogram
//! peak, used as the reference for background descriptors.

use crate::imgcore::histogram::{GrayHistogram, GRAY_BINS};
use crate::imgcore::morph::{close, erode_with_frame, fill_holes, remove_small, FrameValue, StructuringElement};
use crate::imgcore::{BinaryMask, Plane};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    pub smoothing_window: usize,
    /// Minimum peak prominence as a fraction of the pixel count.
    pub min_prominence: f64,
    pub threshold_fraction: f64,
    pub min_object_area: usize,
    pub closing_radius: usize,
    pub strip_width: usize,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            smoothing_window: 11,
            min_prominence: 0.005,
            threshold_fraction: 0.9,
            min_object_area: 500,
            closing_radius: 5,
            strip_width: 15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoBackground {
    pub strip_mask: BinaryMask,
    /// Gray level separating background candidates; `None` when the border fallback was used.
    pub background_threshold: Option<f64>,
    /// Cleaned background object the strip was cut from.
    pub background_mask: BinaryMask,
}

impl PseudoBackground {
    pub fn is_fallback(&self) -> bool {
        self.background_threshold.is_none()
    }
}

/// Centred moving average; windows are truncated at the histogram ends.
fn smooth(hist: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..hist.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(hist.len() - 1);
            hist[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(s: &[f64], i: usize) -> f64 {
    let peak = s[i];
    let mut left_min = peak;
    for j in (0..i).rev() {
        if s[j] > peak {
            break;
        }
        left_min = left_min.min(s[j]);
    }
    let mut right_min = peak;
    for &v in &s[i + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Bin of the brightest sufficiently prominent peak of the smoothed histogram.
pub fn last_peak(gray: &Plane, cfg: &BackgroundConfig) -> Option<usize> {
    let hist = GrayHistogram::from_plane(gray);
    let raw: Vec<f64> = hist.bins().iter().map(|&c| c as f64).collect();
    let s = smooth(&raw, cfg.smoothing_window.max(1));
    let min_prom = cfg.min_prominence * hist.total() as f64;
    // scan plateaus from the bright end; a plateau's peak is its middle bin
    let mut hi = GRAY_BINS;
    while hi > 0 {
        let top = hi - 1;
        let mut lo = top;
        while lo > 0 && s[lo - 1] == s[top] {
            lo -= 1;
        }
        let left_ok = lo == 0 || s[lo - 1] < s[top];
        let right_ok = top + 1 == GRAY_BINS || s[top + 1] < s[top];
        if s[top] > 0.0 && left_ok && right_ok && prominence(&s, top) >= min_prom {
            return Some((lo + top) / 2);
        }
        hi = lo;
    }
    None
}

fn border_ring(w: usize, h: usize, width: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| x < width || y < width || x + width >= w || y + width >= h)
}

pub fn extract_pseudo_background(gray: &Plane, cfg: &BackgroundConfig) -> PseudoBackground {
    let (w, h) = (gray.width(), gray.height());
    let fallback = || {
        let ring = border_ring(w, h, cfg.strip_width);
        PseudoBackground {
            strip_mask: ring.clone(),
            background_threshold: None,
            background_mask: ring,
        }
    };
    let Some(peak) = last_peak(gray, cfg) else {
        log::warn!("no background peak found; using the border strip");
        return fallback();
    };
    let threshold = cfg.threshold_fraction * peak as f64 / (GRAY_BINS - 1) as f64;
    let candidates = BinaryMask::from_fn(w, h, |x, y| gray.get(x, y) >= threshold);
    let mut bg = remove_small(&fill_holes(&candidates), cfg.min_object_area);
    if cfg.closing_radius > 0 {
        let se = StructuringElement::disk(cfg.closing_radius).expect("positive radius");
        bg = close(&bg, &se);
    }
    if bg.is_empty() {
        log::warn!("background object vanished after cleanup; using the border strip");
        return fallback();
    }
    let strip = if cfg.strip_width > 0 {
        let se = StructuringElement::disk(cfg.strip_width).expect("positive radius");
        bg.and_not(&erode_with_frame(&bg, &se, FrameValue::Background))
    } else {
        bg.clone()
    };
    // closing can bridge into dark pixels at the frame; the strip keeps only bright ones
    let strip = strip.and(&candidates);
    if strip.is_empty() {
        return fallback();
    }
    PseudoBackground {
        strip_mask: strip,
        background_threshold: Some(threshold),
        background_mask: bg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::distance::distance_to_set;

    fn strip_width_ok(pb: &PseudoBackground, width: usize) -> bool {
        // every strip pixel lies within `width` of the object's complement or the frame
        let (w, h) = (pb.strip_mask.width(), pb.strip_mask.height());
        let outside = pb.background_mask.complement();
        let d = distance_to_set(&outside);
        pb.strip_mask.pixels().all(|(x, y)| {
            let frame = x.min(y).min(w - 1 - x).min(h - 1 - y) as f64 + 1.0;
            let to_outside = d.as_ref().map_or(f64::INFINITY, |d| d.get(x, y));
            frame.min(to_outside) <= width as f64 + 1e-9
        })
    }

    #[test]
    fn bright_field_dark_disk() {
        let disk = BinaryMask::from_fn(200, 150, |x, y| {
            (x as f64 - 100.0).powi(2) + (y as f64 - 75.0).powi(2) <= 30.0f64.powi(2)
        });
        let gray = Plane::from_fn(200, 150, |x, y| if disk.get(x, y) { 0.2 } else { 0.78 });
        let pb = extract_pseudo_background(&gray, &BackgroundConfig::default());
        let t = pb.background_threshold.unwrap();
        assert!((t - 0.9 * 0.78).abs() < 0.01, "{t}");
        assert!(pb.strip_mask.and(&disk).is_empty());
        assert!(pb.strip_mask.is_subset_of(&pb.background_mask));
        assert!(pb.strip_mask.get(0, 0) && pb.strip_mask.get(14, 70) && !pb.strip_mask.get(15, 70));
        assert!(strip_width_ok(&pb, 15));
    }

    #[test]
    fn uniform_image_border_ring() {
        let gray = Plane::filled(120, 90, 0.6);
        let pb = extract_pseudo_background(&gray, &BackgroundConfig::default());
        assert!(!pb.is_fallback());
        assert!(pb.background_mask.is_full());
        assert_eq!(pb.strip_mask, border_ring(120, 90, 15));
    }

    #[test]
    fn dark_corners_and_border_lesion() {
        let (w, h) = (240usize, 180usize);
        let corner = |x: usize, y: usize| {
            let (dx, dy) = (x.min(w - 1 - x) as f64, y.min(h - 1 - y) as f64);
            dx + dy < 40.0
        };
        let lesion = |x: usize, y: usize| (x as f64 - 120.0).powi(2) + (y as f64 - 10.0).powi(2) <= 45.0f64.powi(2);
        let gray = Plane::from_fn(w, h, |x, y| {
            if lesion(x, y) {
                0.25
            } else if corner(x, y) {
                0.1
            } else {
                0.8
            }
        });
        let pb = extract_pseudo_background(&gray, &BackgroundConfig::default());
        assert!(!pb.is_fallback());
        let bad = pb.strip_mask.pixels().filter(|&(x, y)| lesion(x, y) || corner(x, y)).count();
        assert_eq!(bad, 0);
        assert!(pb.strip_mask.is_subset_of(&pb.background_mask));
        assert!(strip_width_ok(&pb, 15));
    }

    #[test]
    fn small_image_falls_back_to_border() {
        // every object is under the area limit
        let gray = Plane::filled(20, 20, 0.5);
        let pb = extract_pseudo_background(&gray, &BackgroundConfig::default());
        assert!(pb.is_fallback());
        assert!(pb.strip_mask.is_full());
    }
}
