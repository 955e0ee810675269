use super::color::gray_plane;
use super::raster::{Plane, RasterImage};

pub const GRAY_BINS: usize = 256;

/// 256-bin histogram of intensities quantised as `round(255 v)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayHistogram {
    bins: [u64; GRAY_BINS],
    total: u64,
}

#[inline]
pub fn quantize_u8(v: f64) -> usize {
    (v.clamp(0.0, 1.0) * 255.0).round() as usize
}

impl GrayHistogram {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let mut bins = [0u64; GRAY_BINS];
        let mut total = 0;
        for v in values {
            bins[quantize_u8(v)] += 1;
            total += 1;
        }
        Self { bins, total }
    }

    pub fn from_plane(plane: &Plane) -> Self {
        Self::from_values(plane.data().iter().copied())
    }

    pub fn bins(&self) -> &[u64; GRAY_BINS] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Shannon entropy in bits; empty bins contribute nothing.
    pub fn entropy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = self.total as f64;
        self.bins
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    }
}

/// Entropy of each channel followed by the gray channel: `[R, G, B, gray]` for RGB,
/// `[gray]` for one-channel input.
pub fn channel_entropy(img: &RasterImage) -> Vec<f64> {
    let mut out: Vec<f64> = if img.channels() == 3 {
        (0..3)
            .map(|c| GrayHistogram::from_plane(&img.plane(c)).entropy())
            .collect()
    } else {
        Vec::new()
    };
    out.push(GrayHistogram::from_plane(&gray_plane(img)).entropy());
    out
}

/// Otsu threshold of a non-negative plane, computed on 256 bins spanning `[min, max]`.
///
/// Returns `None` for constant planes.
pub fn otsu_threshold(plane: &Plane) -> Option<f64> {
    let (lo, hi) = plane.min_max();
    if !(hi > lo) {
        return None;
    }
    let scale = (GRAY_BINS - 1) as f64 / (hi - lo);
    let mut hist = [0f64; GRAY_BINS];
    for &v in plane.data() {
        hist[((v - lo) * scale).round() as usize] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c;
        sum0 += t as f64 * c;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t);
        }
    }
    // values strictly above the returned level belong to the upper class
    Some(lo + (best.1 as f64 + 0.5) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_examples() {
        let constant = Plane::filled(16, 16, 0.3);
        assert_eq!(GrayHistogram::from_plane(&constant).entropy(), 0.0);
        let binary = Plane::from_fn(16, 16, |x, _| if x % 2 == 0 { 0.0 } else { 1.0 });
        assert_abs_diff_eq!(GrayHistogram::from_plane(&binary).entropy(), 1.0, epsilon = 1e-12);
        let ramp = Plane::from_fn(256, 4, |x, _| x as f64 / 255.0);
        assert_abs_diff_eq!(GrayHistogram::from_plane(&ramp).entropy(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn bins_sum_to_total() {
        let p = Plane::from_fn(13, 7, |x, y| ((x * 31 + y * 17) % 101) as f64 / 100.0);
        let h = GrayHistogram::from_plane(&p);
        assert_eq!(h.bins().iter().sum::<u64>(), h.total());
        assert_eq!(h.total(), 91);
    }

    #[test]
    fn otsu_splits_bimodal() {
        let p = Plane::from_fn(20, 20, |x, _| if x < 10 { 0.1 } else { 0.9 });
        let t = otsu_threshold(&p).unwrap();
        assert!(t > 0.1 && t < 0.9);
        assert!(otsu_threshold(&Plane::filled(3, 3, 0.5)).is_none());
    }

    #[test]
    fn channel_entropy_layout() {
        let img = RasterImage::filled(4, 4, &[0.2, 0.4, 0.6]);
        assert_eq!(channel_entropy(&img), vec![0.0; 4]);
        let gray = RasterImage::filled(4, 4, &[0.2]);
        assert_eq!(channel_entropy(&gray).len(), 1);
    }
}
