//! sRGB, CIE L*a*b* (D65) and HSV conversions.
//!
//! All outputs are rescaled to `[0, 1]`: `L / 100`, `(a + 128) / 255`, `(b + 128) / 255`,
//! and hue in turns.

use super::raster::{clamp01, RasterImage};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Lab,
    Hsv,
}

const REF_X: f64 = 0.950_47;
const REF_Y: f64 = 1.0;
const REF_Z: f64 = 1.088_83;

/// ITU-R BT.601 luma.
pub fn to_gray(img: &RasterImage) -> Result<RasterImage> {
    if img.channels() == 1 {
        return Err(Error::AlreadyGray);
    }
    img.require_channels(3)?;
    Ok(RasterImage::from_fn(img.width(), img.height(), 1, |x, y, _| {
        0.299 * img.get(x, y, 0) + 0.587 * img.get(x, y, 1) + 0.114 * img.get(x, y, 2)
    }))
}

/// Gray plane of any image: luma for RGB, the channel itself for one-channel input.
pub fn gray_plane(img: &RasterImage) -> super::raster::Plane {
    match to_gray(img) {
        Ok(g) => g.plane(0),
        Err(_) => img.plane(0),
    }
}

pub fn convert_color(img: &RasterImage, target: ColorSpace) -> Result<RasterImage> {
    img.require_channels(3)?;
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let rgb = [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)];
            let v = match target {
                ColorSpace::Lab => lab_normalized(rgb),
                ColorSpace::Hsv => rgb_to_hsv(rgb),
            };
            for (c, value) in v.into_iter().enumerate() {
                out.set(x, y, c, value);
            }
        }
    }
    Ok(out)
}

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

/// Unscaled CIE L*a*b* (L in [0, 100]).
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (lab_f(x / REF_X), lab_f(y / REF_Y), lab_f(z / REF_Z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let (x, y, z) = (
        REF_X * lab_f_inv(fx),
        REF_Y * lab_f_inv(fy),
        REF_Z * lab_f_inv(fz),
    );
    let r = 3.240_454_2 * x - 1.537_138_5 * y - 0.498_531_4 * z;
    let g = -0.969_266_0 * x + 1.876_010_8 * y + 0.041_556_0 * z;
    let b = 0.055_643_4 * x - 0.204_025_9 * y + 1.057_225_2 * z;
    [r, g, b].map(|c| clamp01(linear_to_srgb(c.max(0.0))))
}

/// Lab rescaled into `[0, 1]` per channel.
#[inline]
pub fn lab_normalized(rgb: [f64; 3]) -> [f64; 3] {
    let [l, a, b] = rgb_to_lab(rgb);
    [
        clamp01(l / 100.0),
        clamp01((a + 128.0) / 255.0),
        clamp01((b + 128.0) / 255.0),
    ]
}

pub fn lab_denormalized(lab: [f64; 3]) -> [f64; 3] {
    [lab[0] * 100.0, lab[1] * 255.0 - 128.0, lab[2] * 255.0 - 128.0]
}

/// HSV with every component in `[0, 1]`.
#[inline]
pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max <= 0.0 { 0.0 } else { delta / max };
    [h.rem_euclid(1.0), s, max]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gray_weights() {
        let white = RasterImage::filled(1, 1, &[1.0, 1.0, 1.0]);
        let black = RasterImage::filled(1, 1, &[0.0, 0.0, 0.0]);
        let red = RasterImage::filled(1, 1, &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(to_gray(&white).unwrap().get(0, 0, 0), 1.0, epsilon = 1e-12);
        assert_eq!(to_gray(&black).unwrap().get(0, 0, 0), 0.0);
        assert_abs_diff_eq!(to_gray(&red).unwrap().get(0, 0, 0), 0.299, epsilon = 1e-12);
    }

    #[test]
    fn gray_of_gray_fails() {
        let g = RasterImage::filled(2, 2, &[0.5]);
        assert!(matches!(to_gray(&g), Err(Error::AlreadyGray)));
    }

    #[test]
    fn white_lab() {
        let lab = lab_normalized([1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(lab[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(lab[1], 128.0 / 255.0, epsilon = 1e-4);
        assert_abs_diff_eq!(lab[2], 128.0 / 255.0, epsilon = 1e-4);
    }

    #[test]
    fn reference_lab_value() {
        // skimage.color.rgb2lab([[[0.2, 0.4, 0.6]]]) (D65, 2°)
        let lab = rgb_to_lab([0.2, 0.4, 0.6]);
        assert_abs_diff_eq!(lab[0], 42.008_0, epsilon = 2e-2);
        assert_abs_diff_eq!(lab[1], -0.154_0, epsilon = 2e-2);
        assert_abs_diff_eq!(lab[2], -32.842_9, epsilon = 2e-2);
    }

    #[test]
    fn red_hsv() {
        assert_eq!(rgb_to_hsv([1.0, 0.0, 0.0]), [0.0, 1.0, 1.0]);
        let hsv = rgb_to_hsv([0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(hsv[0], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lab_round_trip_grid() {
        for i in 0..9 {
            for j in 0..9 {
                for k in 0..9 {
                    let rgb = [i as f64 / 8.0, j as f64 / 8.0, k as f64 / 8.0];
                    let back = lab_to_rgb(lab_denormalized(lab_normalized(rgb)));
                    for c in 0..3 {
                        assert!((back[c] - rgb[c]).abs() <= 1.0 / 255.0, "{rgb:?} -> {back:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn convert_requires_rgb() {
        let g = RasterImage::filled(2, 2, &[0.5]);
        assert!(convert_color(&g, ColorSpace::Hsv).is_err());
    }
}
