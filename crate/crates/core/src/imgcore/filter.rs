//! Small spatial filters and resampling shared across the pipeline.

use super::raster::{BinaryMask, Plane, RasterImage};

pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian smoothing with replicate padding.
pub fn gaussian_blur(plane: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let k = gaussian_kernel_1d(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (plane.width(), plane.height());
    let mut tmp = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * plane.get_clamped(x as isize + i as isize - r, y as isize))
                .sum();
            tmp.set(x, y, s);
        }
    }
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp.get_clamped(x as isize, y as isize + i as isize - r))
                .sum();
            out.set(x, y, s);
        }
    }
    out
}

/// Central-difference gradient (one-sided at the border), like MATLAB's `gradient`.
pub fn gradient(plane: &Plane) -> (Plane, Plane) {
    let (w, h) = (plane.width(), plane.height());
    let gx = Plane::from_fn(w, h, |x, y| {
        if w < 2 {
            0.0
        } else if x == 0 {
            plane.get(1, y) - plane.get(0, y)
        } else if x == w - 1 {
            plane.get(x, y) - plane.get(x - 1, y)
        } else {
            (plane.get(x + 1, y) - plane.get(x - 1, y)) / 2.0
        }
    });
    let gy = Plane::from_fn(w, h, |x, y| {
        if h < 2 {
            0.0
        } else if y == 0 {
            plane.get(x, 1) - plane.get(x, 0)
        } else if y == h - 1 {
            plane.get(x, y) - plane.get(x, y - 1)
        } else {
            (plane.get(x, y + 1) - plane.get(x, y - 1)) / 2.0
        }
    });
    (gx, gy)
}

#[inline]
fn source_coord(dst: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resampling to `width × height` with pixel-centre alignment.
pub fn resize_bilinear(img: &RasterImage, width: usize, height: usize) -> RasterImage {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let xs: Vec<_> = (0..width).map(|x| source_coord(x, sx, img.width())).collect();
    let ys: Vec<_> = (0..height).map(|y| source_coord(y, sy, img.height())).collect();
    RasterImage::from_fn(width, height, img.channels(), |x, y, c| {
        let (x0, x1, fx) = xs[x];
        let (y0, y1, fy) = ys[y];
        let top = img.get(x0, y0, c) * (1.0 - fx) + img.get(x1, y0, c) * fx;
        let bottom = img.get(x0, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

pub fn resize_plane_bilinear(plane: &Plane, width: usize, height: usize) -> Plane {
    if plane.width() == width && plane.height() == height {
        return plane.clone();
    }
    let sx = plane.width() as f64 / width as f64;
    let sy = plane.height() as f64 / height as f64;
    Plane::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = source_coord(x, sx, plane.width());
        let (y0, y1, fy) = source_coord(y, sy, plane.height());
        let top = plane.get(x0, y0) * (1.0 - fx) + plane.get(x1, y0) * fx;
        let bottom = plane.get(x0, y1) * (1.0 - fx) + plane.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Nearest-neighbour resampling for masks.
pub fn resize_nearest(mask: &BinaryMask, width: usize, height: usize) -> BinaryMask {
    if mask.width() == width && mask.height() == height {
        return mask.clone();
    }
    let sx = mask.width() as f64 / width as f64;
    let sy = mask.height() as f64 / height as f64;
    BinaryMask::from_fn(width, height, |x, y| {
        let src_x = (((x as f64 + 0.5) * sx).floor() as usize).min(mask.width() - 1);
        let src_y = (((y as f64 + 0.5) * sy).floor() as usize).min(mask.height() - 1);
        mask.get(src_x, src_y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants() {
        let p = Plane::filled(10, 7, 0.25);
        let b = gaussian_blur(&p, 1.5);
        assert!(b.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn nearest_round_trip_on_block_masks() {
        let m = BinaryMask::from_fn(40, 30, |x, y| x > 10 && y < 20);
        let up = resize_nearest(&m, 80, 60);
        assert_eq!(resize_nearest(&up, 40, 30), m);
    }
}
