//! 2-D correlation with replicate padding, direct for small kernels and FFT-based
//! for large ones.

use super::Kernel;
use crate::imgcore::Plane;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Kernels with more taps than this go through the FFT path.
const DIRECT_LIMIT: usize = 81;

pub fn correlate(plane: &Plane, kernel: &Kernel) -> Plane {
    if kernel.data.len() <= DIRECT_LIMIT {
        correlate_direct(plane, kernel)
    } else {
        SpectralCorrelator::new(plane, kernel.radius()).correlate(kernel)
    }
}

pub fn correlate_direct(plane: &Plane, kernel: &Kernel) -> Plane {
    let r = kernel.radius() as isize;
    let size = kernel.size;
    let (w, h) = (plane.width(), plane.height());
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for ky in 0..size {
                let yy = y as isize + ky as isize - r;
                for kx in 0..size {
                    s += kernel.data[ky * size + kx]
                        * plane.get_clamped(x as isize + kx as isize - r, yy);
                }
            }
            out.set(x, y, s);
        }
    }
    out
}

fn fft_rows(data: &mut [Complex<f64>], rows: usize, cols: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let fft = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    debug_assert_eq!(data.len(), rows * cols);
    fft.process(data);
}

fn transpose(data: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Spectrum of a replicate-padded image, reusable across kernels up to `max_radius`.
pub struct SpectralCorrelator {
    width: usize,
    height: usize,
    pad: usize,
    rows: usize,
    cols: usize,
    spectrum: Vec<Complex<f64>>,
}

impl SpectralCorrelator {
    pub fn new(plane: &Plane, max_radius: usize) -> Self {
        let (w, h) = (plane.width(), plane.height());
        let pad = max_radius;
        let rows = h + 2 * pad;
        let cols = w + 2 * pad;
        let mut data: Vec<Complex<f64>> = (0..rows)
            .flat_map(|r| {
                (0..cols).map(move |c| (r as isize - pad as isize, c as isize - pad as isize))
            })
            .map(|(y, x)| Complex::new(plane.get_clamped(x, y), 0.0))
            .collect();
        let spectrum = forward_2d(&mut data, rows, cols);
        Self {
            width: w,
            height: h,
            pad,
            rows,
            cols,
            spectrum,
        }
    }

    pub fn correlate(&self, kernel: &Kernel) -> Plane {
        let r = kernel.radius();
        assert!(r <= self.pad, "kernel radius exceeds the padded margin");
        let (rows, cols) = (self.rows, self.cols);
        let mut kdata = vec![Complex::new(0.0, 0.0); rows * cols];
        for ky in 0..kernel.size {
            for kx in 0..kernel.size {
                let dy = (ky as isize - r as isize).rem_euclid(rows as isize) as usize;
                let dx = (kx as isize - r as isize).rem_euclid(cols as isize) as usize;
                kdata[dy * cols + dx] = Complex::new(kernel.data[ky * kernel.size + kx], 0.0);
            }
        }
        let kspec = forward_2d(&mut kdata, rows, cols);
        let mut prod: Vec<Complex<f64>> = self
            .spectrum
            .iter()
            .zip(&kspec)
            .map(|(a, b)| a * b.conj())
            .collect();
        let spatial = inverse_2d(&mut prod, rows, cols);
        let norm = (rows * cols) as f64;
        Plane::from_fn(self.width, self.height, |x, y| {
            spatial[(y + self.pad) * cols + x + self.pad].re / norm
        })
    }
}

/// Forward 2-D FFT; returns the spectrum in row-major `rows × cols` layout.
fn forward_2d(data: &mut [Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    fft_rows(data, rows, cols, &mut planner, false);
    let mut t = transpose(data, rows, cols);
    fft_rows(&mut t, cols, rows, &mut planner, false);
    transpose(&t, cols, rows)
}

fn inverse_2d(data: &mut [Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    fft_rows(data, rows, cols, &mut planner, true);
    let mut t = transpose(data, rows, cols);
    fft_rows(&mut t, cols, rows, &mut planner, true);
    transpose(&t, cols, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_matches_direct() {
        let plane = Plane::from_fn(23, 17, |x, y| ((x * 13 + y * 7) % 11) as f64 / 10.0);
        let size = 9;
        let kernel = Kernel {
            name: "t".into(),
            size,
            data: (0..size * size).map(|i| ((i * 37) % 19) as f64 - 9.0).collect(),
        };
        let a = correlate_direct(&plane, &kernel);
        let b = SpectralCorrelator::new(&plane, 12).correlate(&kernel);
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
    }
}
