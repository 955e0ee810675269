//! Texture and edge operators: Leung–Malik and Laws banks, local binary patterns,
//! Prewitt gradients.

mod correlate;

pub use correlate::{correlate, correlate_direct, SpectralCorrelator};

use crate::error::Result;
use crate::imgcore::{Plane, RasterImage};
use std::f64::consts::PI;

/// Square, odd-sized correlation kernel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub name: String,
    pub size: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BankKind {
    Lm15,
    Laws14,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub kind: BankKind,
    pub kernels: Vec<Kernel>,
}

impl FilterBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn max_radius(&self) -> usize {
        self.kernels.iter().map(Kernel::radius).max().unwrap_or(0)
    }
}

pub const LM_SUPPORT: usize = 49;
pub const LM_ORIENTATIONS: usize = 6;

fn gauss(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt()
}

fn zero_mean_l1(mut data: Vec<f64>) -> Vec<f64> {
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    data.iter_mut().for_each(|v| *v -= mean);
    let l1: f64 = data.iter().map(|v| v.abs()).sum();
    data.iter_mut().for_each(|v| *v /= l1);
    data
}

fn sample_support<F: Fn(f64, f64) -> f64>(size: usize, f: F) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut out = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            out.push(f(col as f64 - r, row as f64 - r));
        }
    }
    out
}

/// Oriented edge/bar filter: derivative of order `order` across direction `theta`,
/// with the Gaussian envelope elongated (σ = 3) along the edge.
fn oriented(theta: f64, order: u8) -> Vec<f64> {
    const ACROSS: f64 = 1.0;
    const ALONG: f64 = 3.0;
    let (c, s) = (theta.cos(), theta.sin());
    let raw = sample_support(LM_SUPPORT, |x, y| {
        let u = x * c + y * s;
        let v = -x * s + y * c;
        let g = gauss(u, ACROSS) * gauss(v, ALONG);
        match order {
            1 => -u / (ACROSS * ACROSS) * g,
            _ => (u * u - ACROSS * ACROSS) / ACROSS.powi(4) * g,
        }
    });
    zero_mean_l1(raw)
}

fn laplacian_of_gaussian(sigma: f64) -> Vec<f64> {
    let raw = sample_support(LM_SUPPORT, |x, y| {
        let r2 = x * x + y * y;
        (r2 - 2.0 * sigma * sigma) / sigma.powi(4) * (-r2 / (2.0 * sigma * sigma)).exp()
    });
    zero_mean_l1(raw)
}

/// 15-kernel Leung–Malik subset: 6 first-derivative and 6 second-derivative oriented
/// filters (0°, 30°, …, 150° measured as the derivative direction), one Gaussian
/// (σ = 10) and two Laplacians of Gaussian (σ = 10, 20), all on a 49×49 support.
pub fn make_lm15() -> FilterBank {
    let mut kernels = Vec::with_capacity(15);
    for order in [1u8, 2] {
        for k in 0..LM_ORIENTATIONS {
            let theta = PI * k as f64 / LM_ORIENTATIONS as f64;
            kernels.push(Kernel {
                name: format!("d{order}_{}deg", 30 * k),
                size: LM_SUPPORT,
                data: oriented(theta, order),
            });
        }
    }
    let mut g = sample_support(LM_SUPPORT, |x, y| gauss(x, 10.0) * gauss(y, 10.0));
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    kernels.push(Kernel {
        name: "gauss_10".into(),
        size: LM_SUPPORT,
        data: g,
    });
    for sigma in [10.0, 20.0] {
        kernels.push(Kernel {
            name: format!("log_{sigma}"),
            size: LM_SUPPORT,
            data: laplacian_of_gaussian(sigma),
        });
    }
    FilterBank {
        kind: BankKind::Lm15,
        kernels,
    }
}

pub const LAWS_VECTORS: [(&str, [f64; 5]); 5] = [
    ("L5", [1.0, 4.0, 6.0, 4.0, 1.0]),
    ("E5", [-1.0, -2.0, 0.0, 2.0, 1.0]),
    ("S5", [-1.0, 0.0, 2.0, 0.0, -1.0]),
    ("W5", [-1.0, 2.0, 0.0, -2.0, 1.0]),
    ("R5", [1.0, -4.0, 6.0, -4.0, 1.0]),
];

/// The 14 Laws masks: symmetric pairs `A⊗B`, `B⊗A` averaged, `L5L5` dropped.
pub fn make_laws14() -> FilterBank {
    let mut kernels = Vec::with_capacity(14);
    for i in 0..5 {
        for j in i..5 {
            if i == 0 && j == 0 {
                continue;
            }
            let (na, a) = LAWS_VECTORS[i];
            let (nb, b) = LAWS_VECTORS[j];
            let mut data = Vec::with_capacity(25);
            for row in 0..5 {
                for col in 0..5 {
                    data.push((a[row] * b[col] + b[row] * a[col]) / 2.0);
                }
            }
            kernels.push(Kernel {
                name: if i == j { format!("{na}{nb}") } else { format!("{nb}{na}/{na}{nb}") },
                size: 5,
                data,
            });
        }
    }
    FilterBank {
        kind: BankKind::Laws14,
        kernels,
    }
}

/// Correlates a one-channel image with every kernel of the bank.
pub fn filter_response(img: &RasterImage, bank: &FilterBank) -> Result<Vec<Plane>> {
    img.require_channels(1)?;
    Ok(filter_plane(&img.plane(0), bank))
}

pub fn filter_plane(plane: &Plane, bank: &FilterBank) -> Vec<Plane> {
    if bank.kernels.iter().any(|k| k.data.len() > 81) {
        let spectral = SpectralCorrelator::new(plane, bank.max_radius());
        bank.kernels.iter().map(|k| spectral.correlate(k)).collect()
    } else {
        bank.kernels.iter().map(|k| correlate_direct(plane, k)).collect()
    }
}

/// 8-neighbour, radius-1 LBP codes (bit `i` set iff neighbour `i` ≥ centre, neighbours
/// clockwise from east), replicate padding at the border.
pub fn lbp_codes(plane: &Plane) -> Vec<u8> {
    const CLOCKWISE_FROM_EAST: [(isize, isize); 8] = [
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
    ];
    let (w, h) = (plane.width(), plane.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center = plane.get_clamped(x, y);
            let mut code = 0u8;
            for (bit, (dx, dy)) in CLOCKWISE_FROM_EAST.iter().enumerate() {
                if plane.get_clamped(x + dx, y + dy) >= center {
                    code |= 1 << bit;
                }
            }
            out.push(code);
        }
    }
    out
}

/// Per-pixel LBP code map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LbpMap {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
}

impl LbpMap {
    pub fn compute(img: &RasterImage) -> Result<Self> {
        img.require_channels(1)?;
        let plane = img.plane(0);
        Ok(Self {
            width: plane.width(),
            height: plane.height(),
            codes: lbp_codes(&plane),
        })
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &c in &self.codes {
            h[c as usize] += 1;
        }
        h
    }
}

pub fn prewitt_gradients(plane: &Plane) -> (Plane, Plane) {
    let (w, h) = (plane.width(), plane.height());
    let gx = Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (-1..=1)
            .map(|dy| plane.get_clamped(x + 1, y + dy) - plane.get_clamped(x - 1, y + dy))
            .sum()
    });
    let gy = Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (-1..=1)
            .map(|dx| plane.get_clamped(x + dx, y + 1) - plane.get_clamped(x + dx, y - 1))
            .sum()
    });
    (gx, gy)
}

/// `√(Gx² + Gy²)` with 3×3 Prewitt kernels.
pub fn prewitt_magnitude(plane: &Plane) -> Plane {
    let (gx, gy) = prewitt_gradients(plane);
    Plane::from_vec(
        plane.width(),
        plane.height(),
        gx.data()
            .iter()
            .zip(gy.data())
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lm15_shape_and_normalisation() {
        let bank = make_lm15();
        assert_eq!(bank.len(), 15);
        for k in &bank.kernels {
            assert_eq!(k.size, 49);
            if k.name == "gauss_10" {
                assert!((k.sum() - 1.0).abs() < 1e-10);
            } else {
                assert!(k.sum().abs() < 1e-10, "{} sums to {}", k.name, k.sum());
                let l1: f64 = k.data.iter().map(|v| v.abs()).sum();
                assert!((l1 - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn laws14_construction() {
        let bank = make_laws14();
        assert_eq!(bank.len(), 14);
        for k in &bank.kernels {
            assert!(k.sum().abs() < 1e-10, "{}", k.name);
        }
        let r5 = LAWS_VECTORS[4].1;
        let r5r5 = bank.kernels.iter().find(|k| k.name == "R5R5").unwrap();
        for row in 0..5 {
            for col in 0..5 {
                assert_eq!(r5r5.at(row, col), r5[row] * r5[col]);
            }
        }
    }

    #[test]
    fn zero_mean_kernels_ignore_constants() {
        let img = RasterImage::filled(60, 55, &[0.37]);
        for bank in [make_lm15(), make_laws14()] {
            for (k, resp) in bank.kernels.iter().zip(filter_response(&img, &bank).unwrap()) {
                if k.name == "gauss_10" {
                    continue;
                }
                assert!(resp.data().iter().all(|v| v.abs() < 1e-9), "{}", k.name);
            }
        }
    }

    #[test]
    fn impulse_gives_flipped_kernel() {
        let mut p = Plane::new(15, 15);
        p.set(7, 7, 1.0);
        let bank = make_laws14();
        let k = &bank.kernels[3];
        let resp = correlate_direct(&p, k);
        for row in 0..5 {
            for col in 0..5 {
                // response at (7 - dc, 7 - dr) picks kernel entry (2 + dr, 2 + dc)
                let (x, y) = (7 + 2 - col, 7 + 2 - row);
                assert_eq!(resp.get(x, y), k.at(row, col));
            }
        }
    }

    #[test]
    fn vertical_step_prefers_zero_degree_edge_filter() {
        let p = Plane::from_fn(120, 120, |x, _| if x < 60 { 0.2 } else { 0.8 });
        let bank = make_lm15();
        let responses = filter_plane(&p, &bank);
        let at_edge: Vec<f64> = responses[..6].iter().map(|r| r.get(60, 60).abs()).collect();
        let best = at_edge
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(best, 0, "{at_edge:?}");
    }

    #[test]
    fn lbp_examples() {
        let c = Plane::filled(6, 6, 0.5);
        assert!(lbp_codes(&c).iter().all(|&v| v == 255));
        let mut spot = Plane::filled(7, 7, 0.2);
        spot.set(3, 3, 0.9);
        assert_eq!(lbp_codes(&spot)[3 * 7 + 3], 0);
        let img = RasterImage::from_fn(9, 8, 1, |x, y, _| ((x * y) % 5) as f64 / 4.0);
        let map = LbpMap::compute(&img).unwrap();
        assert_eq!(map.histogram().iter().sum::<u64>(), 72);
    }

    #[test]
    fn prewitt_examples() {
        let c = Plane::filled(8, 8, 0.4);
        assert!(prewitt_magnitude(&c).data().iter().all(|&v| v == 0.0));
        let h = 0.5;
        let step = Plane::from_fn(10, 10, |x, _| if x < 5 { 0.0 } else { h });
        let m = prewitt_magnitude(&step);
        assert!((m.get(4, 5) - 3.0 * h).abs() < 1e-12);
        assert!((m.get(5, 5) - 3.0 * h).abs() < 1e-12);
        assert_eq!(m.get(2, 5), 0.0);
    }

    #[test]
    fn prewitt_rotation() {
        let p = Plane::from_fn(9, 9, |x, y| ((x * 3 + y * y) % 7) as f64 / 6.0);
        // rotate 90° clockwise: (x, y) -> (n-1-y, x)
        let rot = Plane::from_fn(9, 9, |x, y| p.get(y, 8 - x));
        let m = prewitt_magnitude(&p);
        let mr = prewitt_magnitude(&rot);
        for y in 0..9 {
            for x in 0..9 {
                assert!((mr.get(x, y) - m.get(y, 8 - x)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn filtering_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0usize..50) {
            let p1 = Plane::from_fn(20, 16, |x, y| ((x * 7 + y * 3 + seed) % 13) as f64 / 12.0);
            let p2 = Plane::from_fn(20, 16, |x, y| ((x * x + y + seed) % 9) as f64 / 8.0);
            let mix = Plane::from_fn(20, 16, |x, y| a * p1.get(x, y) + b * p2.get(x, y));
            let bank = make_laws14();
            let r1 = filter_plane(&p1, &bank);
            let r2 = filter_plane(&p2, &bank);
            let rm = filter_plane(&mix, &bank);
            for k in 0..bank.len() {
                for i in 0..rm[k].data().len() {
                    let want = a * r1[k].data()[i] + b * r2[k].data()[i];
                    prop_assert!((rm[k].data()[i] - want).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn lbp_invariant_to_squaring(bits in proptest::collection::vec(0.01f64..0.99, 64)) {
            let p = Plane::from_vec(8, 8, bits);
            let sq = p.map(|v| v * v);
            prop_assert_eq!(lbp_codes(&p), lbp_codes(&sq));
        }
    }
}
