//! PNG/JPEG decoding into the core raster types and atomic PNG output.

use anyhow::{Context, Result};
use image::{GrayImage, ImageFormat, Rgb, RgbImage};
use salmap::imgcore::{BinaryMask, Plane, RasterImage};
use salmap::model_io::atomic_write;
use std::io::Cursor;
use std::path::Path;

pub fn load_rgb(path: &Path) -> Result<RasterImage> {
    let img = image::open(path)
        .with_context(|| format!("cannot read image {}", path.display()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(RasterImage::new(w, h, 3, data)?)
}

/// Masks are single-channel images thresholded at > 127.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path)
        .with_context(|| format!("cannot read mask {}", path.display()))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(BinaryMask::from_vec(w, h, img.into_raw().into_iter().map(|v| v > 127).collect()))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png_bytes(path: &Path, encode: impl FnOnce(&mut Cursor<Vec<u8>>) -> image::ImageResult<()>) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    encode(&mut buf).with_context(|| format!("cannot encode {}", path.display()))?;
    atomic_write(path, buf.get_ref()).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn save_plane(path: &Path, plane: &Plane) -> Result<()> {
    let img = GrayImage::from_raw(
        plane.width() as u32,
        plane.height() as u32,
        plane.data().iter().map(|&v| to_u8(v)).collect(),
    )
    .expect("buffer matches dimensions");
    write_png_bytes(path, |b| img.write_to(b, ImageFormat::Png))
}

/// Mask pixels become 255, the rest 0.
pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    save_plane(path, &mask.to_plane())
}

pub fn save_rgb(path: &Path, img: &RasterImage) -> Result<()> {
    let out = RgbImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.data().iter().map(|&v| to_u8(v)).collect(),
    )
    .expect("buffer matches dimensions");
    write_png_bytes(path, |b| out.write_to(b, ImageFormat::Png))
}

fn contour(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let (x, y) = (x as isize, y as isize);
        [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
            let (xx, yy) = (x + dx, y + dy);
            xx < 0 || yy < 0 || xx >= w || yy >= h || !mask.get(xx as usize, yy as usize)
        })
    })
}

/// Contours over the image: ground truth green, initial mask red, final mask blue.
pub fn overlay(img: &RasterImage, gt: Option<&BinaryMask>, initial: &BinaryMask, fin: &BinaryMask) -> RgbImage {
    let mut out = RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([to_u8(img.get(x, y, 0)), to_u8(img.get(x, y, 1)), to_u8(img.get(x, y, 2))])
    });
    let layers = [(gt, [0u8, 255, 0]), (Some(initial), [255, 0, 0]), (Some(fin), [0, 0, 255])];
    for (mask, colour) in layers {
        let Some(mask) = mask else { continue };
        for (x, y) in contour(mask).pixels() {
            out.put_pixel(x as u32, y as u32, Rgb(colour));
        }
    }
    out
}

pub fn save_overlay(path: &Path, img: &RgbImage) -> Result<()> {
    write_png_bytes(path, |b| img.write_to(b, ImageFormat::Png))
}
