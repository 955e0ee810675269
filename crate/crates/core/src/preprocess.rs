//! Image normalisation ahead of saliency detection: resizing, Shades-of-Gray colour
//! constancy and a pluggable hair-removal hook.
//!
//! Order of application is resize, then colour constancy, then the hair hook.

use crate::error::{Error, Result};
use crate::imgcore::filter::resize_bilinear;
use crate::imgcore::RasterImage;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Per-channel multiplicative white-balance gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainTriple {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl GainTriple {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        if [r, g, b].iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gains must be positive and finite, got ({r}, {g}, {b})"
            )));
        }
        Ok(Self { r, g, b })
    }

    pub fn identity() -> Self {
        Self { r: 1.0, g: 1.0, b: 1.0 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Working height in rows.
    pub target_height: usize,
    /// Working width in columns.
    pub target_width: usize,
    pub color_constancy: bool,
    pub minkowski_p: f64,
    pub hair_hook: String,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_height: 300,
            target_width: 400,
            color_constancy: true,
            minkowski_p: 6.0,
            hair_hook: IDENTITY_HOOK.to_string(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.minkowski_p >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "minkowski_p must be >= 1, got {}",
                self.minkowski_p
            )));
        }
        if self.target_height == 0 || self.target_width == 0 {
            return Err(Error::InvalidParameter("target size must be non-zero".into()));
        }
        Ok(())
    }
}

/// Shades-of-Gray illuminant estimate turned into correction gains.
///
/// `e_c` is the Minkowski `p`-mean of channel `c`; the triple is scaled to unit
/// Euclidean norm and each gain is `1 / (√3 e_c)`.
pub fn shades_of_gray_gains(img: &RasterImage, p: f64) -> Result<GainTriple> {
    img.require_channels(3)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("norm degree must be >= 1, got {p}")));
    }
    let n = img.pixel_count() as f64;
    if n == 0.0 {
        return Err(Error::EmptyInput);
    }
    let mut e = [0.0f64; 3];
    for (c, ec) in e.iter_mut().enumerate() {
        // factor out the channel maximum so large p cannot underflow
        let max = img.data().iter().skip(c).step_by(3).fold(0.0f64, |m, &v| m.max(v));
        if max <= 0.0 {
            return Err(Error::DegenerateChannel(c));
        }
        let mean: f64 = img
            .data()
            .iter()
            .skip(c)
            .step_by(3)
            .map(|&v| (v / max).powf(p))
            .sum::<f64>()
            / n;
        *ec = max * mean.powf(1.0 / p);
    }
    let norm = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    let sqrt3 = 3f64.sqrt();
    let d = e.map(|ec| 1.0 / (sqrt3 * ec / norm));
    GainTriple::new(d[0], d[1], d[2])
}

/// Multiplies each channel by its gain and clamps into `[0, 1]`.
pub fn apply_color_constancy(img: &RasterImage, gains: GainTriple) -> Result<RasterImage> {
    img.require_channels(3)?;
    let g = gains.as_array();
    Ok(RasterImage::from_fn(img.width(), img.height(), 3, |x, y, c| {
        img.get(x, y, c) * g[c]
    }))
}

pub fn resize_to_standard(img: &RasterImage, cfg: &PreprocessConfig) -> RasterImage {
    resize_bilinear(img, cfg.target_width, cfg.target_height)
}

pub const IDENTITY_HOOK: &str = "identity";
pub const PASSTHROUGH_HOOK: &str = "passthrough-file";

/// Where the image being processed came from, for hooks that need sibling files.
#[derive(Clone, Debug, Default)]
pub struct HookContext {
    pub source_path: Option<PathBuf>,
}

/// A hair/ruler-mark removal stage. Must return an image of the input's shape.
pub trait HairRemoval: Send + Sync {
    fn apply(&self, img: &RasterImage, ctx: &HookContext) -> Result<RasterImage>;
}

pub struct IdentityHook;

impl HairRemoval for IdentityHook {
    fn apply(&self, img: &RasterImage, _ctx: &HookContext) -> Result<RasterImage> {
        Ok(img.clone())
    }
}

/// Loader used by [`PassthroughFileHook`]; the core crate does no image decoding.
pub type ImageLoader = dyn Fn(&Path) -> Result<RasterImage> + Send + Sync;

/// Substitutes an externally inpainted sibling file `<stem>_inpainted.png`.
pub struct PassthroughFileHook {
    loader: Arc<ImageLoader>,
}

impl PassthroughFileHook {
    pub fn new(loader: Arc<ImageLoader>) -> Self {
        Self { loader }
    }

    pub fn sibling_path(source: &Path) -> PathBuf {
        let stem = source
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        source.with_file_name(format!("{stem}_inpainted.png"))
    }
}

impl HairRemoval for PassthroughFileHook {
    fn apply(&self, img: &RasterImage, ctx: &HookContext) -> Result<RasterImage> {
        let source = ctx.source_path.as_deref().ok_or_else(|| Error::HookFailed {
            hook: PASSTHROUGH_HOOK.into(),
            reason: "no source path for this image".into(),
        })?;
        let path = Self::sibling_path(source);
        let loaded = (self.loader)(&path).map_err(|e| Error::HookFailed {
            hook: PASSTHROUGH_HOOK.into(),
            reason: format!("{}: {e}", path.display()),
        })?;
        if loaded.channels() != img.channels() {
            return Err(Error::HookFailed {
                hook: PASSTHROUGH_HOOK.into(),
                reason: format!("{} has {} channels", path.display(), loaded.channels()),
            });
        }
        Ok(resize_bilinear(&loaded, img.width(), img.height()))
    }
}

/// Hooks keyed by identifier. Always contains `identity`.
#[derive(Clone)]
pub struct HookRegistry {
    hooks: BTreeMap<String, Arc<dyn HairRemoval>>,
}

impl Default for HookRegistry {
    fn default() -> Self {
        let mut hooks: BTreeMap<String, Arc<dyn HairRemoval>> = BTreeMap::new();
        hooks.insert(IDENTITY_HOOK.into(), Arc::new(IdentityHook));
        Self { hooks }
    }
}

impl HookRegistry {
    pub fn register(&mut self, name: impl Into<String>, hook: Arc<dyn HairRemoval>) {
        self.hooks.insert(name.into(), hook);
    }

    pub fn with_passthrough(mut self, loader: Arc<ImageLoader>) -> Self {
        self.register(PASSTHROUGH_HOOK, Arc::new(PassthroughFileHook::new(loader)));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.hooks.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn HairRemoval>> {
        self.hooks
            .get(name)
            .ok_or_else(|| Error::UnknownHook(name.to_string()))
    }
}

pub fn hair_removal_hook(
    img: &RasterImage,
    hook: &str,
    registry: &HookRegistry,
    ctx: &HookContext,
) -> Result<RasterImage> {
    let out = registry.get(hook)?.apply(img, ctx)?;
    if !out.same_size(img) || out.channels() != img.channels() {
        return Err(Error::HookFailed {
            hook: hook.into(),
            reason: "hook changed the image shape".into(),
        });
    }
    Ok(out)
}

/// Full preprocessing chain for one image.
pub fn preprocess(
    img: &RasterImage,
    cfg: &PreprocessConfig,
    registry: &HookRegistry,
    ctx: &HookContext,
) -> Result<RasterImage> {
    cfg.validate()?;
    img.require_channels(3)?;
    let mut out = resize_to_standard(img, cfg);
    if cfg.color_constancy {
        match shades_of_gray_gains(&out, cfg.minkowski_p) {
            Ok(gains) => out = apply_color_constancy(&out, gains)?,
            Err(Error::DegenerateChannel(c)) => {
                log::warn!("channel {c} is identically zero; skipping colour constancy");
            }
            Err(e) => return Err(e),
        }
    }
    hair_removal_hook(&out, &cfg.hair_hook, registry, ctx)
}
