//! Directory layouts: `images/<stem>.(png|jpg|jpeg)` with optional
//! `masks/<stem>_segmentation.png`.

use anyhow::{bail, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MASK_SUFFIX: &str = "_segmentation";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug)]
pub struct DatasetItem {
    pub stem: String,
    pub image: PathBuf,
    pub gt: Option<PathBuf>,
}

#[derive(Clone, Debug, Default)]
pub struct DatasetIndex {
    pub items: Vec<DatasetItem>,
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn stem_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Image files directly inside `dir`, sorted by path. Inpainted siblings used by
/// the passthrough hook are skipped.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| anyhow::anyhow!("cannot list {}: {e}", dir.display()))? {
        let p = entry?.path();
        if p.is_file() && is_image(&p) && !stem_of(&p).ends_with("_inpainted") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

impl DatasetIndex {
    /// Reads `root/images` (or `root` itself when it has no `images` folder) and
    /// pairs each image with `masks/<stem>_segmentation.png` when present.
    pub fn scan(root: &Path) -> Result<Self> {
        let images_dir = if root.join("images").is_dir() { root.join("images") } else { root.to_path_buf() };
        let masks_dir = root.join("masks");
        let items = list_images(&images_dir)?
            .into_iter()
            .map(|image| {
                let stem = stem_of(&image);
                let gt = masks_dir.join(format!("{stem}{MASK_SUFFIX}.png"));
                DatasetItem { gt: gt.is_file().then_some(gt), stem, image }
            })
            .collect();
        Ok(Self { items })
    }

    /// For training: every image must have its mask; missing ones are listed.
    pub fn require_gt(&self, root: &Path) -> Result<()> {
        let missing: Vec<String> = self
            .items
            .iter()
            .filter(|i| i.gt.is_none())
            .map(|i| root.join("masks").join(format!("{}{MASK_SUFFIX}.png", i.stem)).display().to_string())
            .collect();
        if !missing.is_empty() {
            bail!("missing ground-truth masks:\n  {}", missing.join("\n  "));
        }
        Ok(())
    }
}

/// Mask files keyed by stem. The first of `suffixes` carried by any file is
/// dropped from the stems and files without it are ignored; with no suffix
/// present every image counts under its plain stem.
pub fn mask_files(dir: &Path, suffixes: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let dir = if dir.join("masks").is_dir() { dir.join("masks") } else { dir.to_path_buf() };
    let files: Vec<PathBuf> = list_images(&dir)?;
    let suffix = suffixes.iter().find(|&&s| files.iter().any(|p| stem_of(p).ends_with(s)));
    let mut out = BTreeMap::new();
    if let Some(suffix) = suffix {
        for p in files.iter().filter(|p| stem_of(p).ends_with(suffix)) {
            let s = stem_of(p);
            out.insert(s[..s.len() - suffix.len()].to_string(), p.clone());
        }
    } else {
        for p in &files {
            out.insert(stem_of(p), p.clone());
        }
    }
    Ok(out)
}
