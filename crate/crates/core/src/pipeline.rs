//! End-to-end entry points: preprocessing plus training, and preprocessing plus
//! saliency, initial mask, level-set refinement and cleanup for one image.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imgcore::filter::{resize_nearest, resize_plane_bilinear};
use crate::imgcore::{BinaryMask, Plane, RasterImage};
use crate::preprocess::{preprocess, HookContext, HookRegistry};
use crate::saliency::{predict_saliency, train_saliency, SaliencyModel, TrainingImage, TrainingReport};
use crate::segment::{drlse_run, fallback_mask, final_cleanup, initial_mask, select_evolution_channel};
use rayon::prelude::*;
use std::path::PathBuf;

/// An input image with its optional ground truth, both at original size.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: RasterImage,
    pub gt: Option<BinaryMask>,
    pub source: Option<PathBuf>,
}

pub fn prepare_image(
    img: &RasterImage,
    source: Option<PathBuf>,
    cfg: &PipelineConfig,
    hooks: &HookRegistry,
) -> Result<RasterImage> {
    preprocess(img, &cfg.preprocess, hooks, &HookContext { source_path: source })
}

pub fn prepare_mask(gt: &BinaryMask, cfg: &PipelineConfig) -> BinaryMask {
    resize_nearest(gt, cfg.preprocess.target_width, cfg.preprocess.target_height)
}

/// Preprocesses every sample and trains the forest and fusion weights.
pub fn train(samples: &[Sample], cfg: &PipelineConfig, hooks: &HookRegistry) -> Result<(SaliencyModel, TrainingReport)> {
    cfg.validate()?;
    let prepared: Vec<TrainingImage> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let gt = s
                .gt
                .as_ref()
                .ok_or_else(|| Error::InsufficientData(format!("training sample {i} has no ground truth")))?;
            if !s.image.same_size(gt) {
                return Err(Error::DimensionMismatch(format!("sample {i}: image and mask differ in size")));
            }
            Ok(TrainingImage {
                image: prepare_image(&s.image, s.source.clone(), cfg, hooks)?,
                gt: prepare_mask(gt, cfg),
            })
        })
        .collect::<Result<_>>()?;
    train_saliency(&prepared, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialSource {
    Threshold,
    /// Nothing passed the threshold; the most salient finest region was used.
    MostSalientRegion,
}

/// Everything produced for one image, at the working resolution.
pub struct Segmentation {
    pub preprocessed: RasterImage,
    pub saliency: Plane,
    pub level_maps: Vec<Plane>,
    pub initial: BinaryMask,
    pub initial_source: InitialSource,
    /// Level-set refinement is skipped when the initial mask is empty or fills the frame.
    pub drlse_skipped: bool,
    pub final_mask: BinaryMask,
    pub strip_mask: BinaryMask,
    pub circle_probability: Plane,
    pub phi_snapshots: Vec<(usize, Plane)>,
}

impl Segmentation {
    /// Saliency resampled bilinearly and masks by nearest neighbour to `width × height`.
    pub fn resized(&self, width: usize, height: usize) -> (Plane, BinaryMask, BinaryMask) {
        (
            resize_plane_bilinear(&self.saliency, width, height),
            resize_nearest(&self.initial, width, height),
            resize_nearest(&self.final_mask, width, height),
        )
    }
}

pub fn segment_image(
    model: &SaliencyModel,
    img: &RasterImage,
    source: Option<PathBuf>,
    hooks: &HookRegistry,
    snapshot_every: usize,
) -> Result<Segmentation> {
    let cfg = &model.config;
    let pre = prepare_image(img, source, cfg, hooks)?;
    let pred = predict_saliency(model, &pre)?;
    let (initial, initial_source) = match initial_mask(&pred.final_map, cfg.segment.threshold) {
        Ok(m) => (m, InitialSource::Threshold),
        Err(Error::NoSalientObject) => {
            log::warn!("no pixel above the saliency threshold; using the most salient region");
            let finest = &pred.analysis.partition.levels[0];
            (fallback_mask(&pred.final_map, finest), InitialSource::MostSalientRegion)
        }
        Err(e) => return Err(e),
    };

    let mut phi_snapshots = Vec::new();
    let drlse_skipped = initial.is_empty() || initial.is_full();
    let evolved = if drlse_skipped {
        initial.clone()
    } else {
        let channel = select_evolution_channel(&pre);
        let run = drlse_run(&initial, &channel, &cfg.segment.drlse, snapshot_every)?;
        phi_snapshots = run.snapshots.clone();
        let m = run.mask();
        if m.is_empty() {
            log::warn!("level set collapsed; keeping the initial mask");
            initial.clone()
        } else {
            m
        }
    };
    let final_mask = final_cleanup(&evolved, cfg.segment.cleanup_radius);
    Ok(Segmentation {
        preprocessed: pre,
        saliency: pred.final_map,
        level_maps: pred.level_maps,
        initial,
        initial_source,
        drlse_skipped,
        final_mask,
        strip_mask: pred.analysis.strip_mask,
        circle_probability: pred.analysis.circle_probability,
        phi_snapshots,
    })
}
