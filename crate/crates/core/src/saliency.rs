//! Region labelling from ground truth, per-level saliency maps from the forest,
//! and least-squares fusion of the levels.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::forest::{train_forest_with_oob, ForestModel};
use crate::imgcore::{BinaryMask, Plane, RasterImage};
use crate::multiseg::{segment_levels, LabelMap, MultiLevelPartition};
use crate::regionfeat::{describe_partition, ImageFeatures, RegionDescriptor};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    /// Overlap with the ground truth at or above which a region is salient.
    pub positive_overlap: f64,
    /// Overlap at or below which a region is background.
    pub negative_overlap: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            positive_overlap: 0.8,
            negative_overlap: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionLabel {
    Salient,
    Background,
    /// Overlap falls between the two thresholds; not used for training.
    Excluded,
}

impl RegionLabel {
    pub fn target(self) -> Option<f64> {
        match self {
            RegionLabel::Salient => Some(1.0),
            RegionLabel::Background => Some(0.0),
            RegionLabel::Excluded => None,
        }
    }
}

pub fn label_level(level: &LabelMap, gt: &BinaryMask, cfg: &LabelingConfig) -> Result<Vec<RegionLabel>> {
    if level.width() != gt.width() || level.height() != gt.height() {
        return Err(Error::DimensionMismatch("ground truth and label map differ in size".into()));
    }
    let mut inside = vec![0usize; level.region_count()];
    for (&l, &g) in level.labels().iter().zip(gt.data()) {
        if g {
            inside[l as usize] += 1;
        }
    }
    Ok(level
        .areas()
        .iter()
        .zip(&inside)
        .map(|(&area, &hit)| {
            let r = hit as f64 / area as f64;
            if r >= cfg.positive_overlap {
                RegionLabel::Salient
            } else if r <= cfg.negative_overlap {
                RegionLabel::Background
            } else {
                RegionLabel::Excluded
            }
        })
        .collect())
}

pub fn label_regions(
    partition: &MultiLevelPartition,
    gt: &BinaryMask,
    cfg: &LabelingConfig,
) -> Result<Vec<Vec<RegionLabel>>> {
    partition.levels.iter().map(|l| label_level(l, gt, cfg)).collect()
}

/// A trained saliency model: the forest, one fusion weight per level, and the
/// configuration it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyModel {
    pub forest: ForestModel,
    pub fusion_weights: Vec<f64>,
    pub config: PipelineConfig,
}

impl SaliencyModel {
    pub fn validate(&self) -> Result<()> {
        if self.fusion_weights.len() != self.config.multiseg.level_count {
            return Err(Error::ModelFormat(format!(
                "{} fusion weights for {} levels",
                self.fusion_weights.len(),
                self.config.multiseg.level_count
            )));
        }
        if self.fusion_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ModelFormat("non-finite fusion weight".into()));
        }
        self.forest.validate()
    }
}

/// Partition and descriptors of one preprocessed image, plus the intermediate
/// maps worth dumping.
pub struct ImageAnalysis {
    pub partition: MultiLevelPartition,
    pub descriptors: Vec<Vec<RegionDescriptor>>,
    pub strip_mask: BinaryMask,
    pub circle_probability: Plane,
}

pub fn analyze_image(img: &RasterImage, cfg: &PipelineConfig) -> Result<ImageAnalysis> {
    let partition = segment_levels(img, &cfg.multiseg)?;
    let features = ImageFeatures::compute(img, &cfg.regionfeat)?;
    let descriptors = describe_partition(&features, &partition, &cfg.regionfeat)?;
    Ok(ImageAnalysis {
        partition,
        descriptors,
        strip_mask: features.background.strip_mask.clone(),
        circle_probability: features.circles.probability_map.clone(),
    })
}

/// One map per level, each region painted with its forest prediction.
pub fn level_maps(forest: &ForestModel, analysis: &ImageAnalysis) -> Result<Vec<Plane>> {
    analysis
        .partition
        .levels
        .iter()
        .zip(&analysis.descriptors)
        .map(|(level, descs)| {
            let scores = descs
                .iter()
                .map(|d| forest.predict(&d.to_vec()))
                .collect::<Result<Vec<f64>>>()?;
            let data = level.labels().iter().map(|&l| scores[l as usize]).collect();
            Ok(Plane::from_vec(level.width(), level.height(), data))
        })
        .collect()
}

/// clamp(Σ w_l S_l, 0, 1).
pub fn fuse(maps: &[Plane], weights: &[f64]) -> Result<Plane> {
    if maps.is_empty() || maps.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!("{} maps for {} weights", maps.len(), weights.len())));
    }
    let (w, h) = (maps[0].width(), maps[0].height());
    let mut out = vec![0.0; w * h];
    for (m, &wt) in maps.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(m.data()) {
            *o += wt * v;
        }
    }
    Ok(Plane::from_vec(w, h, out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()))
}

/// Accumulated normal equations for the fusion least-squares problem.
#[derive(Clone, Debug)]
pub struct FusionSystem {
    ata: DMatrix<f64>,
    atb: DVector<f64>,
    btb: f64,
    rows: usize,
}

impl FusionSystem {
    pub fn new(levels: usize) -> Self {
        Self {
            ata: DMatrix::zeros(levels, levels),
            atb: DVector::zeros(levels),
            btb: 0.0,
            rows: 0,
        }
    }

    /// Adds every pixel of one image: regressors are the level maps, target the mask.
    pub fn add_image(&mut self, maps: &[Plane], gt: &BinaryMask) -> Result<()> {
        let l = self.atb.len();
        if maps.len() != l {
            return Err(Error::DimensionMismatch(format!("{} maps for {l} levels", maps.len())));
        }
        if maps.iter().any(|m| m.width() != gt.width() || m.height() != gt.height()) {
            return Err(Error::DimensionMismatch("level map and mask differ in size".into()));
        }
        let mut row = vec![0.0; l];
        for (p, &g) in gt.data().iter().enumerate() {
            let b = if g { 1.0 } else { 0.0 };
            for (k, m) in maps.iter().enumerate() {
                row[k] = m.data()[p];
            }
            for i in 0..l {
                self.atb[i] += row[i] * b;
                for j in i..l {
                    self.ata[(i, j)] += row[i] * row[j];
                }
            }
            self.btb += b;
        }
        for i in 0..l {
            for j in 0..i {
                self.ata[(i, j)] = self.ata[(j, i)];
            }
        }
        self.rows += gt.data().len();
        Ok(())
    }

    /// Minimal-norm least-squares weights and the mean squared residual.
    pub fn solve(&self) -> Result<(Vec<f64>, f64)> {
        if self.rows == 0 {
            return Err(Error::InsufficientData("fusion system has no rows".into()));
        }
        let w = min_norm_solve(&self.ata, &self.atb)?;
        // ‖Aw − b‖² = wᵀAᵀAw − 2wᵀAᵀb + bᵀb
        let sse = (w.transpose() * &self.ata * &w)[(0, 0)] - 2.0 * w.dot(&self.atb) + self.btb;
        Ok((w.iter().copied().collect(), sse.max(0.0) / self.rows as f64))
    }
}

/// Pseudo-inverse solve of the symmetric normal equations; singular values below
/// a relative tolerance are treated as zero, which yields the minimal-norm solution.
fn min_norm_solve(ata: &DMatrix<f64>, atb: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = ata.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if max_sv == 0.0 {
        return Ok(DVector::zeros(atb.len()));
    }
    let tol = max_sv * ata.nrows() as f64 * f64::EPSILON * 16.0;
    svd.solve(atb, tol)
        .map_err(|e| Error::InvalidParameter(format!("fusion solve failed: {e}")))
}

/// A training image (already preprocessed) and its ground-truth mask at the same size.
pub struct TrainingImage {
    pub image: RasterImage,
    pub gt: BinaryMask,
}

#[derive(Clone, Debug)]
pub struct TrainingReport {
    pub sample_count: usize,
    pub excluded_count: usize,
    pub oob_mse: Option<f64>,
    pub fusion_residual: f64,
}

pub fn train_saliency(images: &[TrainingImage], cfg: &PipelineConfig) -> Result<(SaliencyModel, TrainingReport)> {
    cfg.validate()?;
    if images.len() < 2 {
        return Err(Error::InsufficientData(format!("{} training images, need at least 2", images.len())));
    }
    for (i, t) in images.iter().enumerate() {
        if !t.image.same_size(&t.gt) {
            return Err(Error::DimensionMismatch(format!("training image {i} and its mask differ in size")));
        }
    }
    let analyses: Vec<ImageAnalysis> = images
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            log::debug!("analysing training image {i}");
            analyze_image(&t.image, cfg)
        })
        .collect::<Result<_>>()?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut excluded = 0;
    for (t, a) in images.iter().zip(&analyses) {
        let region_labels = label_regions(&a.partition, &t.gt, &cfg.labeling)?;
        for (descs, labs) in a.descriptors.iter().zip(&region_labels) {
            for (d, lab) in descs.iter().zip(labs) {
                match lab.target() {
                    Some(y) => {
                        features.push(d.to_vec());
                        labels.push(y);
                    }
                    None => excluded += 1,
                }
            }
        }
    }
    if features.is_empty() {
        return Err(Error::InsufficientData("no labelled regions to train on".into()));
    }
    log::info!("training forest on {} regions ({excluded} excluded)", features.len());
    let trained = train_forest_with_oob(&features, &labels, &cfg.forest)?;
    drop(features);

    let mut system = FusionSystem::new(cfg.multiseg.level_count);
    for (t, a) in images.iter().zip(&analyses) {
        let maps = level_maps(&trained.model, a)?;
        system.add_image(&maps, &t.gt)?;
    }
    let (weights, residual) = system.solve()?;
    let model = SaliencyModel {
        forest: trained.model,
        fusion_weights: weights,
        config: cfg.clone(),
    };
    let report = TrainingReport {
        sample_count: labels.len(),
        excluded_count: excluded,
        oob_mse: trained.oob_mse,
        fusion_residual: residual,
    };
    Ok((model, report))
}

pub struct SaliencyPrediction {
    pub final_map: Plane,
    pub level_maps: Vec<Plane>,
    pub analysis: ImageAnalysis,
}

/// Saliency of a preprocessed image.
pub fn predict_saliency(model: &SaliencyModel, img: &RasterImage) -> Result<SaliencyPrediction> {
    let analysis = analyze_image(img, &model.config)?;
    let maps = level_maps(&model.forest, &analysis)?;
    let final_map = fuse(&maps, &model.fusion_weights)?;
    Ok(SaliencyPrediction {
        final_map,
        level_maps: maps,
        analysis,
    })
}
