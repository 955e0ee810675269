//! Every tunable of the pipeline in one serialisable snapshot.

use crate::error::Result;
use crate::forest::ForestConfig;
use crate::multiseg::MultisegConfig;
use crate::preprocess::PreprocessConfig;
use crate::regionfeat::RegionFeatConfig;
use crate::saliency::LabelingConfig;
use crate::segment::SegmentConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub multiseg: MultisegConfig,
    pub regionfeat: RegionFeatConfig,
    pub forest: ForestConfig,
    pub labeling: LabelingConfig,
    pub segment: SegmentConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.multiseg.validate()?;
        self.regionfeat.validate()?;
        self.forest.validate()?;
        self.segment.validate()
    }
}
