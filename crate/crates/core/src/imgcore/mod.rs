//! Image types and the low-level raster toolbox used by every other stage.

pub mod color;
pub mod distance;
pub mod filter;
pub mod histogram;
pub mod hull;
pub mod morph;
pub mod raster;

pub use color::{convert_color, to_gray, ColorSpace};
pub use distance::signed_distance;
pub use histogram::{channel_entropy, GrayHistogram};
pub use hull::convex_hull_mask;
pub use morph::{connected_components, morphology, Component, MorphOp, StructuringElement};
pub use raster::{BinaryMask, Dimensions, LevelSetField, Plane, RasterImage};
