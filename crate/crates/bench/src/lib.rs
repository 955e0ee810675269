//! Shared inputs for the stage benchmarks.

use salmap::imgcore::RasterImage;
use salmap::synthgen::{generate_one, SynthSpec};

/// One 300x400 synthetic image with every artifact switched on.
pub fn sample_image() -> RasterImage {
    generate_one(&SynthSpec { seed: 1, count: 1, ..SynthSpec::default() }, 0)
        .expect("default spec is valid")
        .image
}
