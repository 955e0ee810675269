pub mod error;
pub mod imgcore;

pub use error::{Error, Result};
pub mod preprocess;
pub mod filterbank;
pub mod multiseg;
pub mod regionfeat;
pub mod forest;
pub mod saliency;
pub mod segment;
pub mod config;
pub mod pipeline;
pub mod evalkit;
pub mod synthgen;
pub mod model_io;
