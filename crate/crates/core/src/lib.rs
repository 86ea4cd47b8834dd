//! Two-modality (spectral + elevation) land-cover classifier with
//! multi-scale alignment, oriented attention fusion, a transformer codec,
//! a mutual-information aggregation loss and self-distillation into
//! single-modality classifiers.

pub mod analysis;
pub mod dataio;
mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod params;
pub mod train;

pub use error::{Error, Result};
