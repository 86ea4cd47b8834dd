//! Raster containers, the MMRS file format, patch extraction, synthetic
//! scenes and sample splits.

mod cubes;
pub mod mmrs;
mod raster;
mod split;
pub mod synth;

pub use cubes::{batch_cubes, extract_cubes, reflect_index};
pub use mmrs::Scene;
pub use raster::{LabelRaster, ModalRaster};
pub use split::{split_samples, split_set, SampleSet};
pub use synth::{SynthConfig, Synthetic};
