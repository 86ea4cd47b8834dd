//! Feature export, redundancy tables and label-map rendering.

use std::fmt::Write as _;
use std::str::FromStr;

use mivit_autodiff::Tape;

use crate::dataio::{SampleSet, Scene};
use crate::error::{Error, Result};
use crate::metrics::correlation_matrix;
use crate::model::{Mivit, Vit};
use crate::params::ParamStore;
use crate::train::{constants, cube_batch, even_batches, HeadOutputs};

/// A representation that can be exported per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Separated features of modality 1, flattened `d·s0·s0`.
    Enc1,
    /// Separated features of modality 2.
    Enc2,
    /// Fused map `Φ_T`.
    Fused,
    /// Class token of the transformer encoder.
    Vit,
}

impl FromStr for Layer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enc1" => Ok(Layer::Enc1),
            "enc2" => Ok(Layer::Enc2),
            "fused" => Ok(Layer::Fused),
            "vit" => Ok(Layer::Vit),
            _ => Err(Error::Config(format!("unknown layer {s:?} (expected enc1, enc2, fused or vit)"))),
        }
    }
}

/// Row-major `[samples, width]` features; returns `(width, data)`.
pub fn features(
    model: &Mivit,
    params: &ParamStore<f32>,
    scene: &Scene,
    samples: &SampleSet,
    layer: Layer,
    batch: usize,
) -> Result<(usize, Vec<f32>)> {
    let sizes = &model.cfg.cube_sizes;
    let need_both = matches!(layer, Layer::Fused | Layer::Vit);
    if need_both && scene.modalities.len() < 2 {
        return Err(Error::Capability(format!("layer {layer:?} needs both modalities")));
    }
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut data = Vec::new();
    let mut width = 0;
    for idx in even_batches(&order, batch.max(1)) {
        let cs: Vec<(usize, usize)> = idx.iter().map(|&i| samples.centers[i]).collect();
        let mut t = Tape::<f32>::new();
        let p = params.bind_frozen(&mut t);
        let v = match layer {
            Layer::Enc1 | Layer::Enc2 => {
                let m = usize::from(layer == Layer::Enc2);
                let raster = if scene.modalities.len() == 1 { &scene.modalities[0] } else { &scene.modalities[m] };
                let cubes = constants(&mut t, &cube_batch(raster, &cs, sizes)?);
                model.encode(&mut t, &p, m, &cubes)?
            }
            Layer::Fused | Layer::Vit => {
                let e = constants(&mut t, &cube_batch(&scene.modalities[0], &cs, sizes)?);
                let g = constants(&mut t, &cube_batch(&scene.modalities[1], &cs, sizes)?);
                let phi1 = model.encode(&mut t, &p, 0, &e)?;
                let phi2 = model.encode(&mut t, &p, 1, &g)?;
                let phi_t = model.oaf.forward(&mut t, &p, phi1, phi2)?;
                if layer == Layer::Fused {
                    phi_t
                } else {
                    let enc = model.vit.encode(&mut t, &p, phi_t)?;
                    Vit::class_token(&mut t, enc.tokens)?
                }
            }
        };
        width = t.value(v).numel() / idx.len();
        data.extend_from_slice(t.data(v));
    }
    Ok((width, data))
}

/// `row,col,label,f0,…` with one line per sample.
pub fn features_csv(samples: &SampleSet, width: usize, data: &[f32]) -> String {
    let mut s = String::from("row,col,label");
    for j in 0..width {
        let _ = write!(s, ",f{j}");
    }
    s.push('\n');
    for (i, row) in data.chunks(width.max(1)).enumerate().take(samples.len()) {
        let (r, c) = samples.centers[i];
        let _ = write!(s, "{r},{c},{}", samples.labels[i]);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Pearson matrices between the channel means of `Φ_T¹` and `Φ_T²`
/// (`pair = phi`) and between `Z1` and `Z2` (`pair = z`), in long form.
/// Undefined entries (a zero-variance channel) are written as 0 with
/// `defined = 0`.
pub fn redundancy_csv(h: &HeadOutputs, d: usize, d_z: usize) -> String {
    let mut s = String::from("pair,i,j,pearson,defined\n");
    for (name, a, b, w) in [("phi", &h.phi1, &h.phi2, d), ("z", &h.z1, &h.z2, d_z)] {
        let c = correlation_matrix(a, b, h.n, w, w);
        for i in 0..w {
            for j in 0..w {
                let _ = writeln!(s, "{name},{i},{j},{},{}", c.matrix[i][j], u8::from(!c.undefined[i][j]));
            }
        }
    }
    s
}

/// Plain-text PGM (P2). `values` are gray levels in raster order; the
/// declared maximum is `max_level` (at least 1).
pub fn pgm(height: usize, width: usize, values: &[u32], max_level: u32) -> String {
    let max = max_level.max(1);
    let mut s = format!("P2\n{width} {height}\n{max}\n");
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Gray levels for a label map: the predicted class at labeled pixels, 0 at
/// unlabeled ones.
pub fn label_map(scene: &Scene, samples: &SampleSet, preds: &[usize]) -> Vec<u32> {
    let mut v = vec![0u32; scene.height() * scene.width()];
    for (&(r, c), &p) in samples.centers.iter().zip(preds) {
        v[r * scene.width() + c] = p as u32;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        assert_eq!(pgm(2, 3, &[0, 1, 2, 3, 0, 1], 3), "P2\n3 2\n3\n0 1 2\n3 0 1\n");
        assert_eq!(pgm(1, 2, &[0, 0], 0), "P2\n2 1\n1\n0 0\n");
    }

    #[test]
    fn layer_names() {
        assert_eq!("vit".parse::<Layer>().unwrap(), Layer::Vit);
        assert!("dec".parse::<Layer>().is_err());
    }
}
