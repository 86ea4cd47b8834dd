use mivit_autodiff::{Tape, Tensor};

use crate::error::{Error, Result};
use crate::model::Mivit;
use crate::params::{group_of, ParamStore};

/// An inference subgraph whose size is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Path {
    Shallow1,
    Shallow2,
    Fused,
}

impl std::str::FromStr for Path {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shallow1" => Ok(Path::Shallow1),
            "shallow2" => Ok(Path::Shallow2),
            "fused" => Ok(Path::Fused),
            _ => Err(Error::Config(format!("unknown path {s:?} (expected shallow1, shallow2 or fused)"))),
        }
    }
}

impl Path {
    /// Whether a parameter takes part in this path's forward pass. The fused
    /// path is encoders, fusion, transformer encoder and joint classifier;
    /// the decoder only serves the training objective.
    pub fn uses(self, name: &str) -> bool {
        match (self, group_of(name)) {
            (Path::Shallow1, g) => g == "enc.m1" || g == "cls.shallow1",
            (Path::Shallow2, g) => g == "enc.m2" || g == "cls.shallow2",
            (Path::Fused, "vit") => !name.starts_with("vit/dec"),
            (Path::Fused, g) => matches!(g, "enc.m1" | "enc.m2" | "oaf" | "cls.fused"),
        }
    }
}

/// `(parameter count, multiply-accumulates)` of one forward pass at batch 1
/// with the configured cube sizes.
pub fn count_params_flops(model: &Mivit, params: &ParamStore<f32>, path: Path) -> Result<(usize, u64)> {
    let count = params.count(|n| path.uses(n));
    let mut t = Tape::<f32>::new();
    let p = params.bind_frozen(&mut t);
    let before = t.macs();
    let cubes = |t: &mut Tape<f32>, m: usize| -> Vec<_> {
        model
            .cfg
            .cube_sizes
            .iter()
            .map(|&s| t.constant(Tensor::zeros(&[1, model.cfg.bands[m], s, s])))
            .collect()
    };
    match path {
        Path::Shallow1 | Path::Shallow2 => {
            let m = if path == Path::Shallow1 { 0 } else { 1 };
            let x = cubes(&mut t, m);
            model.predict_single(&mut t, &p, m, &x)?;
        }
        Path::Fused => {
            let e = cubes(&mut t, 0);
            let g = cubes(&mut t, 1);
            model.predict_fused(&mut t, &p, &e, &g)?;
        }
    }
    Ok((count, t.macs() - before))
}
