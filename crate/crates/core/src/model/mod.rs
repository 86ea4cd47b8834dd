//! The two-modality fusion classifier.
//!
//! Parameter groups: `enc.m1`, `enc.m2`, `oaf`, `vit`, `cls.shallow1`,
//! `cls.shallow2`, `cls.fused`, `iac.mappers`.

mod config;
mod encoder;
mod heads;
mod layers;
mod oaf;
mod vit;

pub use config::ModelConfig;
pub use encoder::Encoder;
pub use heads::{global_avg_pool, JointClassifier, Mapper, ShallowClassifier};
pub use layers::{Block, Conv, LayerNorm, Linear};
pub use oaf::{Attentive, Bottleneck, Directional, Oaf};
pub use vit::{Encoded, Vit};

use mivit_autodiff::{Element, Tape, Var};

use crate::error::Result;
use crate::params::{seeded_rng, Bound, Builder, ParamStore};

pub const GROUPS: [&str; 8] = [
    "enc.m1",
    "enc.m2",
    "oaf",
    "vit",
    "cls.shallow1",
    "cls.shallow2",
    "cls.fused",
    "iac.mappers",
];

#[derive(Clone, Debug)]
pub struct Mivit {
    pub cfg: ModelConfig,
    pub encoders: [Encoder; 2],
    pub oaf: Oaf,
    pub vit: Vit,
    pub fused: JointClassifier,
    pub shallow: [ShallowClassifier; 2],
    /// Mappers for `Φ_T`, `Φ_T¹`, `Φ_T²`, in that order.
    pub mappers: [Mapper; 3],
}

/// Every intermediate the training objective needs.
pub struct Outputs {
    pub phi1: Var,
    pub phi2: Var,
    pub phi_t: Var,
    pub tokens: Var,
    pub attention: Vec<Var>,
    pub c1: Var,
    pub c2: Var,
    pub c: Var,
    pub z: Var,
    pub z1: Var,
    pub z2: Var,
    pub recon: [Vec<Var>; 2],
}

impl Mivit {
    /// Builds the layout and a freshly initialised parameter store.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<f32>)> {
        cfg.validate()?;
        let mut store = ParamStore::default();
        let mut rng = seeded_rng(seed, 1);
        let mut bl = Builder::new(&mut store, &mut rng);
        let sizes = &cfg.cube_sizes;
        let encoders = [0, 1].map(|m| {
            Encoder::new(&mut bl.scope(GROUPS[m]), cfg.bands[m], cfg.d, sizes, cfg.s0)
        });
        let oaf = Oaf::new(&mut bl.scope("oaf"), cfg.d, cfg.bottleneck_width(), cfg.k);
        let vit = Vit::new(&mut bl.scope("vit"), cfg);
        let shallow = [4, 5].map(|g| {
            ShallowClassifier::new(
                &mut bl.scope(GROUPS[g]),
                cfg.d,
                cfg.shallow_width,
                cfg.shallow_depth,
                cfg.s0,
                cfg.classes,
            )
        });
        let fused = JointClassifier::new(&mut bl.scope("cls.fused"), cfg.d, cfg.d_model, cfg.classes);
        let mut mb = bl.scope("iac.mappers");
        let mappers = ["z", "z1", "z2"].map(|n| Mapper::new(&mut mb.scope(n), cfg.d, cfg.mapper_width, cfg.s0, cfg.d_z()));
        Ok((
            Mivit { cfg: cfg.clone(), encoders, oaf, vit, fused, shallow, mappers },
            store,
        ))
    }

    /// Separated features `Φ_T^m` for modality `m` (0 or 1).
    pub fn encode<T: Element>(&self, t: &mut Tape<T>, p: &Bound, m: usize, cubes: &[Var]) -> Result<Var> {
        self.encoders[m].forward(t, p, cubes)
    }

    /// Fused distribution `C` from both modalities' cubes.
    pub fn predict_fused<T: Element>(&self, t: &mut Tape<T>, p: &Bound, e: &[Var], g: &[Var]) -> Result<Var> {
        let phi1 = self.encode(t, p, 0, e)?;
        let phi2 = self.encode(t, p, 1, g)?;
        let phi_t = self.oaf.forward(t, p, phi1, phi2)?;
        let enc = self.vit.encode(t, p, phi_t)?;
        let cls = Vit::class_token(t, enc.tokens)?;
        self.fused.forward(t, p, phi_t, cls)
    }

    /// Single-modality distribution `C_m`; touches only modality `m`'s
    /// encoder and shallow classifier.
    pub fn predict_single<T: Element>(&self, t: &mut Tape<T>, p: &Bound, m: usize, cubes: &[Var]) -> Result<Var> {
        let phi = self.encode(t, p, m, cubes)?;
        self.shallow[m].forward(t, p, phi)
    }

    /// Full forward pass over both modalities.
    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, e: &[Var], g: &[Var]) -> Result<Outputs> {
        self.forward_with(t, p, e, g, true)
    }

    /// Forward pass; the decoder runs only when `reconstruct` is set
    /// (otherwise `recon` is empty).
    pub fn forward_with<T: Element>(
        &self,
        t: &mut Tape<T>,
        p: &Bound,
        e: &[Var],
        g: &[Var],
        reconstruct: bool,
    ) -> Result<Outputs> {
        let phi1 = self.encode(t, p, 0, e)?;
        let phi2 = self.encode(t, p, 1, g)?;
        let phi_t = self.oaf.forward(t, p, phi1, phi2)?;
        let enc = self.vit.encode(t, p, phi_t)?;
        let cls = Vit::class_token(t, enc.tokens)?;
        let c1 = self.shallow[0].forward(t, p, phi1)?;
        let c2 = self.shallow[1].forward(t, p, phi2)?;
        let c = self.fused.forward(t, p, phi_t, cls)?;
        let z = self.mappers[0].forward(t, p, phi_t)?;
        let z1 = self.mappers[1].forward(t, p, phi1)?;
        let z2 = self.mappers[2].forward(t, p, phi2)?;
        let recon = if reconstruct { self.vit.decode(t, p, enc.tokens)? } else { [Vec::new(), Vec::new()] };
        Ok(Outputs { phi1, phi2, phi_t, tokens: enc.tokens, attention: enc.attention, c1, c2, c, z, z1, z2, recon })
    }
}
