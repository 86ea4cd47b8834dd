//! Per-modality multi-scale encoder. One branch stack is shared by every
//! scale; each scale has its own embedding that pools to `s0 × s0`; the
//! scales are then combined with learnable weights.

use mivit_autodiff::{Element, Tape, Var};

use super::layers::Conv;
use crate::error::{Error, Result};
use crate::params::{Bound, Builder, ParamId};

#[derive(Clone, Debug)]
pub struct Encoder {
    pub branch: Vec<Conv>,
    pub embed: Vec<Conv>,
    pub alpha: ParamId,
    sizes: Vec<usize>,
    s0: usize,
}

impl Encoder {
    pub fn new(bl: &mut Builder, bands: usize, d: usize, sizes: &[usize], s0: usize) -> Self {
        let branch = vec![
            Conv::new(bl, "branch0", bands, d, 3, 3),
            Conv::new(bl, "branch1", d, d, 3, 3),
        ];
        let embed = (0..sizes.len()).map(|k| Conv::new(bl, &format!("embed{k}"), d, d, 3, 3)).collect();
        let n = sizes.len();
        let alpha = bl.constant("alpha", &[n], 1.0 / n as f32);
        Encoder { branch, embed, alpha, sizes: sizes.to_vec(), s0 }
    }

    fn check_count(&self, n: usize) -> Result<()> {
        if n != self.sizes.len() {
            return Err(Error::Config(format!(
                "encoder expects {} cubes, got {n}",
                self.sizes.len()
            )));
        }
        Ok(())
    }

    /// Shared branch applied to each scale's cube `[B, b, s_k, s_k]`.
    pub fn encode_branch<T: Element>(&self, t: &mut Tape<T>, p: &Bound, cubes: &[Var]) -> Result<Vec<Var>> {
        self.check_count(cubes.len())?;
        cubes
            .iter()
            .map(|&c| {
                let mut x = c;
                for conv in &self.branch {
                    x = conv.relu(t, p, x)?;
                }
                Ok(x)
            })
            .collect()
    }

    /// Per-scale embedding to `[B, d, s0, s0]`.
    pub fn embed_align<T: Element>(&self, t: &mut Tape<T>, p: &Bound, feats: &[Var]) -> Result<Vec<Var>> {
        self.check_count(feats.len())?;
        feats
            .iter()
            .zip(&self.embed)
            .enumerate()
            .map(|(k, (&f, conv))| {
                let s = t.shape(f).to_vec();
                if s[2] < self.s0 || s[3] < self.s0 {
                    return Err(Error::Config(format!(
                        "scale {} has extent {}x{}, below s0 = {}",
                        k + 1,
                        s[2],
                        s[3],
                        self.s0
                    )));
                }
                let x = conv.relu(t, p, f)?;
                Ok(t.adaptive_max_pool2d(x, self.s0, self.s0)?)
            })
            .collect()
    }

    /// `Σ_k α_k · feats[k]`.
    pub fn fuse_scales<T: Element>(&self, t: &mut Tape<T>, p: &Bound, feats: &[Var]) -> Result<Var> {
        self.check_count(feats.len())?;
        Ok(t.weighted_sum(feats, p[self.alpha])?)
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, cubes: &[Var]) -> Result<Var> {
        let f = self.encode_branch(t, p, cubes)?;
        let f = self.embed_align(t, p, &f)?;
        self.fuse_scales(t, p, &f)
    }
}
