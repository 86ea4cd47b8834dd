//! Transformer encoder over the fused map (one token per spatial position
//! plus a class token) and a mirrored decoder that reconstructs every input
//! cube from the mean-pooled decoder tokens.

use mivit_autodiff::{Element, Tape, Var};

use super::config::ModelConfig;
use super::layers::{Block, LayerNorm, Linear};
use crate::error::Result;
use crate::params::{Bound, Builder, ParamId};

#[derive(Clone, Debug)]
pub struct Vit {
    pub embed: Linear,
    pub cls: ParamId,
    pub pos: ParamId,
    pub enc: Vec<Block>,
    pub enc_norm: LayerNorm,
    pub dec: Vec<Block>,
    pub dec_norm: LayerNorm,
    /// Reconstruction heads indexed `[modality][scale]`.
    pub recon: [Vec<Linear>; 2],
    sizes: Vec<usize>,
    bands: [usize; 2],
}

/// Encoder output tokens `[B, T, d_model]` (class token first) and the
/// attention weights of every block.
pub struct Encoded {
    pub tokens: Var,
    pub attention: Vec<Var>,
}

impl Vit {
    pub fn new(bl: &mut Builder, cfg: &ModelConfig) -> Self {
        let dm = cfg.d_model;
        let embed = Linear::new(bl, "embed", cfg.d, dm);
        let cls = bl.normal("cls", &[1, dm], 0.02);
        let pos = bl.normal("pos", &[cfg.tokens(), dm], 0.02);
        let enc = (0..cfg.layers)
            .map(|i| Block::new(bl, &format!("enc{i}"), dm, cfg.heads, cfg.mlp_ratio))
            .collect();
        let enc_norm = LayerNorm::new(bl, "enc_norm", dm);
        let dec = (0..cfg.layers)
            .map(|i| Block::new(bl, &format!("dec{i}"), dm, cfg.heads, cfg.mlp_ratio))
            .collect();
        let dec_norm = LayerNorm::new(bl, "dec_norm", dm);
        let recon = [0, 1].map(|m| {
            cfg.cube_sizes
                .iter()
                .enumerate()
                .map(|(k, &s)| Linear::new(bl, &format!("dec_head.m{}.s{k}", m + 1), dm, cfg.bands[m] * s * s))
                .collect()
        });
        Vit { embed, cls, pos, enc, enc_norm, dec, dec_norm, recon, sizes: cfg.cube_sizes.clone(), bands: cfg.bands }
    }

    /// `phi_t: [B, d, s0, s0]` to tokens `[B, s0²+1, d_model]`.
    pub fn encode<T: Element>(&self, t: &mut Tape<T>, p: &Bound, phi_t: Var) -> Result<Encoded> {
        let s = t.shape(phi_t).to_vec();
        let (b, d, n) = (s[0], s[1], s[2] * s[3]);
        let x = t.reshape(phi_t, &[b, d, n])?;
        let x = t.permute(x, &[0, 2, 1])?;
        let x = self.embed.forward(t, p, x)?;
        let cls = t.broadcast_leading(p[self.cls], b)?;
        let x = t.concat(&[cls, x], 1)?;
        let mut x = t.add_suffix(x, p[self.pos])?;
        let mut attention = Vec::with_capacity(self.enc.len());
        for blk in &self.enc {
            let (y, a) = blk.forward(t, p, x)?;
            x = y;
            attention.push(a);
        }
        let tokens = self.enc_norm.forward(t, p, x)?;
        Ok(Encoded { tokens, attention })
    }

    /// Class token of encoder output, `[B, d_model]`.
    pub fn class_token<T: Element>(t: &mut Tape<T>, tokens: Var) -> Result<Var> {
        let s = t.shape(tokens).to_vec();
        let c = t.narrow(tokens, 1, 0, 1)?;
        Ok(t.reshape(c, &[s[0], s[2]])?)
    }

    /// Reconstructions `[modality][scale]`, each `[B, bands, s_k, s_k]`.
    pub fn decode<T: Element>(&self, t: &mut Tape<T>, p: &Bound, tokens: Var) -> Result<[Vec<Var>; 2]> {
        let mut x = tokens;
        for blk in &self.dec {
            x = blk.forward(t, p, x)?.0;
        }
        let x = self.dec_norm.forward(t, p, x)?;
        let s = t.shape(x).to_vec();
        let x = t.permute(x, &[0, 2, 1])?;
        let pooled = t.mean_last(x)?;
        let mut out: [Vec<Var>; 2] = [Vec::new(), Vec::new()];
        for m in 0..2 {
            for (head, &size) in self.recon[m].iter().zip(&self.sizes) {
                let r = head.forward(t, p, pooled)?;
                out[m].push(t.reshape(r, &[s[0], self.bands[m], size, size])?);
            }
        }
        Ok(out)
    }
}
