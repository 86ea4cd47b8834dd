use mivit_autodiff::nn::{linear, AttentionVars};
use mivit_autodiff::{Element, Tape, Var};

use crate::error::Result;
use crate::params::{Bound, Builder, ParamId};

#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub pad: (usize, usize),
}

impl Conv {
    /// Stride-1 convolution; padding keeps the spatial extent for odd kernels.
    /// He-uniform weights, zero bias.
    pub fn new(bl: &mut Builder, name: &str, cin: usize, cout: usize, kh: usize, kw: usize) -> Self {
        let bound = (6.0 / (cin * kh * kw) as f32).sqrt();
        let mut s = bl.scope(name);
        Conv {
            w: s.uniform("w", &[cout, cin, kh, kw], bound),
            b: s.constant("b", &[cout], 0.0),
            pad: (kh / 2, kw / 2),
        }
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        Ok(t.conv2d(x, p[self.w], Some(p[self.b]), 1, self.pad)?)
    }

    pub fn relu<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = self.forward(t, p, x)?;
        Ok(t.relu(y)?)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(bl: &mut Builder, name: &str, din: usize, dout: usize) -> Self {
        let bound = 1.0 / (din as f32).sqrt();
        let mut s = bl.scope(name);
        Linear {
            w: s.uniform("w", &[din, dout], bound),
            b: s.uniform("b", &[dout], bound),
        }
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        Ok(linear(t, x, p[self.w], Some(p[self.b]))?)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub g: ParamId,
    pub b: ParamId,
}

impl LayerNorm {
    pub fn new(bl: &mut Builder, name: &str, d: usize) -> Self {
        let mut s = bl.scope(name);
        LayerNorm {
            g: s.constant("g", &[d], 1.0),
            b: s.constant("b", &[d], 0.0),
        }
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        Ok(t.layer_norm(x, p[self.g], p[self.b], 1e-5)?)
    }
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `h + mlp(ln(h))`.
#[derive(Clone, Debug)]
pub struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    heads: usize,
}

impl Block {
    pub fn new(bl: &mut Builder, name: &str, d: usize, heads: usize, mlp_ratio: usize) -> Self {
        let mut s = bl.scope(name);
        Block {
            ln1: LayerNorm::new(&mut s, "ln1", d),
            q: Linear::new(&mut s, "q", d, d),
            k: Linear::new(&mut s, "k", d, d),
            v: Linear::new(&mut s, "v", d, d),
            o: Linear::new(&mut s, "o", d, d),
            ln2: LayerNorm::new(&mut s, "ln2", d),
            fc1: Linear::new(&mut s, "fc1", d, d * mlp_ratio),
            fc2: Linear::new(&mut s, "fc2", d * mlp_ratio, d),
            heads,
        }
    }

    /// Returns the block output and its attention weights `[B·H, T, T]`.
    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<(Var, Var)> {
        let vars = AttentionVars {
            wq: p[self.q.w],
            bq: p[self.q.b],
            wk: p[self.k.w],
            bk: p[self.k.b],
            wv: p[self.v.w],
            bv: p[self.v.b],
            wo: p[self.o.w],
            bo: p[self.o.b],
        };
        let n = self.ln1.forward(t, p, x)?;
        let (a, attn) = mivit_autodiff::nn::multi_head_self_attention(t, n, &vars, self.heads)?;
        let h = t.add(x, a)?;
        let n = self.ln2.forward(t, p, h)?;
        let m = self.fc1.forward(t, p, n)?;
        let m = t.gelu(m)?;
        let m = self.fc2.forward(t, p, m)?;
        Ok((t.add(h, m)?, attn))
    }
}
