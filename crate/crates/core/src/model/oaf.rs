//! Oriented attention fusion. For each modality a directional gate computed
//! from its own bottleneck features modulates the other modality's
//! bottleneck features, once along rows (`1×k`) and once along columns
//! (`k×1`). The four results are summed and passed through a balancing conv.

use mivit_autodiff::{Element, Tape, Var};

use super::layers::Conv;
use crate::error::{Error, Result};
use crate::params::{Bound, Builder};

#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub reduce: Conv,
    pub mid: Conv,
    pub expand: Conv,
}

impl Bottleneck {
    fn new(bl: &mut Builder, name: &str, d: usize, r: usize) -> Self {
        let mut s = bl.scope(name);
        Bottleneck {
            reduce: Conv::new(&mut s, "reduce", d, r, 1, 1),
            mid: Conv::new(&mut s, "mid", r, r, 3, 3),
            expand: Conv::new(&mut s, "expand", r, d, 1, 1),
        }
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let x = self.reduce.relu(t, p, x)?;
        let x = self.mid.relu(t, p, x)?;
        self.expand.forward(t, p, x)
    }
}

/// Row (`1×k`) and column (`k×1`) convolutions.
#[derive(Clone, Debug)]
pub struct Directional {
    pub horizontal: Conv,
    pub vertical: Conv,
}

impl Directional {
    fn new(bl: &mut Builder, name: &str, d: usize, k: usize) -> Self {
        let mut s = bl.scope(name);
        Directional {
            horizontal: Conv::new(&mut s, "h", d, d, 1, k),
            vertical: Conv::new(&mut s, "v", d, d, k, 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Oaf {
    /// `b[0]`, `b[1]` serve the gates driven by modality 1; `b[2]`, `b[3]`
    /// those driven by modality 2.
    pub b: [Bottleneck; 4],
    pub e: [Directional; 2],
    pub t: Conv,
}

/// `(H¹, V¹, H², V²)` attentive maps.
pub type Attentive = [Var; 4];

impl Oaf {
    pub fn new(bl: &mut Builder, d: usize, r: usize, k: usize) -> Self {
        Oaf {
            b: [
                Bottleneck::new(bl, "b1", d, r),
                Bottleneck::new(bl, "b2", d, r),
                Bottleneck::new(bl, "b3", d, r),
                Bottleneck::new(bl, "b4", d, r),
            ],
            e: [Directional::new(bl, "e1", d, k), Directional::new(bl, "e2", d, k)],
            t: Conv::new(bl, "t", d, d, 3, 3),
        }
    }

    /// `sigmoid(E(own)) ⊙ other + own` for one direction.
    fn gate<T: Element>(t: &mut Tape<T>, p: &Bound, e: &Conv, own: Var, other: Var) -> Result<Var> {
        let g = e.forward(t, p, own)?;
        let g = t.sigmoid(g)?;
        let m = t.mul(g, other)?;
        Ok(t.add(m, own)?)
    }

    pub fn oriented_attention<T: Element>(&self, t: &mut Tape<T>, p: &Bound, phi1: Var, phi2: Var) -> Result<Attentive> {
        if t.shape(phi1) != t.shape(phi2) {
            return Err(Error::Tensor(mivit_autodiff::TensorError::Shape {
                op: "oriented_attention",
                detail: format!("{:?} vs {:?}", t.shape(phi1), t.shape(phi2)),
            }));
        }
        let own1 = self.b[0].forward(t, p, phi1)?;
        let oth1 = self.b[1].forward(t, p, phi2)?;
        let own2 = self.b[2].forward(t, p, phi2)?;
        let oth2 = self.b[3].forward(t, p, phi1)?;
        Ok([
            Self::gate(t, p, &self.e[0].horizontal, own1, oth1)?,
            Self::gate(t, p, &self.e[0].vertical, own1, oth1)?,
            Self::gate(t, p, &self.e[1].horizontal, own2, oth2)?,
            Self::gate(t, p, &self.e[1].vertical, own2, oth2)?,
        ])
    }

    /// `T(H¹ + V¹ + H² + V²)` with `T` a conv followed by ReLU.
    pub fn fuse<T: Element>(&self, t: &mut Tape<T>, p: &Bound, maps: &Attentive) -> Result<Var> {
        let mut s = maps[0];
        for &m in &maps[1..] {
            s = t.add(s, m)?;
        }
        self.t.relu(t, p, s)
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, phi1: Var, phi2: Var) -> Result<Var> {
        let maps = self.oriented_attention(t, p, phi1, phi2)?;
        self.fuse(t, p, &maps)
    }
}
