//! Classification heads and distribution mappers.

use mivit_autodiff::{Element, Tape, Var};

use super::layers::{Conv, Linear};
use crate::error::Result;
use crate::params::{Bound, Builder};

/// Global average pooling of `[B, C, H, W]` to `[B, C]`.
pub fn global_avg_pool<T: Element>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = t.shape(x).to_vec();
    let x = t.reshape(x, &[s[0], s[1], s[2] * s[3]])?;
    Ok(t.mean_last(x)?)
}

fn flatten<T: Element>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = t.shape(x).to_vec();
    Ok(t.reshape(x, &[s[0], s[1..].iter().product()])?)
}

/// `softmax(W [gap(Φ_T) ; cls(Φ_V)] + b)`.
#[derive(Clone, Debug)]
pub struct JointClassifier {
    pub fc: Linear,
}

impl JointClassifier {
    pub fn new(bl: &mut Builder, d: usize, d_model: usize, classes: usize) -> Self {
        JointClassifier { fc: Linear::new(bl, "fc", d + d_model, classes) }
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, phi_t: Var, cls_token: Var) -> Result<Var> {
        let g = global_avg_pool(t, phi_t)?;
        let x = t.concat(&[g, cls_token], 1)?;
        let x = self.fc.forward(t, p, x)?;
        Ok(t.softmax(x)?)
    }
}

/// `depth × (conv 3×3 + ReLU + 2×2 max-pool)` followed by one linear layer.
#[derive(Clone, Debug)]
pub struct ShallowClassifier {
    pub convs: Vec<Conv>,
    pub fc: Linear,
}

impl ShallowClassifier {
    pub fn new(bl: &mut Builder, d: usize, width: usize, depth: usize, s0: usize, classes: usize) -> Self {
        let mut cin = d;
        let mut side = s0;
        let mut convs = Vec::with_capacity(depth);
        for i in 0..depth {
            convs.push(Conv::new(bl, &format!("conv{i}"), cin, width, 3, 3));
            cin = width;
            side = side.div_ceil(2);
        }
        let fc = Linear::new(bl, "fc", cin * side * side, classes);
        ShallowClassifier { convs, fc }
    }

    pub fn logits<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let mut x = x;
        for conv in &self.convs {
            x = conv.relu(t, p, x)?;
            x = t.max_pool2d(x, 2, 2)?;
        }
        let x = flatten(t, x)?;
        self.fc.forward(t, p, x)
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let l = self.logits(t, p, x)?;
        Ok(t.softmax(l)?)
    }
}

/// Conv 3×3 + ReLU, flatten, linear, softmax: a feature map to a distribution.
#[derive(Clone, Debug)]
pub struct Mapper {
    pub conv: Conv,
    pub fc: Linear,
}

impl Mapper {
    pub fn new(bl: &mut Builder, d: usize, width: usize, s0: usize, d_z: usize) -> Self {
        Mapper {
            conv: Conv::new(bl, "conv", d, width, 3, 3),
            fc: Linear::new(bl, "fc", width * s0 * s0, d_z),
        }
    }

    pub fn forward<T: Element>(&self, t: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let x = self.conv.relu(t, p, x)?;
        let x = flatten(t, x)?;
        let x = self.fc.forward(t, p, x)?;
        Ok(t.softmax(x)?)
    }
}
