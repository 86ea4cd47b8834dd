//! Layers composed from tape primitives.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tape::{Tape, Var};

/// `x · w + b` over the trailing axis of `x` (`w` is `[in, out]`).
pub fn linear<T: Element>(tape: &mut Tape<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    let ws = tape.shape(w).to_vec();
    let Some((&k, lead)) = xs.split_last() else {
        return shape_err("linear", "scalar input");
    };
    if ws.len() != 2 || ws[0] != k {
        return shape_err("linear", format!("input {xs:?} vs weight {ws:?}"));
    }
    let rows = lead.iter().product();
    let flat = tape.reshape(x, &[rows, k])?;
    let mut y = tape.matmul(flat, w)?;
    if let Some(b) = b {
        y = tape.add_suffix(y, b)?;
    }
    let mut out = lead.to_vec();
    out.push(ws[1]);
    tape.reshape(y, &out)
}

/// Mean squared error over all elements.
pub fn mse<T: Element>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d)?;
    tape.mean(sq)
}

/// Projection weights of one multi-head self-attention block (`[d, d]` each).
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product self-attention over `x: [B,T,D]` with `heads` heads.
/// Returns the block output `[B,T,D]` and the attention weights `[B·H,T,T]`.
pub fn multi_head_self_attention<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    p: &AttentionVars,
    heads: usize,
) -> Result<(Var, Var)> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 {
        return shape_err("attention", format!("input must be [B,T,D], got {s:?}"));
    }
    let (b, t, d) = (s[0], s[1], s[2]);
    if heads == 0 || d % heads != 0 {
        return shape_err("attention", format!("{heads} heads do not divide width {d}"));
    }
    let dk = d / heads;
    let split = |tape: &mut Tape<T>, v: Var, axes: &[usize], tail: [usize; 2]| -> Result<Var> {
        let v = tape.reshape(v, &[b, t, heads, dk])?;
        let v = tape.permute(v, axes)?;
        tape.reshape(v, &[b * heads, tail[0], tail[1]])
    };
    let q = linear(tape, x, p.wq, Some(p.bq))?;
    let k = linear(tape, x, p.wk, Some(p.bk))?;
    let v = linear(tape, x, p.wv, Some(p.bv))?;
    let q = split(tape, q, &[0, 2, 1, 3], [t, dk])?;
    let kt = split(tape, k, &[0, 2, 3, 1], [dk, t])?;
    let v = split(tape, v, &[0, 2, 1, 3], [t, dk])?;
    let scores = tape.bmm(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt())?;
    let attn = tape.softmax(scores)?;
    let ctx = tape.bmm(attn, v)?;
    let ctx = tape.reshape(ctx, &[b, heads, t, dk])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[b, t, d])?;
    let out = linear(tape, ctx, p.wo, Some(p.bo))?;
    Ok((out, attn))
}
