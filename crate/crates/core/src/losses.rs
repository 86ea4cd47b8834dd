//! Training objectives.
//!
//! Mutual information between two batches of per-sample distributions uses
//! a soft contingency table `P = (1/B) Σ_b a_b ⊗ b_b`, whose row and column
//! sums are the marginals `p` and `q`.

use mivit_autodiff::{cross_entropy, kl_divergence, Element, Tape, Tensor, TensorError, Var, LOG_EPS};

use crate::error::{Error, Result};

fn shape_error(op: &'static str, detail: String) -> Error {
    Error::Tensor(TensorError::Shape { op, detail })
}

/// Batch-averaged outer product of `a: [B, da]` and `b: [B, db]`.
pub fn joint_contingency<T: Element>(t: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    let (sa, sb) = (t.shape(a).to_vec(), t.shape(b).to_vec());
    if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
        return Err(shape_error("joint_contingency", format!("batches {sa:?} and {sb:?}")));
    }
    if sa[0] < 2 {
        return Err(shape_error("joint_contingency", format!("batch of {} is below 2", sa[0])));
    }
    let at = t.permute(a, &[1, 0])?;
    let p = t.matmul(at, b)?;
    Ok(t.scale(p, 1.0 / sa[0] as f64)?)
}

/// Row and column sums of a table.
pub fn marginals<T: Element>(t: &mut Tape<T>, table: Var) -> Result<(Var, Var)> {
    let p = t.sum_last(table)?;
    let tt = t.permute(table, &[1, 0])?;
    let q = t.sum_last(tt)?;
    Ok((p, q))
}

/// `−Σ x ln max(x, ε)` over every element.
fn plogp<T: Element>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let l = t.log_clamp(x, LOG_EPS)?;
    let m = t.mul(x, l)?;
    let s = t.sum(m)?;
    Ok(t.scale(s, -1.0)?)
}

/// `H(p) + H(q) − H(P)`.
pub fn mi_direct<T: Element>(t: &mut Tape<T>, table: Var) -> Result<Var> {
    let (p, q) = marginals(t, table)?;
    let hp = plogp(t, p)?;
    let hq = plogp(t, q)?;
    let hj = plogp(t, table)?;
    let s = t.add(hp, hq)?;
    Ok(t.sub(s, hj)?)
}

/// `H_q(p) + H_p(q) − H(P) − KL(p‖q) − KL(q‖p)`, term by term.
pub fn mi_decomposed<T: Element>(t: &mut Tape<T>, table: Var) -> Result<Var> {
    let s = t.shape(table).to_vec();
    if s[0] != s[1] {
        return Err(shape_error("mi_decomposed", format!("table {s:?} is not square")));
    }
    let (p, q) = marginals(t, table)?;
    let ce_pq = cross_entropy(t, p, q)?;
    let ce_qp = cross_entropy(t, q, p)?;
    let hj = plogp(t, table)?;
    let kl_pq = kl_divergence(t, p, q)?;
    let kl_qp = kl_divergence(t, q, p)?;
    let mut acc = t.add(ce_pq, ce_qp)?;
    for term in [hj, kl_pq, kl_qp] {
        acc = t.sub(acc, term)?;
    }
    Ok(acc)
}

/// `MI(A, B)` from two batches of distributions.
pub fn batch_mi<T: Element>(t: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    let table = joint_contingency(t, a, b)?;
    mi_direct(t, table)
}

/// `λ2 · (MI(Z1, Z2) − MI(Z, Z1) − MI(Z, Z2))`.
pub fn iac_loss<T: Element>(t: &mut Tape<T>, z1: Var, z2: Var, z: Var, lambda2: f64) -> Result<Var> {
    let m12 = batch_mi(t, z1, z2)?;
    let m01 = batch_mi(t, z, z1)?;
    let m02 = batch_mi(t, z, z2)?;
    let d = t.sub(m12, m01)?;
    let d = t.sub(d, m02)?;
    Ok(t.scale(d, lambda2)?)
}

fn one_hot<T: Element>(t: &mut Tape<T>, y: &[usize], classes: usize) -> Result<Var> {
    if let Some(&bad) = y.iter().find(|&&v| v >= classes) {
        return Err(Error::Label(format!("label {bad} is outside 0..{classes}")));
    }
    let mut data = vec![T::zero(); y.len() * classes];
    for (i, &v) in y.iter().enumerate() {
        data[i * classes + v] = T::one();
    }
    Ok(t.constant(Tensor::new(&[y.len(), classes], data)?))
}

/// Batch mean of `CE(onehot(y) ‖ c)`.
pub fn label_ce<T: Element>(t: &mut Tape<T>, c: Var, y: &[usize]) -> Result<Var> {
    let s = t.shape(c).to_vec();
    if s.len() != 2 || s[0] != y.len() {
        return Err(shape_error("label_ce", format!("outputs {s:?} for {} labels", y.len())));
    }
    let oh = one_hot(t, y, s[1])?;
    let ce = cross_entropy(t, oh, c)?;
    Ok(t.mean(ce)?)
}

/// `(CE(y‖C1) + CE(y‖C2), CE(y‖C))`, batch means.
pub fn supervised_term<T: Element>(t: &mut Tape<T>, c1: Var, c2: Var, c: Var, y: &[usize]) -> Result<(Var, Var)> {
    let a = label_ce(t, c1, y)?;
    let b = label_ce(t, c2, y)?;
    let shallow = t.add(a, b)?;
    let fused = label_ce(t, c, y)?;
    Ok((shallow, fused))
}

/// Batch mean of `KL(C1‖C) + KL(C2‖C)`. With `detach_teacher`, no gradient
/// reaches `C` through this term.
pub fn distill_term<T: Element>(t: &mut Tape<T>, c1: Var, c2: Var, c: Var, detach_teacher: bool) -> Result<Var> {
    let teacher = if detach_teacher { t.detach(c) } else { c };
    let k1 = kl_divergence(t, c1, teacher)?;
    let k2 = kl_divergence(t, c2, teacher)?;
    let k = t.add(k1, k2)?;
    Ok(t.mean(k)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdfWeights {
    pub lambda3: f64,
    pub lambda4: f64,
    pub detach_teacher: bool,
}

/// `λ3·(CE1 + CE2) + CE + λ4·(KL(C1‖C) + KL(C2‖C))`.
pub fn idf_loss<T: Element>(t: &mut Tape<T>, c1: Var, c2: Var, c: Var, y: &[usize], w: IdfWeights) -> Result<Var> {
    let (shallow, fused) = supervised_term(t, c1, c2, c, y)?;
    let kl = distill_term(t, c1, c2, c, w.detach_teacher)?;
    let a = t.scale(shallow, w.lambda3)?;
    let b = t.scale(kl, w.lambda4)?;
    let s = t.add(a, fused)?;
    Ok(t.add(s, b)?)
}

/// `λ1 · (1/N) Σ_k [‖e_k − R_e,k‖² + ‖g_k − R_g,k‖²]`, squared residuals
/// summed over every cube entry and averaged over the batch.
pub fn reconstruction_loss<T: Element>(
    t: &mut Tape<T>,
    inputs: [&[Var]; 2],
    recon: [&[Var]; 2],
    lambda1: f64,
) -> Result<Var> {
    let n = inputs[0].len();
    if n == 0 || inputs[1].len() != n || recon[0].len() != n || recon[1].len() != n {
        return Err(shape_error("reconstruction_loss", "scale counts differ".into()));
    }
    let batch = t.shape(inputs[0][0])[0];
    let mut acc: Option<Var> = None;
    for m in 0..2 {
        for k in 0..n {
            let d = t.sub(inputs[m][k], recon[m][k])?;
            let sq = t.square(d)?;
            let s = t.sum(sq)?;
            acc = Some(match acc {
                Some(a) => t.add(a, s)?,
                None => s,
            });
        }
    }
    Ok(t.scale(acc.unwrap(), lambda1 / (n * batch) as f64)?)
}
