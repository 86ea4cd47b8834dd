use mivit_autodiff::{Element, Tape, TensorError, Var, LOG_EPS};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::losses::{distill_term, iac_loss, reconstruction_loss, supervised_term};
use crate::model::Outputs;

/// Loss components; `total = (idf + re) + iac`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Components<V> {
    pub total: V,
    pub idf: V,
    pub re: V,
    pub iac: V,
}

fn named<V>(component: &str, r: Result<V>) -> Result<V> {
    r.map_err(|e| match e {
        Error::Tensor(TensorError::NonFinite { op }) => Error::NonFinite(format!("{component} loss ({op})")),
        other => other,
    })
}

/// `softmax(ln C / T)`, i.e. the distribution at temperature `T`.
fn temper<T: Element>(t: &mut Tape<T>, c: Var, temperature: f64) -> Result<Var> {
    if temperature == 1.0 {
        return Ok(c);
    }
    let l = t.log_clamp(c, LOG_EPS)?;
    let l = t.scale(l, 1.0 / temperature)?;
    Ok(t.softmax(l)?)
}

fn idf<T: Element>(t: &mut Tape<T>, out: &Outputs, y: &[usize], cfg: &TrainConfig) -> Result<Var> {
    let (shallow, fused) = supervised_term(t, out.c1, out.c2, out.c, y)?;
    let c1 = temper(t, out.c1, cfg.temperature)?;
    let c2 = temper(t, out.c2, cfg.temperature)?;
    let c = temper(t, out.c, cfg.temperature)?;
    let kl = distill_term(t, c1, c2, c, cfg.detach_teacher)?;
    let a = t.scale(shallow, cfg.lambda3)?;
    let b = t.scale(kl, cfg.lambda4)?;
    let s = t.add(a, fused)?;
    Ok(t.add(s, b)?)
}

/// The full objective in the order aggregation, distribution flow,
/// reconstruction.
pub fn total_loss<T: Element>(
    t: &mut Tape<T>,
    out: &Outputs,
    e: &[Var],
    g: &[Var],
    y: &[usize],
    cfg: &TrainConfig,
) -> Result<Components<Var>> {
    let iac = named("iac", iac_loss(t, out.z1, out.z2, out.z, cfg.lambda2))?;
    let idf = named("idf", idf(t, out, y, cfg))?;
    let re = named(
        "reconstruction",
        reconstruction_loss(t, [e, g], [&out.recon[0], &out.recon[1]], cfg.lambda1),
    )?;
    let s = named("total", t.add(idf, re).map_err(Error::from))?;
    let total = named("total", t.add(s, iac).map_err(Error::from))?;
    Ok(Components { total, idf, re, iac })
}
