//! Information measures between categorical distributions stored along the
//! trailing axis. All logarithms are natural and clamped at [`LOG_EPS`].

use crate::element::Element;
use crate::error::{shape_err, Result, TensorError};
use crate::tape::{Tape, Var};
use crate::LOG_EPS;

const SIMPLEX_TOL: f64 = 1e-5;

fn check_simplex<T: Element>(tape: &Tape<T>, op: &'static str, v: Var) -> Result<()> {
    let Some(&d) = tape.shape(v).last() else {
        return shape_err(op, "distribution must have a trailing axis");
    };
    for row in tape.data(v).chunks(d) {
        let s: f64 = row.iter().map(|x| x.f64()).sum();
        if (s - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|x| x.f64() < 0.0) {
            return Err(TensorError::Contract(format!(
                "{op}: row is not a distribution (sum {s})"
            )));
        }
    }
    Ok(())
}

fn check_pair<T: Element>(tape: &Tape<T>, op: &'static str, p: Var, q: Var) -> Result<()> {
    if tape.shape(p) != tape.shape(q) {
        return shape_err(op, format!("{:?} vs {:?}", tape.shape(p), tape.shape(q)));
    }
    check_simplex(tape, op, p)?;
    check_simplex(tape, op, q)
}

/// `KL(p‖q) = Σ p·(ln p − ln q)` per row.
pub fn kl_divergence<T: Element>(tape: &mut Tape<T>, p: Var, q: Var) -> Result<Var> {
    check_pair(tape, "kl_divergence", p, q)?;
    let lp = tape.log_clamp(p, LOG_EPS)?;
    let lq = tape.log_clamp(q, LOG_EPS)?;
    let diff = tape.sub(lp, lq)?;
    let terms = tape.mul(p, diff)?;
    tape.sum_last(terms)
}

/// `H_q(p) = −Σ p·ln q` per row.
pub fn cross_entropy<T: Element>(tape: &mut Tape<T>, p: Var, q: Var) -> Result<Var> {
    check_pair(tape, "cross_entropy", p, q)?;
    let lq = tape.log_clamp(q, LOG_EPS)?;
    let terms = tape.mul(p, lq)?;
    let s = tape.sum_last(terms)?;
    tape.scale(s, -1.0)
}

/// `H(p) = −Σ p·ln p` per row.
pub fn entropy<T: Element>(tape: &mut Tape<T>, p: Var) -> Result<Var> {
    check_simplex(tape, "entropy", p)?;
    let lp = tape.log_clamp(p, LOG_EPS)?;
    let terms = tape.mul(p, lp)?;
    let s = tape.sum_last(terms)?;
    tape.scale(s, -1.0)
}
