//! Central finite-difference gradient checking in `f64`.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
    /// Coordinates left out because `x ± h` crosses a kink of a piecewise op.
    pub skipped: usize,
}

impl GradCheckReport {
    /// At least one coordinate was compared and every compared one is within `tolerance`.
    pub fn passes(&self, tolerance: f64) -> bool {
        self.coordinates > 0 && self.max_rel_error < tolerance
    }
}

/// Compares reverse-mode gradients of the scalar function `f` against
/// `(f(x+h·e_i) − f(x−h·e_i)) / 2h` for every coordinate of every input.
///
/// The error per coordinate is `|analytic − numeric| / (|analytic| + 1e-8)`.
/// A coordinate whose perturbations change a ReLU sign, clamp or pooling
/// argmax (see [`Tape::branch_pattern`]) has no valid central difference
/// and is counted in `skipped` instead.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let pattern = tape.branch_pattern();

    let eval = |probe: &[Tensor<f64>]| -> Result<(f64, Vec<u64>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape.value(out).item(), tape.branch_pattern()))
    };

    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
        skipped: 0,
    };
    for (ti, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let x0 = probe[ti].data()[j];
            probe[ti].data_mut()[j] = x0 + h;
            let (up, pu) = eval(&probe)?;
            probe[ti].data_mut()[j] = x0 - h;
            let (down, pd) = eval(&probe)?;
            probe[ti].data_mut()[j] = x0;
            if pu != pattern || pd != pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let err = (a - numeric).abs() / (a.abs() + 1e-8);
            report.coordinates += 1;
            if err > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = err;
                report.worst = (ti, j);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Single-input convenience form of [`grad_check_many`]; returns the max
/// relative error.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_many(|t, v| f(t, v[0]), std::slice::from_ref(x), h).map(|r| r.max_rel_error)
}
