//! Central-finite-difference gradient verification.
//!
//! The numeric side only ever evaluates forward passes, so it stays
//! independent of the backward rules it is checking.

use super::{Result, Tape, Tensor, Value};

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over all coordinates of all parameters.
    pub max_rel_err: f64,
    /// `(parameter index, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: Option<(f64, f64)>,
    /// Threshold the check was run against.
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Relative error with an absolute floor: tiny derivatives are compared
/// absolutely, everything else relatively.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / f64::max(1.0, f64::max(a.abs(), n.abs()))
}

/// Checks the tape's backward pass for `build` against central differences.
///
/// `build` receives a fresh tape and one differentiable tensor per entry of
/// `params`, and must return a scalar loss.
pub fn grad_check<F>(build: F, params: &[Value], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = analytic_grads(&build, params)?;
    grad_check_against(&analytic, build, params, step, tolerance)
}

/// Compares caller-supplied analytic gradients against central differences.
///
/// Split out from [`grad_check`] so that a deliberately wrong gradient can be
/// fed in as a negative control.
pub fn grad_check_against<F>(
    analytic: &[Value],
    build: F,
    params: &[Value],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        worst_pair: None,
        tolerance,
    };

    let mut work: Vec<Value> = params.to_vec();
    for p in 0..params.len() {
        for i in 0..params[p].len() {
            let original = work[p].data()[i];
            work[p].data_mut()[i] = original + step;
            let up = eval_loss(&build, &work)?;
            work[p].data_mut()[i] = original - step;
            let down = eval_loss(&build, &work)?;
            work[p].data_mut()[i] = original;

            let numeric = (up - down) / (2.0 * step);
            let err = rel_err(analytic[p].data()[i], numeric);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((p, i));
                report.worst_pair = Some((analytic[p].data()[i], numeric));
            }
        }
    }
    Ok(report)
}

fn analytic_grads<F>(build: &F, params: &[Value]) -> Result<Vec<Value>>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    let tape = Tape::new();
    let tensors: Vec<Tensor> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&tape, &tensors)?;
    let grads = loss.backward()?;
    Ok(tensors.iter().map(|t| grads.get(t)).collect())
}

fn eval_loss<F>(build: &F, params: &[Value]) -> Result<f64>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    let tape = Tape::new();
    let tensors: Vec<Tensor> = params.iter().map(|p| tape.constant(p.clone())).collect();
    Ok(build(&tape, &tensors)?.value().item())
}
