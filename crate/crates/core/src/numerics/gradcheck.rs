//! Central finite-difference checker for tape-built scalar functions.

use crate::error::Result;

use super::matrix::Matrix;
use super::tape::{Tape, Var};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)` per parameter.
    pub per_param: Vec<f64>,
    pub max_rel_error: f64,
}

fn eval<F>(params: &[Matrix], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.value(out).item()
}

/// Compares reverse-mode gradients of `f` against central differences
/// with step [`FD_STEP`], one parameter tensor at a time.
pub fn check_gradients<F>(params: &[Matrix], f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.var(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut work: Vec<Matrix> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        let mut numeric = Matrix::zeros(params[pi].rows(), params[pi].cols());
        for k in 0..params[pi].len() {
            let orig = params[pi].as_slice()[k];
            work[pi].as_mut_slice()[k] = orig + FD_STEP;
            let up = eval(&work, &f)?;
            work[pi].as_mut_slice()[k] = orig - FD_STEP;
            let down = eval(&work, &f)?;
            work[pi].as_mut_slice()[k] = orig;
            numeric.as_mut_slice()[k] = (up - down) / (2.0 * FD_STEP);
        }
        let diff = analytic.sub(&numeric)?.frobenius();
        let scale = analytic.frobenius().max(numeric.frobenius()).max(1e-8);
        per_param.push(diff / scale);
    }
    let max_rel_error = per_param.iter().cloned().fold(0.0, f64::max);
    Ok(GradCheck {
        per_param,
        max_rel_error,
    })
}
