//! Adam with bias correction.

use crate::error::{Error, Result};

use super::matrix::Matrix;

pub const DEFAULT_LR: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, lr: f64) -> Self {
        AdamState {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_param(param: &Matrix, lr: f64) -> Self {
        Self::new(param.rows(), param.cols(), lr)
    }
}

/// One Adam update of `param` in place.
pub fn adam_update(param: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::dim("adam_update", param.shape(), grad.shape()));
    }
    if state.first_moment.shape() != param.shape() {
        return Err(Error::dim("adam_update", param.shape(), state.first_moment.shape()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for (k, (p, &g)) in param.as_mut_slice().iter_mut().zip(grad.as_slice()).enumerate() {
        m[k] = b1 * m[k] + (1.0 - b1) * g;
        v[k] = b2 * v[k] + (1.0 - b2) * g * g;
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Adam over an ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &[&Matrix], lr: f64) -> Self {
        Adam {
            states: params.iter().map(|p| AdamState::for_param(p, lr)).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::Contract(format!(
                "adam step over {} params with {} grads, optimizer tracks {}",
                params.len(),
                grads.len(),
                self.states.len()
            )));
        }
        for ((p, g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            adam_update(p, g, s)?;
        }
        Ok(())
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }
}
