use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};

/// Negative log-likelihood of `target` from unnormalised logits.
pub fn nll_loss(tape: &mut Tape<'_>, logits: Var, target: usize) -> Result<Var> {
    let n = tape.value(logits).numel();
    if target >= n {
        return Err(SanError::contract(format!("target {target} outside {n} answers")));
    }
    tape.nll_from_logits(logits, target)
}

/// Global-norm clipping. Returns the scale applied (1 when unclipped).
pub fn clip_gradients(grads: &mut [Tensor], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(SanError::contract(format!("clip threshold must be positive, got {tau}")));
    }
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(SanError::Numeric { op: "clip_gradients" });
    }
    if norm <= tau {
        return Ok(1.0);
    }
    let scale = tau / norm;
    for g in grads.iter_mut() {
        g.scale_in_place(scale);
    }
    Ok(scale)
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Momentum buffers, one per parameter, zero-initialised.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &[Tensor]) -> Self {
        OptimizerState { velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect() }
    }
}

/// Classical momentum: `v ← μ·v − lr·g`, `θ ← θ + v`.
pub fn sgd_momentum_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(SanError::contract(format!(
            "{} parameters, {} gradients, {} velocities",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(SanError::contract(format!(
                "shape mismatch: parameter {:?}, gradient {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
        for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = momentum * *vi - lr * gi;
            *pi += *vi;
        }
    }
    Ok(())
}
