//! Finite-difference verification of reverse-mode gradients.
//!
//! Each trainable parameter block is probed along a random sign vector with
//! per-element steps `step_scale * (1 + |w|)`; the analytic directional
//! derivative from `backward` is compared against the central difference of
//! two forward passes. Meant to run on an f64 graph.

use rand::Rng;

use super::graph::{ExecError, Graph, Mode, NodeId};
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_error: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }

    pub fn worst(&self) -> Option<&BlockCheck> {
        self.blocks
            .iter()
            .max_by(|a, b| a.rel_error.partial_cmp(&b.rel_error).unwrap())
    }
}

/// Checks every trainable parameter of `graph` against central differences.
/// Inputs must be bound beforehand; `mode` selects the batch-norm behavior
/// that both passes use.
pub fn gradient_check<R: Rng>(
    graph: &mut Graph<f64>,
    loss: NodeId,
    mode: Mode,
    step_scale: f64,
    tol: f64,
    rng: &mut R,
) -> Result<GradCheckReport, ExecError> {
    graph.forward(mode)?;
    graph.backward(loss)?;
    let params = graph.trainable_params();
    let analytic_grads: Vec<Tensor<f64>> = params
        .iter()
        .map(|&id| graph.grad(id).expect("missing parameter gradient").clone())
        .collect();

    let mut blocks = Vec::with_capacity(params.len());
    for (&id, grad) in params.iter().zip(&analytic_grads) {
        let name = graph.param_name(id).to_string();
        let base = graph.value(id).clone();
        let step: Vec<f64> = base
            .data()
            .iter()
            .map(|&w| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * step_scale * (1.0 + w.abs())
            })
            .collect();
        let analytic: f64 = grad.data().iter().zip(&step).map(|(&g, &v)| g * v).sum();

        let shifted = |dir: f64, base: &Tensor<f64>| {
            let mut t = base.clone();
            for (w, &v) in t.data_mut().iter_mut().zip(&step) {
                *w += dir * v;
            }
            t
        };
        graph.set_param_value(id, shifted(1.0, &base));
        graph.forward(mode)?;
        let loss_plus = graph.value(loss).item();
        graph.set_param_value(id, shifted(-1.0, &base));
        graph.forward(mode)?;
        let loss_minus = graph.value(loss).item();
        graph.set_param_value(id, base);

        let numeric = (loss_plus - loss_minus) / 2.0;
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel_error = (analytic - numeric).abs() / denom;
        blocks.push(BlockCheck { name, analytic, numeric, rel_error });
    }
    // Leave the graph in a consistent state for the caller.
    graph.forward(mode)?;
    let max_rel_error = blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { blocks, max_rel_error, tol })
}
