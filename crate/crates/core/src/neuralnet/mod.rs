//! A small dense-network engine: layers, output maps, reverse-mode
//! gradients over a per-batch tape, Adam and a finite-difference checker.
//!
//! Objectives see a *list* of networks so that multi-network heads (the
//! CVAE has an encoder, a prior and a decoder) share the same machinery.

mod adam;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use network::{
    kappa_link, kappa_link_derivative, Activation, DenseLayer, LayerSpec, Network, NetworkSpec,
    OutputMap, Tape, LOGVAR_BOUND,
};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// One gradient vector per network, laid out like [`Network::params`].
pub type Gradients = Vec<Vec<f64>>;

pub fn zero_gradients(nets: &[Network]) -> Gradients {
    nets.iter().map(|n| vec![0.0; n.params().len()]).collect()
}

/// A scalar training objective over a fixed batch (and fixed noise, for
/// stochastic objectives).
pub trait Objective {
    fn loss(&self, nets: &[Network]) -> Result<f64>;

    fn loss_and_gradients(&self, nets: &[Network]) -> Result<(f64, Gradients)>;
}

/// Evaluates `objective` and its gradients, rejecting non-finite results.
pub fn loss_and_gradients(nets: &[Network], objective: &dyn Objective) -> Result<(f64, Gradients)> {
    let (loss, grads) = objective.loss_and_gradients(nets)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(loss));
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss(f64::NAN));
    }
    Ok((loss, grads))
}

/// Per-row loss on a single network's mapped output.
///
/// `row_loss(mapped_row, target, grad)` returns the row's loss and, when
/// `grad` is given, writes `∂loss/∂mapped_row` into it. The objective is the
/// mean over rows.
pub struct RowObjective<'a, F> {
    inputs: &'a crate::neuralnet::Tensor,
    targets: &'a [f64],
    row_loss: F,
}

impl<'a, F> RowObjective<'a, F>
where
    F: Fn(&[f64], f64, Option<&mut [f64]>) -> f64,
{
    pub fn new(inputs: &'a Tensor, targets: &'a [f64], row_loss: F) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::LengthMismatch {
                left: inputs.rows(),
                right: targets.len(),
            });
        }
        if targets.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(RowObjective {
            inputs,
            targets,
            row_loss,
        })
    }
}

impl<F> Objective for RowObjective<'_, F>
where
    F: Fn(&[f64], f64, Option<&mut [f64]>) -> f64,
{
    fn loss(&self, nets: &[Network]) -> Result<f64> {
        let out = nets[0].forward(self.inputs)?;
        let n = self.targets.len() as f64;
        Ok((0..out.rows())
            .map(|r| (self.row_loss)(out.row(r), self.targets[r], None))
            .sum::<f64>()
            / n)
    }

    fn loss_and_gradients(&self, nets: &[Network]) -> Result<(f64, Gradients)> {
        let net = &nets[0];
        let tape = net.forward_taped(self.inputs)?;
        let out = tape.output();
        let n = self.targets.len() as f64;
        let mut grad_out = Tensor::zeros(out.rows(), out.cols());
        let mut total = 0.0;
        for r in 0..out.rows() {
            let g = grad_out.row_mut(r);
            total += (self.row_loss)(out.row(r), self.targets[r], Some(&mut *g));
            g.iter_mut().for_each(|v| *v /= n);
        }
        let mut grads = zero_gradients(nets);
        net.backward(&tape, &grad_out, &mut grads[0]);
        Ok((total / n, grads))
    }
}

/// Worst relative discrepancy between the analytic gradient and central
/// finite differences with step `step`, over every parameter of every
/// network. Discrepancies are scaled by `max(|analytic|, |numeric|, 1e-3)`
/// so that vanishing gradients are compared absolutely.
pub fn finite_diff_check(nets: &[Network], objective: &dyn Objective, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let (_, analytic) = objective.loss_and_gradients(nets)?;
    let mut work = nets.to_vec();
    let mut worst: f64 = 0.0;
    for g in 0..work.len() {
        for k in 0..work[g].params().len() {
            let orig = work[g].params()[k];
            work[g].params_mut()[k] = orig + step;
            let up = objective.loss(&work)?;
            work[g].params_mut()[k] = orig - step;
            let down = objective.loss(&work)?;
            work[g].params_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[g][k];
            let scale = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    Ok(worst)
}
