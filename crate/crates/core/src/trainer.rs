//! Client-side training: mini-batch AdamW with decoupled weight decay.
//!
//! ```text
//! w     <- w - eta * lambda * w
//! theta <- beta1 * theta + (1 - beta1) * g
//! sigma <- beta2 * sigma + (1 - beta2) * g * g
//! w     <- w - eta * (theta / (1 - beta1^t)) / (sqrt(sigma / (1 - beta2^t)) + eps)
//! ```
//!
//! Moments start at zero on every call; nothing is carried across rounds.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::predictor::{loss_and_grad_refs, ParamVector};
use crate::scenario::{ClientDataset, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    /// Learning rate.
    pub eta: f64,
    /// Weight decay.
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Decay along the gradient (`w -= eta * lambda * g`) instead of along the weights.
    pub literal_decay: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            eta: 5e-4,
            lambda: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 4,
            literal_decay: false,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::validation("eta must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::validation("weight decay must be >= 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::validation(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::validation("epsilon must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        Ok(())
    }

    /// Optimizer steps taken by one client update on `k` scenarios.
    pub fn steps_per_update(&self, k: usize) -> usize {
        self.epochs * k.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub theta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            theta: vec![0.0; len],
            sigma: vec![0.0; len],
            t: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    hyper: TrainHyper,
    state: OptimizerState,
}

impl AdamW {
    pub fn new(len: usize, hyper: TrainHyper) -> Self {
        Self {
            hyper,
            state: OptimizerState::new(len),
        }
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn step(&mut self, w: &mut [f64], g: &[f64]) {
        let TrainHyper {
            eta,
            lambda,
            beta1,
            beta2,
            epsilon,
            literal_decay,
            ..
        } = self.hyper;
        let s = &mut self.state;
        s.t += 1;
        let bc1 = 1.0 - beta1.powi(s.t as i32);
        let bc2 = 1.0 - beta2.powi(s.t as i32);
        for (((w, &g), theta), sigma) in w
            .iter_mut()
            .zip(g)
            .zip(s.theta.iter_mut())
            .zip(s.sigma.iter_mut())
        {
            if literal_decay {
                *w -= eta * lambda * g;
            } else {
                *w -= eta * lambda * *w;
            }
            *theta = beta1 * *theta + (1.0 - beta1) * g;
            *sigma = beta2 * *sigma + (1.0 - beta2) * g * g;
            let theta_hat = *theta / bc1;
            let sigma_hat = *sigma / bc2;
            *w -= eta * theta_hat / (sigma_hat.sqrt() + epsilon);
        }
    }
}

/// Local training with a caller-supplied batch gradient.
pub fn client_update_with<R, G>(
    w: &ParamVector,
    dataset: &ClientDataset,
    hyper: &TrainHyper,
    rng: &mut R,
    mut grad_fn: G,
) -> Result<ParamVector>
where
    R: Rng + ?Sized,
    G: FnMut(&ParamVector, &[&Scenario]) -> Result<(f64, ParamVector)>,
{
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation(format!(
            "client {} holds no scenarios",
            dataset.client_id
        )));
    }
    let mut w = w.clone();
    let mut opt = AdamW::new(w.len(), hyper.clone());
    let mut order: Vec<&Scenario> = dataset.scenarios.iter().collect();
    for epoch in 0..hyper.epochs {
        order.shuffle(rng);
        for (batch_idx, batch) in order.chunks(hyper.batch_size).enumerate() {
            let (loss, g) = grad_fn(&w, batch)?;
            if !loss.is_finite() || !g.is_finite() {
                return Err(Error::NonFiniteGradient {
                    epoch,
                    batch: batch_idx,
                });
            }
            opt.step(&mut w.values, &g.values);
        }
    }
    Ok(w)
}

/// Runs `epochs` passes of mini-batch AdamW over the client's data.
pub fn client_update<R: Rng + ?Sized>(
    w: &ParamVector,
    dataset: &ClientDataset,
    hyper: &TrainHyper,
    rng: &mut R,
) -> Result<ParamVector> {
    client_update_with(w, dataset, hyper, rng, loss_and_grad_refs)
}
