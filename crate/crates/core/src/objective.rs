//! Training objective: best-mode selection, Laplace NLL regression loss,
//! soft-target cross entropy and their per-scenario and per-client sums.
//!
//! All functions take predictions and ground truth in the agent-centered frame.

use crate::error::{Error, Result};
use crate::predictor::{forward, ParamVector, PredictionOutput};
use crate::scenario::{ClientDataset, Point, Scenario};

/// Floor applied to predicted mode probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_reg: f64,
    pub l_cls: f64,
    pub total: f64,
    pub f_best: Vec<usize>,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Sum over time of the L2 distance between one predicted mode and the truth.
pub fn trajectory_distance(mode: &[Point], future: &[Point]) -> f64 {
    mode.iter().zip(future).map(|(&p, &y)| dist(p, y)).sum()
}

/// Index of the smallest value, first index on ties.
pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v < best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Mode of one agent whose whole trajectory lies closest to the truth.
pub fn best_mode_of(modes: &[Vec<Point>], future: &[Point]) -> usize {
    argmin(modes.iter().map(|m| trajectory_distance(m, future)))
}

/// Per-agent best mode.
pub fn best_mode(output: &PredictionOutput, futures: &[Vec<Point>]) -> Vec<usize> {
    output
        .agents
        .iter()
        .zip(futures)
        .map(|(a, y)| best_mode_of(&a.mu, y))
        .collect()
}

/// Laplace negative log-likelihood of one coordinate.
#[inline]
pub fn laplace_nll(err: f64, b: f64) -> f64 {
    (2.0 * b).ln() + err.abs() / b
}

/// Sum over time and both coordinates of the Laplace NLL along one mode.
pub(crate) fn mode_nll(
    agent: usize,
    mu: &[Point],
    b: &[Point],
    future: &[Point],
) -> Result<f64> {
    let mut sum = 0.0;
    for (t, ((m, s), y)) in mu.iter().zip(b).zip(future).enumerate() {
        for d in 0..2 {
            if !(s[d] > 0.0) {
                return Err(Error::NonPositiveScale {
                    agent,
                    step: t,
                    value: s[d],
                });
            }
            sum += laplace_nll(y[d] - m[d], s[d]);
        }
    }
    Ok(sum)
}

/// Mean over agents and time steps of the best-mode Laplace NLL, summed over
/// the x and y coordinates.
pub fn regression_loss(
    output: &PredictionOutput,
    futures: &[Vec<Point>],
    f_best: &[usize],
) -> Result<f64> {
    let m = output.agents.len();
    let mut sum = 0.0;
    let mut t_pre = 0;
    for (i, ((agent, y), &f)) in output.agents.iter().zip(futures).zip(f_best).enumerate() {
        t_pre = y.len();
        sum += mode_nll(i, &agent.mu[f], &agent.b[f], y)?;
    }
    Ok(sum / (m as f64 * t_pre as f64))
}

/// Softmax over modes of the negated trajectory distances.
pub fn soft_targets_of(modes: &[Vec<Point>], future: &[Point]) -> Vec<f64> {
    let neg: Vec<f64> = modes
        .iter()
        .map(|m| -trajectory_distance(m, future))
        .collect();
    softmax(&neg)
}

pub fn soft_targets(output: &PredictionOutput, futures: &[Vec<Point>]) -> Vec<Vec<f64>> {
    output
        .agents
        .iter()
        .zip(futures)
        .map(|(a, y)| soft_targets_of(&a.mu, y))
        .collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Mean over agents of the cross entropy between soft targets and predicted
/// mode probabilities.
pub fn classification_loss(mode_probs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let m = mode_probs.len();
    let sum: f64 = mode_probs
        .iter()
        .zip(targets)
        .map(|(p_hat, p)| {
            p.iter()
                .zip(p_hat)
                .map(|(&t, &q)| -t * q.max(PROB_FLOOR).ln())
                .sum::<f64>()
        })
        .sum();
    sum / m as f64
}

/// Full loss of one scenario given the predictor's output on it.
pub fn total_loss(output: &PredictionOutput, scenario: &Scenario) -> Result<LossBreakdown> {
    if output.agents.len() != scenario.agents.len() {
        return Err(Error::DimensionMismatch {
            what: "agent count",
            expected: scenario.agents.len(),
            found: output.agents.len(),
        });
    }
    let futures = scenario.centered_futures();
    let f_best = best_mode(output, &futures);
    let l_reg = regression_loss(output, &futures, &f_best)?;
    let targets = soft_targets(output, &futures);
    let probs: Vec<Vec<f64>> = output.agents.iter().map(|a| a.mode_probs.clone()).collect();
    let l_cls = classification_loss(&probs, &targets);
    Ok(LossBreakdown {
        l_reg,
        l_cls,
        total: l_reg + l_cls,
        f_best,
    })
}

/// Mean total loss of the model over one client's scenarios.
pub fn local_objective(params: &ParamVector, dataset: &ClientDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::validation(format!(
            "client {} holds no scenarios",
            dataset.client_id
        )));
    }
    let mut sum = 0.0;
    for s in &dataset.scenarios {
        sum += total_loss(&forward(params, s)?, s)?.total;
    }
    Ok(sum / dataset.len() as f64)
}
