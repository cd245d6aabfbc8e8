//! Multi-modal trajectory predictor with Laplace-mixture outputs.
//!
//! Each agent's observed displacements go through a two-layer tanh encoder.
//! The agent embedding is concatenated with the mean embedding of all agents
//! in the scenario and fed to three linear heads: mode locations, softplus
//! scales (floored at [`B_MIN`]) and mode logits. All outputs live in a frame
//! centered on the agent's last observed position.
//!
//! Gradients are computed by hand in reverse mode. The best mode and the soft
//! classification targets are treated as constants.

use rand::Rng;

use crate::error::{Error, Result};
use crate::objective::{self, PROB_FLOOR};
use crate::rng::rng_from_seed;
use crate::scenario::{Point, Scenario};

/// Lower bound added to every predicted scale, meters.
pub const B_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub t_obs: usize,
    pub t_pre: usize,
    /// Number of mixture modes.
    pub modes: usize,
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            t_obs: 20,
            t_pre: 30,
            modes: 6,
            hidden: 64,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.modes < 1 {
            return Err(Error::validation("number of modes must be at least 1"));
        }
        if self.hidden < 1 {
            return Err(Error::validation("hidden width must be at least 1"));
        }
        if self.t_obs < 2 {
            return Err(Error::validation("t_obs must be at least 2"));
        }
        if self.t_pre < 1 {
            return Err(Error::validation("t_pre must be at least 1"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2 * (self.t_obs - 1)
    }

    /// Rows of the location and scale heads: one per (mode, step, coordinate).
    pub fn head_dim(&self) -> usize {
        2 * self.modes * self.t_pre
    }

    pub fn layout(&self) -> Layout {
        Layout::new(*self)
    }
}

/// A contiguous `rows x cols` row-major block inside the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of every weight and bias block, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub w1: Block,
    pub b1: Block,
    pub w2: Block,
    pub b2: Block,
    pub w_loc: Block,
    pub b_loc: Block,
    pub w_scale: Block,
    pub b_scale: Block,
    pub w_mode: Block,
    pub b_mode: Block,
    pub total: usize,
}

impl Layout {
    fn new(dims: ModelDims) -> Self {
        let h = dims.hidden;
        let z = 2 * h;
        let out = dims.head_dim();
        let mut offset = 0;
        let mut next = |rows: usize, cols: usize| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let w1 = next(h, dims.input_dim());
        let b1 = next(h, 1);
        let w2 = next(h, h);
        let b2 = next(h, 1);
        let w_loc = next(out, z);
        let b_loc = next(out, 1);
        let w_scale = next(out, z);
        let b_scale = next(out, 1);
        let w_mode = next(dims.modes, z);
        let b_mode = next(dims.modes, 1);
        Layout {
            w1,
            b1,
            w2,
            b2,
            w_loc,
            b_loc,
            w_scale,
            b_scale,
            w_mode,
            b_mode,
            total: offset,
        }
    }

    pub fn weights(&self) -> [Block; 5] {
        [self.w1, self.w2, self.w_loc, self.w_scale, self.w_mode]
    }

    pub fn biases(&self) -> [Block; 5] {
        [self.b1, self.b2, self.b_loc, self.b_scale, self.b_mode]
    }
}

/// Flat vector of all predictor parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub dims: ModelDims,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.layout().total],
        }
    }

    pub fn from_values(dims: ModelDims, values: Vec<f64>) -> Result<Self> {
        let expected = dims.layout().total;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "parameter vector length",
                expected,
                found: values.len(),
            });
        }
        Ok(Self { dims, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn block(&self, b: Block) -> &[f64] {
        &self.values[b.range()]
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(seed: u64, dims: ModelDims) -> Result<ParamVector> {
    dims.validate()?;
    let layout = dims.layout();
    let mut params = ParamVector::zeros(dims);
    let mut rng = rng_from_seed(seed);
    for block in layout.weights() {
        let s = (6.0 / (block.rows + block.cols) as f64).sqrt();
        for v in &mut params.values[block.range()] {
            *v = rng.random_range(-s..=s);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPrediction {
    /// Locations, indexed `[mode][step]`.
    pub mu: Vec<Vec<Point>>,
    /// Scales, indexed `[mode][step]`; every entry is at least [`B_MIN`].
    pub b: Vec<Vec<Point>>,
    pub mode_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub agents: Vec<AgentPrediction>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W x + bias` for a row-major `W`.
fn affine(w: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for ((o, row), b) in out.iter_mut().zip(w.chunks_exact(cols)).zip(bias) {
        *o = b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += W^T dy` restricted to the rows listed in `rows`.
fn accumulate_input_grad(w: &[f64], cols: usize, dy: &[f64], rows: &[usize], dx: &mut [f64]) {
    for &r in rows {
        let g = dy[r];
        if g == 0.0 {
            continue;
        }
        for (d, &wv) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *d += g * wv;
        }
    }
}

/// `dW += dy x^T`, `db += dy` restricted to the rows listed in `rows`.
fn accumulate_weight_grad(
    dw: &mut [f64],
    db: &mut [f64],
    dy: &[f64],
    x: &[f64],
    rows: &[usize],
) {
    let cols = x.len();
    for &r in rows {
        let g = dy[r];
        if g == 0.0 {
            continue;
        }
        db[r] += g;
        for (d, &xv) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

/// Intermediate values of one forward pass kept for the backward pass.
struct Activations {
    inputs: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    embed: Vec<Vec<f64>>,
    joint: Vec<Vec<f64>>,
    scale_pre: Vec<Vec<f64>>,
}

fn check_scenario(dims: &ModelDims, scenario: &Scenario) -> Result<()> {
    if scenario.agents.is_empty() {
        return Err(Error::validation(format!(
            "scenario {} has no agents",
            scenario.scenario_id
        )));
    }
    if scenario.target_index >= scenario.agents.len() {
        return Err(Error::validation(format!(
            "scenario {}: target index out of range",
            scenario.scenario_id
        )));
    }
    for a in &scenario.agents {
        if a.observed.len() != dims.t_obs {
            return Err(Error::DimensionMismatch {
                what: "observed track length",
                expected: dims.t_obs,
                found: a.observed.len(),
            });
        }
        if a.future.len() != dims.t_pre {
            return Err(Error::DimensionMismatch {
                what: "future track length",
                expected: dims.t_pre,
                found: a.future.len(),
            });
        }
    }
    Ok(())
}

fn forward_with_cache(params: &ParamVector, scenario: &Scenario) -> Result<(PredictionOutput, Activations)> {
    let dims = params.dims;
    check_scenario(&dims, scenario)?;
    let layout = dims.layout();
    if params.values.len() != layout.total {
        return Err(Error::DimensionMismatch {
            what: "parameter vector length",
            expected: layout.total,
            found: params.values.len(),
        });
    }
    let h = dims.hidden;
    let m = scenario.agents.len();

    let mut inputs = Vec::with_capacity(m);
    let mut hidden = Vec::with_capacity(m);
    let mut embed = Vec::with_capacity(m);
    for agent in &scenario.agents {
        let u: Vec<f64> = agent
            .observed
            .windows(2)
            .flat_map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
            .collect();
        let mut h1 = vec![0.0; h];
        affine(params.block(layout.w1), params.block(layout.b1), &u, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut e = vec![0.0; h];
        affine(params.block(layout.w2), params.block(layout.b2), &h1, &mut e);
        e.iter_mut().for_each(|v| *v = v.tanh());
        inputs.push(u);
        hidden.push(h1);
        embed.push(e);
    }

    let mut context = vec![0.0; h];
    for e in &embed {
        for (c, v) in context.iter_mut().zip(e) {
            *c += v;
        }
    }
    context.iter_mut().for_each(|c| *c /= m as f64);

    let out_dim = dims.head_dim();
    let mut joint = Vec::with_capacity(m);
    let mut scale_pre = Vec::with_capacity(m);
    let mut agents = Vec::with_capacity(m);
    for e in &embed {
        let z: Vec<f64> = e.iter().chain(&context).copied().collect();
        let mut loc = vec![0.0; out_dim];
        affine(params.block(layout.w_loc), params.block(layout.b_loc), &z, &mut loc);
        let mut braw = vec![0.0; out_dim];
        affine(params.block(layout.w_scale), params.block(layout.b_scale), &z, &mut braw);
        let mut logits = vec![0.0; dims.modes];
        affine(params.block(layout.w_mode), params.block(layout.b_mode), &z, &mut logits);

        let reshape = |flat: &[f64], f: &dyn Fn(f64) -> f64| -> Vec<Vec<Point>> {
            flat.chunks_exact(2 * dims.t_pre)
                .map(|mode| mode.chunks_exact(2).map(|p| [f(p[0]), f(p[1])]).collect())
                .collect()
        };
        agents.push(AgentPrediction {
            mu: reshape(&loc, &|x| x),
            b: reshape(&braw, &|x| softplus(x) + B_MIN),
            mode_probs: objective::softmax(&logits),
        });
        joint.push(z);
        scale_pre.push(braw);
    }

    Ok((
        PredictionOutput { agents },
        Activations {
            inputs,
            hidden,
            embed,
            joint,
            scale_pre,
        },
    ))
}

/// Runs the predictor on every agent of a scenario.
pub fn forward(params: &ParamVector, scenario: &Scenario) -> Result<PredictionOutput> {
    forward_with_cache(params, scenario).map(|(out, _)| out)
}

/// Adds the gradient of one scenario's total loss into `grad` and returns the loss.
fn accumulate_scenario(params: &ParamVector, scenario: &Scenario, grad: &mut [f64]) -> Result<f64> {
    let dims = params.dims;
    let layout = dims.layout();
    let (output, acts) = forward_with_cache(params, scenario)?;
    let loss = objective::total_loss(&output, scenario)?;
    let futures = scenario.centered_futures();
    let m = scenario.agents.len();
    let (h, t_pre, modes) = (dims.hidden, dims.t_pre, dims.modes);
    let reg_scale = 1.0 / (m as f64 * t_pre as f64);
    let cls_scale = 1.0 / m as f64;
    let out_dim = dims.head_dim();
    let all_modes: Vec<usize> = (0..modes).collect();

    let mut d_joint_ctx = vec![0.0; h];
    let mut d_embed: Vec<Vec<f64>> = vec![vec![0.0; h]; m];

    for i in 0..m {
        let agent = &output.agents[i];
        let f = loss.f_best[i];
        let y = &futures[i];
        let z = &acts.joint[i];

        // Only the best mode's rows of the location and scale heads carry gradient.
        let rows: Vec<usize> = (f * 2 * t_pre..(f + 1) * 2 * t_pre).collect();
        let mut d_loc = vec![0.0; out_dim];
        let mut d_braw = vec![0.0; out_dim];
        for t in 0..t_pre {
            for d in 0..2 {
                let r = (f * t_pre + t) * 2 + d;
                let mu = agent.mu[f][t][d];
                let b = agent.b[f][t][d];
                let err = mu - y[t][d];
                let sign = if err > 0.0 {
                    1.0
                } else if err < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                d_loc[r] = reg_scale * sign / b;
                let d_b = reg_scale * (1.0 / b - err.abs() / (b * b));
                d_braw[r] = d_b * sigmoid(acts.scale_pre[i][r]);
            }
        }

        let targets = objective::soft_targets_of(&agent.mu, y);
        let q: Vec<f64> = agent
            .mode_probs
            .iter()
            .zip(&targets)
            .map(|(&p_hat, &p)| if p_hat >= PROB_FLOOR { -p } else { 0.0 })
            .collect();
        let q_sum: f64 = q.iter().sum();
        let d_logits: Vec<f64> = q
            .iter()
            .zip(&agent.mode_probs)
            .map(|(&qk, &pk)| cls_scale * (qk - pk * q_sum))
            .collect();

        let mut d_z = vec![0.0; 2 * h];
        accumulate_input_grad(params.block(layout.w_loc), 2 * h, &d_loc, &rows, &mut d_z);
        accumulate_input_grad(params.block(layout.w_scale), 2 * h, &d_braw, &rows, &mut d_z);
        accumulate_input_grad(params.block(layout.w_mode), 2 * h, &d_logits, &all_modes, &mut d_z);

        {
            let (dw, db) = split_pair(grad, layout.w_loc, layout.b_loc);
            accumulate_weight_grad(dw, db, &d_loc, z, &rows);
        }
        {
            let (dw, db) = split_pair(grad, layout.w_scale, layout.b_scale);
            accumulate_weight_grad(dw, db, &d_braw, z, &rows);
        }
        {
            let (dw, db) = split_pair(grad, layout.w_mode, layout.b_mode);
            accumulate_weight_grad(dw, db, &d_logits, z, &all_modes);
        }

        for k in 0..h {
            d_embed[i][k] += d_z[k];
            d_joint_ctx[k] += d_z[h + k];
        }
    }

    // The context is the mean embedding, so each agent receives 1/m of its gradient.
    for de in d_embed.iter_mut() {
        for (d, c) in de.iter_mut().zip(&d_joint_ctx) {
            *d += c / m as f64;
        }
    }

    let all_hidden: Vec<usize> = (0..h).collect();
    for i in 0..m {
        let d_a2: Vec<f64> = d_embed[i]
            .iter()
            .zip(&acts.embed[i])
            .map(|(g, e)| g * (1.0 - e * e))
            .collect();
        let mut d_h1 = vec![0.0; h];
        accumulate_input_grad(params.block(layout.w2), h, &d_a2, &all_hidden, &mut d_h1);
        {
            let (dw, db) = split_pair(grad, layout.w2, layout.b2);
            accumulate_weight_grad(dw, db, &d_a2, &acts.hidden[i], &all_hidden);
        }
        let d_a1: Vec<f64> = d_h1
            .iter()
            .zip(&acts.hidden[i])
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        let (dw, db) = split_pair(grad, layout.w1, layout.b1);
        accumulate_weight_grad(dw, db, &d_a1, &acts.inputs[i], &all_hidden);
    }

    Ok(loss.total)
}

/// Mutable views of a weight block and its bias block, which follows it in storage.
fn split_pair(grad: &mut [f64], w: Block, b: Block) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(w.offset + w.len(), b.offset);
    let (dw, rest) = grad[w.offset..b.offset + b.len()].split_at_mut(w.len());
    (dw, rest)
}

/// Mean total loss over a batch and its exact gradient.
pub fn loss_and_grad(params: &ParamVector, batch: &[Scenario]) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::validation("loss_and_grad needs a non-empty batch"));
    }
    let batch: Vec<&Scenario> = batch.iter().collect();
    loss_and_grad_refs(params, &batch)
}

pub(crate) fn loss_and_grad_refs(
    params: &ParamVector,
    batch: &[&Scenario],
) -> Result<(f64, ParamVector)> {
    let mut grad = ParamVector::zeros(params.dims);
    let mut loss = 0.0;
    for s in batch {
        loss += accumulate_scenario(params, s, &mut grad.values)?;
    }
    let n = batch.len() as f64;
    grad.values.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}
