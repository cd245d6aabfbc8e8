//! Validation metrics on the target agent: minADE, minFDE, miss rate and NLL.
//!
//! minADE/minFDE use the mode with the smallest endpoint error. The NLL uses
//! the mode closest over the whole horizon, the same choice as in training.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::objective::argmin;
use crate::predictor::{forward, ParamVector};
use crate::scenario::{Point, Scenario};
use crate::selection::{scenario_value, SelectionMetric};

/// A scenario is a miss when every mode ends farther than this from the truth, meters.
pub const MISS_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub nll: f64,
    pub min_ade: f64,
    pub min_fde: f64,
    pub mr: f64,
    pub n_scenarios: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementErrors {
    pub ade: f64,
    pub fde: f64,
    pub miss: bool,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mode whose final point is closest to the true final point (first on ties).
pub fn endpoint_best_mode(modes: &[Vec<Point>], future: &[Point]) -> usize {
    let end = *future.last().expect("non-empty future");
    argmin(modes.iter().map(|m| dist(*m.last().expect("non-empty mode"), end)))
}

pub fn displacement_errors(modes: &[Vec<Point>], future: &[Point]) -> DisplacementErrors {
    let best = endpoint_best_mode(modes, future);
    let end = future[future.len() - 1];
    let mode = &modes[best];
    let ade = mode.iter().zip(future).map(|(&p, &y)| dist(p, y)).sum::<f64>() / future.len() as f64;
    let fde = dist(mode[mode.len() - 1], end);
    DisplacementErrors {
        ade,
        fde,
        miss: fde > MISS_THRESHOLD,
    }
}

/// Evaluates the model on the target agent of every scenario.
pub fn evaluate(params: &ParamVector, validation: &[Scenario]) -> Result<EvalReport> {
    if validation.is_empty() {
        return Err(Error::validation("validation set is empty"));
    }
    let per_scenario: Vec<(f64, DisplacementErrors)> = validation
        .par_iter()
        .map(|s| {
            let out = forward(params, s)?;
            let nll = scenario_value(SelectionMetric::Nll, &out, s)?;
            let futures = s.centered_futures();
            let target = s.target_index;
            Ok((nll, displacement_errors(&out.agents[target].mu, &futures[target])))
        })
        .collect::<Result<_>>()?;

    let n = per_scenario.len() as f64;
    let (mut nll, mut ade, mut fde, mut misses) = (0.0, 0.0, 0.0, 0usize);
    for (v, e) in &per_scenario {
        nll += v;
        ade += e.ade;
        fde += e.fde;
        misses += e.miss as usize;
    }
    Ok(EvalReport {
        nll: nll / n,
        min_ade: ade / n,
        min_fde: fde / n,
        mr: misses as f64 / n,
        n_scenarios: per_scenario.len(),
    })
}
