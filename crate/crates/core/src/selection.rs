//! Uncertainty-aware active client selection.
//!
//! Each round a candidate set is drawn like ordinary client sampling. Every
//! candidate scores the current global model on its own data, either by the
//! target agent's Laplace NLL or by its mean predicted scale (aleatoric
//! uncertainty). The server then trains the highest-NLL candidates, or the
//! candidates whose uncertainty lies closest to the median.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::federation::{
    client_sizes, fraction_count, round_metrics, sample_weighted, train_selected, validate_data,
    FlConfig, RoundLog,
};
use crate::objective::{best_mode_of, mode_nll};
use crate::predictor::{forward, ParamVector, PredictionOutput};
use crate::rng::{rng_from_seed, server_seed};
use crate::scenario::{ClientDataset, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionMetric {
    /// Negative log-likelihood of the target agent's best mode.
    Nll,
    /// Mean predicted Laplace scale of the target agent's best mode.
    Au,
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMetric::Nll => "nll",
            SelectionMetric::Au => "au",
        })
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nll" => Ok(SelectionMetric::Nll),
            "au" => Ok(SelectionMetric::Au),
            other => Err(Error::validation(format!("unknown selection metric '{other}'"))),
        }
    }
}

/// Value of one scenario for the target agent, using the trajectory-wise best mode.
pub fn scenario_value(
    metric: SelectionMetric,
    output: &PredictionOutput,
    scenario: &Scenario,
) -> Result<f64> {
    let i = scenario.target_index;
    let agent = output.agents.get(i).ok_or(Error::DimensionMismatch {
        what: "agent count",
        expected: scenario.agents.len(),
        found: output.agents.len(),
    })?;
    let target = scenario.target();
    let c = target.last_observed();
    let future: Vec<_> = target.future.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect();
    let f = best_mode_of(&agent.mu, &future);
    let t_pre = future.len() as f64;
    match metric {
        SelectionMetric::Nll => Ok(mode_nll(i, &agent.mu[f], &agent.b[f], &future)? / t_pre),
        SelectionMetric::Au => Ok(agent.b[f].iter().map(|b| b[0] + b[1]).sum::<f64>() / t_pre),
    }
}

/// Mean scenario value over a client's data under the given model.
pub fn client_value(
    metric: SelectionMetric,
    params: &ParamVector,
    dataset: &ClientDataset,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::validation(format!(
            "client {} holds no scenarios",
            dataset.client_id
        )));
    }
    let mut sum = 0.0;
    for s in &dataset.scenarios {
        sum += scenario_value(metric, &forward(params, s)?, s)?;
    }
    Ok(sum / dataset.len() as f64)
}

fn check_k(values: &[(usize, f64)], k: usize) -> Result<()> {
    if k > values.len() {
        return Err(Error::validation(format!(
            "cannot select {k} clients out of {} candidates",
            values.len()
        )));
    }
    Ok(())
}

/// The `k` candidates with the largest values, highest first; ties go to the
/// smaller client id.
pub fn select_nll(values: &[(usize, f64)], k: usize) -> Result<Vec<usize>> {
    check_k(values, k)?;
    let mut ranked = values.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(k).map(|(id, _)| id).collect())
}

/// Middle value, or the mean of the two middle values for an even count.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// The `k` candidates whose values lie closest to the median, closest first;
/// ties go to the smaller client id.
pub fn select_au(values: &[(usize, f64)], k: usize) -> Result<Vec<usize>> {
    check_k(values, k)?;
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let raw: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
    let med = median(&raw);
    let mut ranked: Vec<(usize, f64)> = values.iter().map(|&(id, v)| (id, (v - med).abs())).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(k).map(|(id, _)| id).collect())
}

pub fn select(metric: SelectionMetric, values: &[(usize, f64)], k: usize) -> Result<Vec<usize>> {
    match metric {
        SelectionMetric::Nll => select_nll(values, k),
        SelectionMetric::Au => select_au(values, k),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlConfig {
    /// Fraction of clients drawn as candidates per round.
    pub f2: f64,
    pub metric: SelectionMetric,
    pub fl: FlConfig,
}

impl AlConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        self.fl.validate(num_clients)?;
        if !(self.f2 > 0.0 && self.f2 <= 1.0) {
            return Err(Error::validation(format!("f2 must lie in (0, 1], got {}", self.f2)));
        }
        if fraction_count(self.f2, num_clients) < self.fl.clients_per_round(num_clients) {
            return Err(Error::validation(format!(
                "f2 = {} yields fewer candidates than f1 = {} selects",
                self.f2, self.fl.f1
            )));
        }
        Ok(())
    }
}

/// Federated training with active client selection.
///
/// Round 1 samples clients exactly as plain federated averaging does. From
/// round 2 on, candidates are sampled, valued against the previous global
/// model, and the trained set is chosen among them. Clients outside the
/// candidate set appear in the log with value 0 but never compete.
pub fn run_alfltp(
    data: &[ClientDataset],
    config: &AlConfig,
    w0: ParamVector,
    validation: Option<&[Scenario]>,
) -> Result<(ParamVector, Vec<RoundLog>)> {
    validate_data(data)?;
    config.validate(data.len())?;
    let fl = &config.fl;
    let sizes = client_sizes(data);
    let k = fl.clients_per_round(data.len());
    let k2 = fraction_count(config.f2, data.len());
    let mut w = w0;
    let mut log = Vec::with_capacity(fl.rounds);
    for round in 1..=fl.rounds {
        let mut rng = rng_from_seed(server_seed(fl.seed, round));
        let (selected, candidates, values) = if round == 1 {
            (sample_weighted(&sizes, k, &mut rng)?, Vec::new(), BTreeMap::new())
        } else {
            let mut candidates = sample_weighted(&sizes, k2, &mut rng)?;
            candidates.sort_unstable();
            let scored: Vec<(usize, f64)> = candidates
                .par_iter()
                .map(|&c| client_value(config.metric, &w, &data[c]).map(|v| (c, v)))
                .collect::<Result<_>>()?;
            let selected = select(config.metric, &scored, k)?;
            let mut values: BTreeMap<usize, f64> = (0..data.len()).map(|c| (c, 0.0)).collect();
            values.extend(scored.iter().copied());
            (selected, candidates, values)
        };
        w = train_selected(data, &selected, &w, fl, round)?;
        log.push(RoundLog {
            round,
            selected,
            candidates,
            values,
            metrics: round_metrics(fl, round, &w, validation)?,
        });
    }
    Ok((w, log))
}
