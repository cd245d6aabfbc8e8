//! Server side of federated training: weighted client sampling, broadcast,
//! parallel local updates and data-volume weighted averaging.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::predictor::ParamVector;
use crate::rng::{client_seed, rng_from_seed, server_seed};
use crate::scenario::{ClientDataset, Scenario};
use crate::trainer::{client_update, TrainHyper};

#[derive(Debug, Clone, PartialEq)]
pub struct FlConfig {
    pub rounds: usize,
    /// Fraction of clients trained per round.
    pub f1: f64,
    pub seed: u64,
    pub hyper: TrainHyper,
    /// Attach validation metrics every this many rounds.
    pub eval_every: usize,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            rounds: 250,
            f1: 0.1,
            seed: 0,
            hyper: TrainHyper::default(),
            eval_every: 1,
        }
    }
}

/// `floor(fraction * total)`, tolerant of products like `0.29 * 100` that land
/// just below an integer.
pub fn fraction_count(fraction: f64, total: usize) -> usize {
    (fraction * total as f64 + 1e-9).floor() as usize
}

impl FlConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if !(self.f1 > 0.0 && self.f1 <= 1.0) {
            return Err(Error::validation(format!("f1 must lie in (0, 1], got {}", self.f1)));
        }
        if fraction_count(self.f1, num_clients) < 1 {
            return Err(Error::validation(format!(
                "f1 = {} selects no client out of {num_clients}",
                self.f1
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::validation("eval_every must be at least 1"));
        }
        self.hyper.validate()
    }

    pub fn clients_per_round(&self, num_clients: usize) -> usize {
        fraction_count(self.f1, num_clients)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    /// Clients trained this round.
    pub selected: Vec<usize>,
    /// Candidate set; empty when selection was purely random.
    pub candidates: Vec<usize>,
    /// Selection values reported to the server; empty when unused.
    pub values: BTreeMap<usize, f64>,
    pub metrics: Option<EvalReport>,
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

impl RoundLog {
    pub const CSV_HEADER: &'static str = "round,candidates,selected,values";

    /// One line of the round log CSV, without the trailing newline.
    pub fn csv_row(&self) -> String {
        let mut values = String::new();
        for (i, (id, v)) in self.values.iter().enumerate() {
            if i > 0 {
                values.push(';');
            }
            write!(values, "{id}:{v}").unwrap();
        }
        format!(
            "{},{},{},{}",
            self.round,
            join_ids(&self.candidates),
            join_ids(&self.selected),
            values
        )
    }
}

/// Draws `n` distinct clients one at a time, each with probability
/// proportional to its data size among the clients not yet drawn.
pub fn sample_weighted<R: Rng + ?Sized>(sizes: &[usize], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n > sizes.len() {
        return Err(Error::validation(format!(
            "cannot draw {n} clients out of {}",
            sizes.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::validation("every client must hold at least one scenario"));
    }
    let mut remaining: Vec<usize> = (0..sizes.len()).collect();
    let mut drawn = Vec::with_capacity(n);
    for _ in 0..n {
        let total: usize = remaining.iter().map(|&c| sizes[c]).sum();
        let mut ticket = rng.random_range(0..total);
        let pos = remaining
            .iter()
            .position(|&c| {
                if ticket < sizes[c] {
                    true
                } else {
                    ticket -= sizes[c];
                    false
                }
            })
            .expect("ticket below total");
        drawn.push(remaining.remove(pos));
    }
    Ok(drawn)
}

/// Weighted average of client models with weights `K_c / sum K`, accumulated
/// in ascending client id order.
pub fn aggregate(
    models: &BTreeMap<usize, ParamVector>,
    sizes: &BTreeMap<usize, usize>,
) -> Result<ParamVector> {
    let mut iter = models.iter();
    let (id0, first) = iter
        .next()
        .ok_or_else(|| Error::validation("cannot aggregate an empty model set"))?;
    let mut total = 0usize;
    for id in models.keys() {
        total += *sizes
            .get(id)
            .ok_or_else(|| Error::validation(format!("no data size for client {id}")))?;
    }
    let weight = |id: &usize| sizes[id] as f64 / total as f64;
    let w0 = weight(id0);
    let mut acc = ParamVector {
        dims: first.dims,
        values: first.values.iter().map(|v| w0 * v).collect(),
    };
    for (id, m) in iter {
        if m.len() != first.len() {
            return Err(Error::DimensionMismatch {
                what: "client model length",
                expected: first.len(),
                found: m.len(),
            });
        }
        let w = weight(id);
        for (a, v) in acc.values.iter_mut().zip(&m.values) {
            *a += w * v;
        }
    }
    Ok(acc)
}

pub(crate) fn validate_data(data: &[ClientDataset]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::validation("no client datasets"));
    }
    for (i, d) in data.iter().enumerate() {
        if d.client_id != i {
            return Err(Error::validation(format!(
                "client datasets must be ordered by id: position {i} holds client {}",
                d.client_id
            )));
        }
        if d.is_empty() {
            return Err(Error::validation(format!("client {i} holds no scenarios")));
        }
    }
    Ok(())
}

pub(crate) fn client_sizes(data: &[ClientDataset]) -> Vec<usize> {
    data.iter().map(ClientDataset::len).collect()
}

/// Trains the selected clients from `w_prev` in parallel and averages the results.
pub(crate) fn train_selected(
    data: &[ClientDataset],
    selected: &[usize],
    w_prev: &ParamVector,
    config: &FlConfig,
    round: usize,
) -> Result<ParamVector> {
    let results: Vec<(usize, Result<ParamVector>)> = selected
        .par_iter()
        .map(|&c| {
            let mut rng = rng_from_seed(client_seed(config.seed, round, c));
            (c, client_update(w_prev, &data[c], &config.hyper, &mut rng))
        })
        .collect();
    let mut models = BTreeMap::new();
    let mut sizes = BTreeMap::new();
    for (c, r) in results {
        let w = r.map_err(|e| Error::Client {
            round,
            client: c,
            source: Box::new(e),
        })?;
        models.insert(c, w);
        sizes.insert(c, data[c].len());
    }
    aggregate(&models, &sizes)
}

pub(crate) fn round_metrics(
    config: &FlConfig,
    round: usize,
    w: &ParamVector,
    validation: Option<&[Scenario]>,
) -> Result<Option<EvalReport>> {
    match validation {
        Some(v) if round % config.eval_every == 0 => evaluate(w, v).map(Some),
        _ => Ok(None),
    }
}

/// Federated averaging with AdamW local updates.
///
/// Validation metrics of the aggregated model are attached to every
/// `eval_every`-th round when a validation set is given.
pub fn run_fltp(
    data: &[ClientDataset],
    config: &FlConfig,
    w0: ParamVector,
    validation: Option<&[Scenario]>,
) -> Result<(ParamVector, Vec<RoundLog>)> {
    validate_data(data)?;
    config.validate(data.len())?;
    let sizes = client_sizes(data);
    let k = config.clients_per_round(data.len());
    let mut w = w0;
    let mut log = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        let mut rng = rng_from_seed(server_seed(config.seed, round));
        let selected = sample_weighted(&sizes, k, &mut rng)?;
        w = train_selected(data, &selected, &w, config, round)?;
        log.push(RoundLog {
            round,
            selected,
            candidates: Vec::new(),
            values: BTreeMap::new(),
            metrics: round_metrics(config, round, &w, validation)?,
        });
    }
    Ok((w, log))
}

/// Baseline without federation: one client keeps training on its own data,
/// one client update per round.
pub fn run_local(
    data: &[ClientDataset],
    client: usize,
    config: &FlConfig,
    w0: ParamVector,
    validation: Option<&[Scenario]>,
) -> Result<(ParamVector, Vec<RoundLog>)> {
    validate_data(data)?;
    config.hyper.validate()?;
    if config.eval_every == 0 {
        return Err(Error::validation("eval_every must be at least 1"));
    }
    if client >= data.len() {
        return Err(Error::validation(format!(
            "local client {client} out of range for {} clients",
            data.len()
        )));
    }
    let mut w = w0;
    let mut log = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        w = train_selected(data, &[client], &w, config, round)?;
        log.push(RoundLog {
            round,
            selected: vec![client],
            candidates: Vec::new(),
            values: BTreeMap::new(),
            metrics: round_metrics(config, round, &w, validation)?,
        });
    }
    Ok((w, log))
}
