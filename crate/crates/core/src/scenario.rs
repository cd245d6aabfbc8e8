//! Driving scenarios and the synthetic non-IID generator.
//!
//! Each client lives in one of two traffic regimes: regime A produces straight
//! constant-speed tracks, regime B mixes straight tracks with constant-rate
//! turns. The first half of the clients draw from A, the second half from B.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, TAG_CLIENT_DATA};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub observed: Vec<Point>,
    pub future: Vec<Point>,
}

impl AgentTrack {
    pub fn last_observed(&self) -> Point {
        *self.observed.last().expect("observed track is never empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scenario_id: u64,
    pub agents: Vec<AgentTrack>,
    pub target_index: usize,
}

impl Scenario {
    pub fn target(&self) -> &AgentTrack {
        &self.agents[self.target_index]
    }

    /// Checks the structural invariants against the expected track lengths.
    pub fn validate(&self, t_obs: usize, t_pre: usize) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::validation(format!(
                "scenario {} has no agents",
                self.scenario_id
            )));
        }
        if self.target_index >= self.agents.len() {
            return Err(Error::validation(format!(
                "scenario {}: target index {} out of range for {} agents",
                self.scenario_id,
                self.target_index,
                self.agents.len()
            )));
        }
        for agent in &self.agents {
            if agent.observed.len() != t_obs {
                return Err(Error::DimensionMismatch {
                    what: "observed track length",
                    expected: t_obs,
                    found: agent.observed.len(),
                });
            }
            if agent.future.len() != t_pre {
                return Err(Error::DimensionMismatch {
                    what: "future track length",
                    expected: t_pre,
                    found: agent.future.len(),
                });
            }
            let finite = agent
                .observed
                .iter()
                .chain(&agent.future)
                .all(|p| p[0].is_finite() && p[1].is_finite());
            if !finite {
                return Err(Error::validation(format!(
                    "scenario {} has non-finite coordinates",
                    self.scenario_id
                )));
            }
        }
        Ok(())
    }

    /// Future tracks of every agent expressed relative to that agent's last
    /// observed position, the frame the predictor works in.
    pub fn centered_futures(&self) -> Vec<Vec<Point>> {
        self.agents
            .iter()
            .map(|a| {
                let c = a.last_observed();
                a.future.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect()
            })
            .collect()
    }

    /// Copy of the scenario with every coordinate shifted by `offset`.
    pub fn translated(&self, offset: Point) -> Scenario {
        let shift = |p: &Point| [p[0] + offset[0], p[1] + offset[1]];
        Scenario {
            scenario_id: self.scenario_id,
            target_index: self.target_index,
            agents: self
                .agents
                .iter()
                .map(|a| AgentTrack {
                    observed: a.observed.iter().map(shift).collect(),
                    future: a.future.iter().map(shift).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Straight, constant-velocity traffic.
    A,
    /// Half of the agents turn at a constant rate.
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub scenarios: Vec<Scenario>,
    pub regime: Regime,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn validate(&self, t_obs: usize, t_pre: usize) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::validation(format!(
                "client {} holds no scenarios",
                self.client_id
            )));
        }
        let mut seen = HashSet::with_capacity(self.scenarios.len());
        for s in &self.scenarios {
            if !seen.insert(s.scenario_id) {
                return Err(Error::validation(format!(
                    "client {}: duplicate scenario id {}",
                    self.client_id, s.scenario_id
                )));
            }
            s.validate(t_obs, t_pre)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub num_clients: usize,
    pub scenarios_per_client: usize,
    pub agents_min: usize,
    pub agents_max: usize,
    /// Sampling interval in seconds.
    pub dt: f64,
    pub t_obs: usize,
    pub t_pre: usize,
    /// Standard deviation of the additive position noise, meters.
    pub noise_sigma: f64,
    pub position_range: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Largest absolute turn rate in regime B, radians per step.
    pub max_turn_rate: f64,
    /// Probability that a regime-B agent turns.
    pub turn_probability: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_clients: 20,
            scenarios_per_client: 100,
            agents_min: 1,
            agents_max: 4,
            dt: 0.1,
            t_obs: 20,
            t_pre: 30,
            noise_sigma: 0.05,
            position_range: 50.0,
            speed_min: 5.0,
            speed_max: 15.0,
            max_turn_rate: 0.15,
            turn_probability: 0.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents_min < 1 {
            return Err(Error::validation("agents_min must be at least 1"));
        }
        if self.agents_max < self.agents_min {
            return Err(Error::validation("agents_max must be >= agents_min"));
        }
        if self.agents_max > u16::MAX as usize {
            return Err(Error::validation("agents_max exceeds 65535"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("dt must be positive"));
        }
        if self.t_obs < 2 {
            return Err(Error::validation("t_obs must be at least 2"));
        }
        if self.t_pre < 1 {
            return Err(Error::validation("t_pre must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::validation("noise_sigma must be finite and >= 0"));
        }
        if !(self.speed_min <= self.speed_max && self.speed_min.is_finite()) {
            return Err(Error::validation("speed range is invalid"));
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return Err(Error::validation("turn_probability must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.t_obs + self.t_pre
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Simulates one scenario of unicycle agents. The target is always agent 0.
pub fn generate_scenario<R: Rng + ?Sized>(
    rng: &mut R,
    regime: Regime,
    config: &GeneratorConfig,
    scenario_id: u64,
) -> Scenario {
    let m = rng.random_range(config.agents_min..=config.agents_max);
    let noise = Normal::new(0.0, config.noise_sigma).expect("noise sigma validated upstream");
    let steps = config.total_steps();
    let step_len_scale = config.dt;
    let agents = (0..m)
        .map(|_| {
            let r = config.position_range;
            let mut pos = [uniform(rng, -r, r), uniform(rng, -r, r)];
            let speed = uniform(rng, config.speed_min, config.speed_max);
            let mut heading = uniform(rng, 0.0, 2.0 * PI);
            let turn_rate = match regime {
                Regime::A => 0.0,
                Regime::B => {
                    if rng.random_bool(config.turn_probability) {
                        uniform(rng, -config.max_turn_rate, config.max_turn_rate)
                    } else {
                        0.0
                    }
                }
            };
            let step = speed * step_len_scale;
            let mut track = Vec::with_capacity(steps);
            for _ in 0..steps {
                let (nx, ny) = if config.noise_sigma > 0.0 {
                    (noise.sample(rng), noise.sample(rng))
                } else {
                    (0.0, 0.0)
                };
                track.push([pos[0] + nx, pos[1] + ny]);
                pos[0] += step * heading.cos();
                pos[1] += step * heading.sin();
                heading += turn_rate;
            }
            let future = track.split_off(config.t_obs);
            AgentTrack {
                observed: track,
                future,
            }
        })
        .collect();
    Scenario {
        scenario_id,
        agents,
        target_index: 0,
    }
}

/// Regime of a client under the half-and-half split.
pub fn regime_of(client_id: usize, num_clients: usize) -> Regime {
    if client_id < num_clients / 2 {
        Regime::A
    } else {
        Regime::B
    }
}

/// Generates the dataset of one client. Depends only on the config and the
/// client id, so clients can be generated in any order.
pub fn generate_client(config: &GeneratorConfig, client_id: usize) -> ClientDataset {
    let regime = regime_of(client_id, config.num_clients);
    let mut rng = rng_from_seed(derive_seed(&[
        config.seed,
        TAG_CLIENT_DATA,
        client_id as u64,
    ]));
    let base = (client_id * config.scenarios_per_client) as u64;
    let scenarios = (0..config.scenarios_per_client)
        .map(|k| generate_scenario(&mut rng, regime, config, base + k as u64))
        .collect();
    ClientDataset {
        client_id,
        scenarios,
        regime,
    }
}

/// Builds all client datasets: the first half regime A, the second half regime B.
pub fn partition_clients(config: &GeneratorConfig) -> Result<Vec<ClientDataset>> {
    config.validate()?;
    if config.num_clients == 0 || config.num_clients % 2 != 0 {
        return Err(Error::validation(format!(
            "num_clients must be a positive even number, got {}",
            config.num_clients
        )));
    }
    if config.scenarios_per_client == 0 {
        return Err(Error::validation("scenarios_per_client must be at least 1"));
    }
    Ok((0..config.num_clients)
        .map(|c| generate_client(config, c))
        .collect())
}

/// Held-out evaluation data: two clients (one per regime) drawn from a seed
/// disjoint from the training one.
pub fn validation_split(
    config: &GeneratorConfig,
    per_regime: usize,
) -> Result<Vec<ClientDataset>> {
    let cfg = GeneratorConfig {
        seed: config.seed.wrapping_add(1),
        num_clients: 2,
        scenarios_per_client: per_regime,
        ..config.clone()
    };
    partition_clients(&cfg)
}

/// All scenarios of a dataset list, in client order.
pub fn flatten(datasets: &[ClientDataset]) -> Vec<Scenario> {
    datasets
        .iter()
        .flat_map(|d| d.scenarios.iter().cloned())
        .collect()
}
