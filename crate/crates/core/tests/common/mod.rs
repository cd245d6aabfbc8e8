#![allow(dead_code)]

use fltp_core::rng::rng_from_seed;
use fltp_core::scenario::{generate_client, generate_scenario};
use fltp_core::{ClientDataset, GeneratorConfig, ModelDims, Regime, Scenario};

pub fn small_dims() -> ModelDims {
    ModelDims {
        t_obs: 5,
        t_pre: 4,
        modes: 2,
        hidden: 8,
    }
}

pub fn small_gen(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        num_clients: 4,
        scenarios_per_client: 6,
        t_obs: 5,
        t_pre: 4,
        ..GeneratorConfig::default()
    }
}

pub fn scenario(seed: u64, m: usize, regime: Regime) -> Scenario {
    let cfg = GeneratorConfig {
        agents_min: m,
        agents_max: m,
        ..small_gen(seed)
    };
    generate_scenario(&mut rng_from_seed(seed), regime, &cfg, seed)
}

pub fn client(seed: u64, id: usize, k: usize) -> ClientDataset {
    let cfg = GeneratorConfig {
        scenarios_per_client: k,
        ..small_gen(seed)
    };
    generate_client(&cfg, id)
}
