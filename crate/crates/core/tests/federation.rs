//! Server loop identities: aggregation oracle, degenerate federations,
//! active-selection protocol and scheduling invariance.

mod common;

use std::collections::BTreeMap;

use common::{client, small_dims, small_gen};
use fltp_core::rng::{client_seed, rng_from_seed};
use fltp_core::scenario::flatten;
use fltp_core::{
    aggregate, client_update, init_params, partition_clients, run_alfltp, run_fltp, AlConfig,
    ClientDataset, FlConfig, ParamVector, SelectionMetric, TrainHyper,
};
use proptest::prelude::*;

fn small_fl(rounds: usize, f1: f64) -> FlConfig {
    FlConfig {
        rounds,
        f1,
        seed: 11,
        hyper: TrainHyper {
            eta: 1e-2,
            batch_size: 4,
            epochs: 2,
            ..TrainHyper::default()
        },
        eval_every: 1,
    }
}

fn data(num_clients: usize, k: usize) -> Vec<ClientDataset> {
    let cfg = fltp_core::GeneratorConfig {
        num_clients,
        scenarios_per_client: k,
        ..small_gen(5)
    };
    partition_clients(&cfg).unwrap()
}

proptest! {
    #[test]
    fn aggregate_matches_weighted_mean(
        vals in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 7), 1..6),
        sizes in prop::collection::vec(1usize..200, 6),
    ) {
        let models: BTreeMap<usize, ParamVector> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| (i * 3, ParamVector { dims: small_dims(), values: v.clone() }))
            .collect();
        let size_map: BTreeMap<usize, usize> = (0..vals.len()).map(|i| (i * 3, sizes[i])).collect();
        let got = aggregate(&models, &size_map).unwrap();
        let total: f64 = (0..vals.len()).map(|i| sizes[i] as f64).sum();
        for j in 0..7 {
            let oracle: f64 = (0..vals.len()).map(|i| vals[i][j] * sizes[i] as f64).sum::<f64>() / total;
            prop_assert!((got.values[j] - oracle).abs() < 1e-12);
        }
        let weights: f64 = (0..vals.len()).map(|i| sizes[i] as f64 / total).sum();
        prop_assert!((weights - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_models_are_a_fixed_point(
        v in prop::collection::vec(-10.0f64..10.0, 9),
        sizes in prop::collection::vec(1usize..500, 2..8),
    ) {
        let p = ParamVector { dims: small_dims(), values: v.clone() };
        let models: BTreeMap<usize, ParamVector> = (0..sizes.len()).map(|i| (i, p.clone())).collect();
        let size_map: BTreeMap<usize, usize> = sizes.iter().copied().enumerate().collect();
        let got = aggregate(&models, &size_map).unwrap();
        for (a, b) in got.values.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn single_client_equals_sequential_updates() {
    let d = vec![client(3, 0, 9)];
    let cfg = small_fl(3, 1.0);
    let w0 = init_params(1, small_dims()).unwrap();
    let (w, log) = run_fltp(&d, &cfg, w0.clone(), None).unwrap();
    let mut seq = w0;
    for r in 1..=3 {
        seq = client_update(&seq, &d[0], &cfg.hyper, &mut rng_from_seed(client_seed(cfg.seed, r, 0))).unwrap();
    }
    assert_eq!(w.values, seq.values);
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|l| l.selected == vec![0] && l.metrics.is_none()));
}

#[test]
fn identical_clients_full_batch_equal_one_update() {
    let shared = client(4, 0, 8);
    let d: Vec<ClientDataset> = (0..4)
        .map(|c| ClientDataset { client_id: c, ..shared.clone() })
        .collect();
    let mut cfg = small_fl(1, 1.0);
    cfg.hyper.epochs = 1;
    cfg.hyper.batch_size = 1000;
    let w0 = init_params(2, small_dims()).unwrap();
    let (w, log) = run_fltp(&d, &cfg, w0.clone(), None).unwrap();
    let mut sel = log[0].selected.clone();
    sel.sort();
    assert_eq!(sel, vec![0, 1, 2, 3]);
    let single = client_update(&w0, &shared, &cfg.hyper, &mut rng_from_seed(99)).unwrap();
    let max = w.values.iter().zip(&single.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(max < 1e-12, "{max}");
}

#[test]
fn zero_rounds_is_a_no_op() {
    let d = data(4, 3);
    let w0 = init_params(3, small_dims()).unwrap();
    let (w, log) = run_fltp(&d, &small_fl(0, 0.5), w0.clone(), None).unwrap();
    assert_eq!(w, w0);
    assert!(log.is_empty());
}

#[test]
fn fltp_round_sizes_and_metrics_cadence() {
    let d = data(6, 4);
    let val = flatten(&d[..1]);
    let mut cfg = small_fl(4, 0.5);
    cfg.eval_every = 2;
    let (_, log) = run_fltp(&d, &cfg, init_params(3, small_dims()).unwrap(), Some(&val)).unwrap();
    for l in &log {
        let mut s = l.selected.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 3);
        assert_eq!(l.metrics.is_some(), l.round % 2 == 0);
    }
}

#[test]
fn rejects_misordered_clients() {
    let mut d = data(4, 3);
    d.swap(0, 1);
    let r = run_fltp(&d, &small_fl(1, 0.5), init_params(3, small_dims()).unwrap(), None);
    assert!(r.is_err());
}

fn al(metric: SelectionMetric, f1: f64, f2: f64, rounds: usize) -> AlConfig {
    AlConfig { f2, metric, fl: small_fl(rounds, f1) }
}

#[test]
fn alfltp_protocol() {
    let d = data(10, 4);
    for metric in [SelectionMetric::Nll, SelectionMetric::Au] {
        let (w, log) = run_alfltp(&d, &al(metric, 0.2, 0.5, 4), init_params(6, small_dims()).unwrap(), None).unwrap();
        assert!(w.is_finite());
        assert!(log[0].candidates.is_empty());
        assert_eq!(log[0].selected.len(), 2);
        for l in &log[1..] {
            assert_eq!(l.candidates.len(), 5);
            assert_eq!(l.selected.len(), 2);
            assert!(l.selected.iter().all(|c| l.candidates.contains(c)));
            assert_eq!(l.values.len(), 10);
            for (c, v) in &l.values {
                if !l.candidates.contains(c) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }
}

#[test]
fn equal_fractions_select_every_candidate() {
    let d = data(6, 3);
    let (_, log) = run_alfltp(&d, &al(SelectionMetric::Nll, 0.5, 0.5, 3), init_params(6, small_dims()).unwrap(), None).unwrap();
    for l in &log[1..] {
        let mut s = l.selected.clone();
        s.sort();
        assert_eq!(s, l.candidates);
    }
}

#[test]
fn identical_clients_tie_to_lowest_ids() {
    let shared = client(8, 0, 3);
    let d: Vec<ClientDataset> = (0..6)
        .map(|c| ClientDataset { client_id: c, ..shared.clone() })
        .collect();
    for metric in [SelectionMetric::Nll, SelectionMetric::Au] {
        let (_, log) = run_alfltp(&d, &al(metric, 1.0 / 3.0, 2.0 / 3.0, 3), init_params(6, small_dims()).unwrap(), None).unwrap();
        for l in &log[1..] {
            assert_eq!(l.selected, l.candidates[..2].to_vec());
        }
    }
}

#[test]
fn alfltp_rejects_too_few_candidates() {
    let d = data(10, 3);
    let r = run_alfltp(&d, &al(SelectionMetric::Au, 0.3, 0.2, 2), init_params(6, small_dims()).unwrap(), None);
    assert!(r.is_err());
}

#[test]
fn output_independent_of_thread_count() {
    let d = data(6, 4);
    let w0 = init_params(7, small_dims()).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let f = run_fltp(&d, &small_fl(3, 0.5), w0.clone(), None).unwrap();
            let a = run_alfltp(&d, &al(SelectionMetric::Au, 0.5, 1.0, 3), w0.clone(), None).unwrap();
            (f, a)
        })
    };
    assert_eq!(run(1), run(4));
}
