//! Analytic gradients against central finite differences.
//!
//! The best mode and the soft classification targets are stop-gradient
//! constants, so the finite-difference oracle differentiates the loss with
//! both frozen at the unperturbed parameters.

mod common;

use common::{scenario, small_dims};
use fltp_core::rng::rng_from_seed;
use fltp_core::objective::{best_mode, classification_loss, regression_loss, soft_targets};
use fltp_core::{forward, init_params, loss_and_grad, total_loss, ParamVector, Regime, Scenario};
use rand::Rng;

/// Per-scenario best modes and soft targets at `params`.
type Frozen = Vec<(Vec<usize>, Vec<Vec<f64>>)>;

fn freeze(params: &ParamVector, batch: &[Scenario]) -> Frozen {
    batch
        .iter()
        .map(|s| {
            let out = forward(params, s).unwrap();
            let y = s.centered_futures();
            (best_mode(&out, &y), soft_targets(&out, &y))
        })
        .collect()
}

fn frozen_loss(params: &ParamVector, batch: &[Scenario], frozen: &Frozen) -> f64 {
    let mut sum = 0.0;
    for (s, (f_best, targets)) in batch.iter().zip(frozen) {
        let out = forward(params, s).unwrap();
        let y = s.centered_futures();
        let probs: Vec<Vec<f64>> = out.agents.iter().map(|a| a.mode_probs.clone()).collect();
        sum += regression_loss(&out, &y, f_best).unwrap() + classification_loss(&probs, targets);
    }
    sum / batch.len() as f64
}

fn max_rel_error(params: &ParamVector, batch: &[Scenario]) -> f64 {
    let (l, grad) = loss_and_grad(params, batch).unwrap();
    let frozen = freeze(params, batch);
    let direct: f64 =
        batch.iter().map(|s| total_loss(&forward(params, s).unwrap(), s).unwrap().total).sum::<f64>()
            / batch.len() as f64;
    assert!((l - direct).abs() < 1e-12);
    assert!((frozen_loss(params, batch, &frozen) - direct).abs() < 1e-12);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for k in 0..params.len() {
        let orig = p.values[k];
        p.values[k] = orig + h;
        let up = frozen_loss(&p, batch, &frozen);
        p.values[k] = orig - h;
        let down = frozen_loss(&p, batch, &frozen);
        p.values[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = grad.values[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Random parameters with biases perturbed away from zero.
fn random_params(seed: u64) -> ParamVector {
    let mut p = init_params(seed, small_dims()).unwrap();
    let mut rng = rng_from_seed(seed ^ 0xABCD);
    for v in p.values.iter_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    p
}

#[test]
fn gradient_matches_finite_differences() {
    for draw in 0..20u64 {
        let params = random_params(draw);
        let regime = if draw % 2 == 0 { Regime::A } else { Regime::B };
        let s = scenario(1000 + draw, 3, regime);
        let err = max_rel_error(&params, &[s]);
        assert!(err <= 1e-4, "draw {draw}: max relative error {err}");
    }
}

#[test]
fn gradient_of_batch_matches_finite_differences() {
    let params = random_params(77);
    let batch = [scenario(1, 1, Regime::A), scenario(2, 4, Regime::B)];
    let err = max_rel_error(&params, &batch);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn batch_gradient_is_mean_of_scenario_gradients() {
    let params = random_params(5);
    let a = scenario(10, 2, Regime::A);
    let b = scenario(11, 3, Regime::B);
    let (la, ga) = loss_and_grad(&params, std::slice::from_ref(&a)).unwrap();
    let (lb, gb) = loss_and_grad(&params, std::slice::from_ref(&b)).unwrap();
    let (l, g) = loss_and_grad(&params, &[a, b]).unwrap();
    assert!((l - (la + lb) / 2.0).abs() < 1e-12);
    for ((x, y), z) in ga.values.iter().zip(&gb.values).zip(&g.values) {
        assert!(((x + y) / 2.0 - z).abs() < 1e-12);
    }
}

#[test]
fn duplicating_batch_leaves_loss_and_grad_unchanged() {
    let params = random_params(6);
    let batch = vec![scenario(20, 2, Regime::A), scenario(21, 3, Regime::B)];
    let doubled: Vec<Scenario> = batch.iter().chain(&batch).cloned().collect();
    let (l1, g1) = loss_and_grad(&params, &batch).unwrap();
    let (l2, g2) = loss_and_grad(&params, &doubled).unwrap();
    assert!((l1 - l2).abs() < 1e-12 * l1.abs().max(1.0));
    for (x, y) in g1.values.iter().zip(&g2.values) {
        assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn forward_is_pure_and_translation_covariant() {
    let params = random_params(9);
    let s = scenario(30, 3, Regime::B);
    let before = params.clone();
    let a = forward(&params, &s).unwrap();
    assert_eq!(params, before);
    let b = forward(&params, &s.translated([123.25, -987.5])).unwrap();
    for (x, y) in a.agents.iter().zip(&b.agents) {
        for (p, q) in x.mu.iter().flatten().zip(y.mu.iter().flatten()) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
        for (p, q) in x.b.iter().flatten().zip(y.b.iter().flatten()) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
        for (p, q) in x.mode_probs.iter().zip(&y.mode_probs) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}
