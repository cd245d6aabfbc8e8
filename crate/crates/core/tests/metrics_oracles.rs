//! Displacement metrics against direct recomputation.

mod common;

use common::{scenario, small_dims};
use fltp_core::metrics::{displacement_errors, endpoint_best_mode, MISS_THRESHOLD};
use fltp_core::rng::rng_from_seed;
use fltp_core::scenario::Point;
use fltp_core::{evaluate, init_params, Regime};
use proptest::prelude::*;
use rand::Rng;

fn shifted(truth: &[Point], end_err: f64) -> Vec<Point> {
    // Error ramps linearly to `end_err` along x at the final step.
    let n = truth.len() as f64;
    truth
        .iter()
        .enumerate()
        .map(|(t, p)| [p[0] + end_err * (t as f64 + 1.0) / n, p[1]])
        .collect()
}

#[test]
fn perfect_prediction_scores_zero() {
    let y = vec![[0.5, 0.1], [1.0, 0.3], [1.4, 0.2]];
    let e = displacement_errors(&[shifted(&y, 7.0), y.clone()], &y);
    assert_eq!((e.ade, e.fde, e.miss), (0.0, 0.0, false));
}

#[test]
fn miss_threshold_rule() {
    let y = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
    assert!(displacement_errors(&[shifted(&y, 3.0), shifted(&y, 5.0)], &y).miss);
    let e = displacement_errors(&[shifted(&y, 1.9), shifted(&y, 5.0)], &y);
    assert!(!e.miss);
    assert!((e.fde - 1.9).abs() < 1e-12);
    assert!(!displacement_errors(&[shifted(&y, MISS_THRESHOLD)], &y).miss);
}

fn random_modes(seed: u64, f: usize, t: usize) -> (Vec<Vec<Point>>, Vec<Point>) {
    let mut rng = rng_from_seed(seed);
    let mut pt = || [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
    let y: Vec<Point> = (0..t).map(|_| pt()).collect();
    let modes = (0..f).map(|_| (0..t).map(|_| pt()).collect()).collect();
    (modes, y)
}

proptest! {
    #[test]
    fn ade_fde_match_recomputation(seed in any::<u64>(), f in 1usize..7, t in 1usize..12) {
        let (modes, y) = random_modes(seed, f, t);
        let e = displacement_errors(&modes, &y);
        let ends: Vec<f64> = modes
            .iter()
            .map(|m| ((m[t - 1][0] - y[t - 1][0]).powi(2) + (m[t - 1][1] - y[t - 1][1]).powi(2)).sqrt())
            .collect();
        let min_end = ends.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((e.fde - min_end).abs() < 1e-12);
        let best = endpoint_best_mode(&modes, &y);
        prop_assert_eq!(ends[best], min_end);
        let ade: f64 = (0..t)
            .map(|k| ((modes[best][k][0] - y[k][0]).powi(2) + (modes[best][k][1] - y[k][1]).powi(2)).sqrt())
            .sum::<f64>()
            / t as f64;
        prop_assert!((e.ade - ade).abs() < 1e-12);
        prop_assert_eq!(e.miss, ends.iter().all(|&d| d > MISS_THRESHOLD));
    }

    #[test]
    fn translation_invariant(seed in any::<u64>(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let (modes, y) = random_modes(seed, 3, 5);
        let mv = |p: &Point| [p[0] + dx, p[1] + dy];
        let modes2: Vec<Vec<Point>> = modes.iter().map(|m| m.iter().map(mv).collect()).collect();
        let y2: Vec<Point> = y.iter().map(mv).collect();
        let (a, b) = (displacement_errors(&modes, &y), displacement_errors(&modes2, &y2));
        prop_assert!((a.ade - b.ade).abs() < 1e-9 && (a.fde - b.fde).abs() < 1e-9);
    }
}

#[test]
fn evaluate_is_translation_invariant_and_averages() {
    let params = init_params(5, small_dims()).unwrap();
    let scenarios: Vec<_> = (0..6)
        .map(|s| scenario(s, 1 + s as usize % 3, if s % 2 == 0 { Regime::A } else { Regime::B }))
        .collect();
    let r = evaluate(&params, &scenarios).unwrap();
    assert_eq!(r.n_scenarios, 6);
    assert!((0.0..=1.0).contains(&r.mr));
    assert!(r.min_fde >= 0.0 && r.min_ade >= 0.0 && r.nll.is_finite());
    let moved: Vec<_> = scenarios.iter().map(|s| s.translated([123.0, -45.0])).collect();
    let m = evaluate(&params, &moved).unwrap();
    assert!((r.min_ade - m.min_ade).abs() < 1e-9);
    assert!((r.min_fde - m.min_fde).abs() < 1e-9);
    assert!((r.nll - m.nll).abs() < 1e-9);
    assert_eq!(r.mr, m.mr);
    let singles: f64 = scenarios.iter().map(|s| evaluate(&params, std::slice::from_ref(s)).unwrap().min_ade).sum();
    assert!((singles / 6.0 - r.min_ade).abs() < 1e-12);
    assert!(evaluate(&params, &[]).is_err());
}
