//! Cross-checks of the solution oracles against independent computations.

use proptest::prelude::*;
use slpd::instances::{build_classification_with_oracle, build_game_with_oracle, random_game_data, synth_data};
use slpd::metrics::{dual_value, fit_rate_slope, DualOracle};
use slpd::{Execution, Matrix, Vector};

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn game_value(a: &Matrix, b: &Vector, x: &Vector) -> f64 {
    let loss = (0..a.nrows()).map(|j| softplus((0..a.ncols()).map(|c| a[(j, c)] * x[c]).sum())).sum::<f64>()
        / a.nrows() as f64;
    let payoff = (0..b.len()).map(|i| b[i] / (1.0 + x[i])).fold(f64::NEG_INFINITY, f64::max);
    loss + payoff
}

fn simplex_point(w: &[f64]) -> Vector {
    let s: f64 = w.iter().sum();
    Vector::from_iterator(w.len(), w.iter().map(|v| v / s))
}

#[test]
fn game_primal_matches_the_defining_formula() {
    let (a, b) = random_game_data(3, 3, 20, 11);
    let prob = build_game_with_oracle(&a, &b, Execution::Sequential).unwrap();
    for w in [[1.0, 1.0, 1.0], [0.2, 0.5, 0.3], [1.0, 0.0, 0.0], [0.0, 0.7, 0.3]] {
        let x = simplex_point(&w);
        assert!((prob.evaluate_primal(&x).unwrap() - game_value(&a, &b, &x)).abs() <= 1e-13);
    }
}

#[test]
fn game_optimum_survives_a_fine_independent_scan() {
    let (a, b) = random_game_data(3, 3, 20, 11);
    let prob = build_game_with_oracle(&a, &b, Execution::Sequential).unwrap();
    let opt = prob.optimum.clone().unwrap();
    assert!(opt.accuracy <= 1e-6);
    let n = 400;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let x = Vector::from_vec(vec![i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64]);
            best = best.min(game_value(&a, &b, &x));
        }
    }
    assert!(best >= opt.value - opt.accuracy, "scan {best} below P* {}", opt.value);
    assert!(best - opt.value <= 1e-3, "scan {best} vs P* {}", opt.value);
    assert!((game_value(&a, &b, &opt.x) - opt.value).abs() <= 1e-12);
}

/// Fixed-step gradient descent on `(reg/2)|x|^2 + sum_i y_i g_i(x)`, written
/// against the raw data.
fn weighted_inner_min(data: &[(Matrix, Vector)], reg: f64, y: &Vector, iters: usize) -> (Vector, f64) {
    let p = data[0].0.ncols();
    let lip = reg
        + data.iter().zip(y.iter()).map(|((m, _), &w)| w * m.norm_squared() / (4.0 * m.nrows() as f64)).sum::<f64>();
    let objective = |x: &Vector| {
        let mut v = 0.5 * reg * x.norm_squared();
        for ((m, z), &w) in data.iter().zip(y.iter()) {
            let mean = (0..m.nrows()).map(|r| softplus(1.0 + z[r] * m.row(r).transpose().dot(x))).sum::<f64>()
                / m.nrows() as f64;
            v += w * mean;
        }
        v
    };
    let mut x = Vector::zeros(p);
    for _ in 0..iters {
        let mut grad = &x * reg;
        for ((m, z), &w) in data.iter().zip(y.iter()) {
            for r in 0..m.nrows() {
                let row = m.row(r).transpose();
                let t = 1.0 + z[r] * row.dot(&x);
                let s = 1.0 / (1.0 + (-t).exp());
                grad.axpy(w * s * z[r] / m.nrows() as f64, &row, 1.0);
            }
        }
        x -= grad / lip;
    }
    let v = objective(&x);
    (x, v)
}

#[test]
fn classification_optimum_matches_independent_inner_solve() {
    let reg = 1.0;
    let data = synth_data(4, 3, 30, 5);
    let prob = build_classification_with_oracle(&data, reg, Execution::Sequential).unwrap();
    let opt = prob.optimum.clone().unwrap();
    let y = opt.y.clone().unwrap();
    let (x, dual) = weighted_inner_min(&data, reg, &y, 3000);
    assert!((&x - &opt.x).norm() <= 1e-8, "inner minimiser off by {}", (&x - &opt.x).norm());
    assert!((dual - opt.value).abs() <= 1e-8, "dual {dual} vs P* {}", opt.value);
}

#[test]
fn dual_value_at_the_dual_optimum_is_minus_p_star() {
    let (a, b) = random_game_data(3, 3, 20, 11);
    let game = build_game_with_oracle(&a, &b, Execution::Sequential).unwrap();
    let data = synth_data(10, 3, 50, 7);
    let cls = build_classification_with_oracle(&data, 0.01, Execution::Sequential).unwrap();
    for prob in [game, cls] {
        let opt = prob.optimum.clone().unwrap();
        let d = dual_value(&prob, opt.y.as_ref().unwrap(), &DualOracle::default()).unwrap();
        assert!((d + opt.value).abs() <= 1e-7, "{}: D(y*) = {d}, P* = {}", prob.name, opt.value);
    }
}

proptest! {
    #[test]
    fn slope_fit_recovers_power_laws(c in 0.1f64..10.0, rate in 0.5f64..2.5) {
        let pts: Vec<(usize, f64)> = (1..=10_000).map(|k| (k, c * (k as f64).powf(-rate))).collect();
        let s = fit_rate_slope(&pts, 100, 10_000).unwrap();
        prop_assert!((s + rate).abs() <= 1e-9);
    }

    #[test]
    fn slope_fit_ignores_upward_noise(rate in 0.5f64..2.0, seed in 0u64..1000) {
        let pts: Vec<(usize, f64)> = (1..=10_000)
            .map(|k| {
                let bump = if (k as u64 ^ seed).is_multiple_of(7) { 5.0 } else { 1.0 };
                (k, bump * (k as f64).powf(-rate))
            })
            .collect();
        let s = fit_rate_slope(&pts, 100, 10_000).unwrap();
        prop_assert!((s + rate).abs() <= 1e-2);
    }
}
