//! Brute-force searches used by the instance oracles.

use crate::exec::Execution;
use crate::problem::Vector;

/// Minimises `objective` over the unit simplex in `R^d` (`d <= 3`) by a grid
/// of spacing `base_step` followed by successively finer grids centred on the
/// incumbent. Stops once the spacing drops below `min_step`.
///
/// Ties are broken towards the earliest grid point, so the result does not
/// depend on the execution strategy.
pub fn zoom_simplex_min<F>(d: usize, objective: F, base_step: f64, min_step: f64, exec: Execution) -> (Vector, f64)
where
    F: Fn(&Vector) -> f64 + Sync + Send,
{
    assert!((1..=3).contains(&d), "grid search supports simplices of dimension at most 3");
    if d == 1 {
        let x = Vector::from_element(1, 1.0);
        let v = objective(&x);
        return (x, v);
    }
    let free = d - 1;
    let n = (1.0 / base_step).round() as i64;
    let mut points: Vec<Vec<f64>> = Vec::new();
    if free == 1 {
        points.extend((0..=n).map(|i| vec![i as f64 / n as f64]));
    } else {
        for i in 0..=n {
            for j in 0..=(n - i) {
                points.push(vec![i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
    }
    let (mut best, mut best_val) = best_of(&points, &objective, exec);
    let mut step = 1.0 / n as f64;
    const SHRINK: f64 = 3.0;
    const REACH: i64 = 5;
    while step > min_step {
        step /= SHRINK;
        let mut window = Vec::new();
        let offsets: Vec<i64> = (-REACH..=REACH).collect();
        if free == 1 {
            for &i in &offsets {
                window.push(vec![(best[0] + i as f64 * step).clamp(0.0, 1.0)]);
            }
        } else {
            for &i in &offsets {
                for &j in &offsets {
                    let a = (best[0] + i as f64 * step).clamp(0.0, 1.0);
                    let b = (best[1] + j as f64 * step).clamp(0.0, 1.0 - a);
                    window.push(vec![a, b]);
                }
            }
        }
        let (cand, val) = best_of(&window, &objective, exec);
        if val < best_val {
            best = cand;
            best_val = val;
        }
    }
    (lift(&best), best_val)
}

fn lift(free: &[f64]) -> Vector {
    let last = (1.0 - free.iter().sum::<f64>()).max(0.0);
    Vector::from_iterator(free.len() + 1, free.iter().copied().chain(std::iter::once(last)))
}

fn best_of<F>(points: &[Vec<f64>], objective: &F, exec: Execution) -> (Vec<f64>, f64)
where
    F: Fn(&Vector) -> f64 + Sync + Send,
{
    let values = exec.map_slice(points, |p| objective(&lift(p)));
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] || values[best].is_nan() {
            best = i;
        }
    }
    (points[best].clone(), values[best])
}
