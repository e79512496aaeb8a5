//! Binary classification with several data distributions:
//!
//! ```text
//! min_x (reg / 2) |x|^2 + max_i (1/N_i) sum_j log(1 + exp(1 + a_j^T x))
//! ```
//!
//! where each `a_j` is a feature vector multiplied by its `+-1` label.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::functions::{LogisticMean, ScaledSquaredNorm, StackedMap};
use super::oracle::zoom_simplex_min;
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::problem::{CompositeProblem, KnownOptimum, Mapping, Matrix, ProxTerm, SmoothFunction, SmoothTerm, Vector};
use crate::prox::{project_simplex, MaxOfCoords, ZeroFunction};
use crate::sample_rng;

pub const DEFAULT_REG: f64 = 0.01;

/// One group of samples: features (one per row) and their labels.
pub type Dataset = (Matrix, Vector);

fn groups_from(datasets: &[Dataset]) -> Result<Vec<LogisticMean>> {
    if datasets.is_empty() {
        return invalid("need at least one dataset");
    }
    let p = datasets[0].0.ncols();
    let mut groups = Vec::with_capacity(datasets.len());
    for (i, (features, labels)) in datasets.iter().enumerate() {
        if features.nrows() == 0 {
            return invalid(format!("dataset {i} is empty"));
        }
        if features.ncols() != p {
            return invalid(format!("dataset {i} has {} features, expected {p}", features.ncols()));
        }
        if labels.len() != features.nrows() {
            return invalid(format!("dataset {i} has {} labels for {} rows", labels.len(), features.nrows()));
        }
        let mut a = features.clone();
        for (mut row, &z) in a.row_iter_mut().zip(labels.iter()) {
            row *= z;
        }
        groups.push(LogisticMean { a, offset: 1.0 });
    }
    Ok(groups)
}

pub fn build_multidist_logistic(datasets: &[Dataset], reg: f64) -> Result<CompositeProblem> {
    if !(reg > 0.0 && reg.is_finite()) {
        return invalid(format!("regularisation must be positive, got {reg}"));
    }
    let groups = groups_from(datasets)?;
    let p = groups[0].a.ncols();
    let m_gi: Vec<f64> = groups.iter().map(LogisticMean::slope_bound).collect();
    let l_gi: Vec<f64> = groups.iter().map(LogisticMean::curvature_bound).collect();
    let f = SmoothTerm::new(Arc::new(ScaledSquaredNorm(reg)), reg, reg)?;
    let h = ProxTerm::new(Arc::new(ZeroFunction), 0.0, 0.0)?;
    let outer = ProxTerm::new(Arc::new(MaxOfCoords), 0.0, 1.0)?;
    let g = Mapping::new(Arc::new(StackedMap { parts: groups }), m_gi, l_gi, false, None)?;
    CompositeProblem::new("classification", f, h, outer, g, p)
}

/// Gaussian groups with means `(3 / sqrt 2) e_i`, so distinct groups sit 3
/// units apart, labelled by a shared random hyperplane plus noise.
pub fn synth_data(p: usize, n_groups: usize, per_group: usize, seed: u64) -> Vec<Dataset> {
    let mut rng = sample_rng(seed, 0);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    let w: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
    let spread = 3.0 / 2f64.sqrt();
    (0..n_groups)
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64 + 1);
            let mut mean = vec![0.0; p];
            if let Some(q) = i.checked_div(p) {
                mean[i % p] = spread * (1 + q) as f64;
            }
            let features = Matrix::from_fn(per_group, p, |_, j| mean[j] + normal(&mut rng));
            let labels = Vector::from_fn(per_group, |r, _| {
                let score: f64 = features.row(r).iter().zip(&w).map(|(a, b)| a * b).sum();
                if score + 0.5 * normal(&mut rng) >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            });
            (features, labels)
        })
        .collect()
}

struct Inner {
    x: Vector,
    lower_bound: f64,
}

/// Newton's method on the strongly convex `(reg/2)|x|^2 + sum_i y_i g_i(x)`.
/// The lower bound `phi(x) - |grad|^2 / (2 reg)` is valid by strong convexity.
fn inner_newton(groups: &[LogisticMean], reg: f64, y: &Vector) -> Inner {
    let p = groups[0].a.ncols();
    let phi = |x: &Vector| {
        0.5 * reg * x.norm_squared()
            + groups.iter().zip(y.iter()).filter(|(_, &w)| w != 0.0).map(|(g, &w)| w * g.value(x)).sum::<f64>()
    };
    let grad = |x: &Vector| {
        let mut out = x * reg;
        for (g, &w) in groups.iter().zip(y.iter()) {
            if w != 0.0 {
                out.axpy(w, &g.gradient(x), 1.0);
            }
        }
        out
    };
    let mut x = Vector::zeros(p);
    let mut fx = phi(&x);
    for _ in 0..200 {
        let gx = grad(&x);
        if gx.norm() <= 1e-14 {
            break;
        }
        let mut hess = Matrix::identity(p, p) * reg;
        for (g, &w) in groups.iter().zip(y.iter()) {
            if w != 0.0 {
                hess += g.hessian(&x) * w;
            }
        }
        let dir = match hess.cholesky() {
            Some(ch) => -ch.solve(&gx),
            None => -&gx,
        };
        let slope = gx.dot(&dir);
        if -slope <= 1e-28 * (1.0 + fx.abs()) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-20 {
            let cand = &x + &dir * t;
            let fc = phi(&cand);
            if fc <= fx + 1e-4 * t * slope {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let gx = grad(&x);
    Inner { lower_bound: fx - gx.norm_squared() / (2.0 * reg), x }
}

/// Dual-based solution oracle. The dual function
/// `G(y) = min_x (reg/2)|x|^2 + <y, g(x)>` is maximised over the simplex by
/// accelerated projected gradient ascent, stopped once a Newton solve of the
/// active-set optimality system closes the gap. A zooming grid backs this up
/// for up to three groups. The reported accuracy is the duality gap.
pub fn classification_oracle(datasets: &[Dataset], reg: f64, exec: Execution) -> Result<KnownOptimum> {
    let groups = groups_from(datasets)?;
    let n = groups.len();
    let certify = |y_dual: &Vector| certify_dual(&groups, reg, y_dual);
    let mut best = certify(&dual_ascent(&groups, reg, &|y| certify(y).gap() <= 1e-13));
    if best.gap() > 1e-10 && n <= 3 {
        let y_grid = zoom_simplex_min(n, |y| -inner_newton(&groups, reg, y).lower_bound, 0.05, 1e-5, exec).0;
        let alt = certify(&y_grid);
        if alt.gap() < best.gap() {
            best = alt;
        }
    }
    let Certified { value, x: x_star, y: y_star, lower } = best;
    let accuracy = (value - lower).max(f64::EPSILON * (1.0 + value.abs()));
    if accuracy > 1e-8 {
        log::warn!("classification oracle duality gap {accuracy:.3e} exceeds 1e-8");
    }
    Ok(KnownOptimum {
        x: x_star,
        y: Some(y_star),
        value,
        accuracy,
        method: "dual maximisation with Newton inner solves".into(),
    })
}

struct Certified {
    value: f64,
    x: Vector,
    y: Vector,
    lower: f64,
}

impl Certified {
    fn gap(&self) -> f64 {
        self.value - self.lower
    }
}

/// Primal point and dual lower bound at `y_dual`, polished by [`refine_kkt`]
/// when that tightens the gap.
fn certify_dual(groups: &[LogisticMean], reg: f64, y_dual: &Vector) -> Certified {
    let primal =
        |x: &Vector| 0.5 * reg * x.norm_squared() + groups.iter().map(|g| g.value(x)).fold(f64::NEG_INFINITY, f64::max);
    let inner = inner_newton(groups, reg, y_dual);
    let mut best =
        Certified { value: primal(&inner.x), x: inner.x.clone(), y: y_dual.clone(), lower: inner.lower_bound };
    if let Some((x, y)) = refine_kkt(groups, reg, &inner.x, y_dual) {
        let lower = inner_newton(groups, reg, &y).lower_bound;
        let cand = Certified { value: primal(&x), x, y, lower };
        if cand.gap() < best.gap() {
            best = cand;
        }
    }
    best
}

/// Newton's method on the optimality system of `min (reg/2)|x|^2 + max_i g_i(x)`
/// restricted to the groups active at the approximate dual point:
///
/// ```text
/// reg x + sum_A lam_i grad g_i(x) = 0,   sum_A lam_i = 1,   g_i(x) = g_j(x) for i, j in A
/// ```
///
/// Returns `None` unless it converges to nonnegative multipliers.
fn refine_kkt(groups: &[LogisticMean], reg: f64, x0: &Vector, y0: &Vector) -> Option<(Vector, Vector)> {
    let active: Vec<usize> = (0..groups.len()).filter(|&i| y0[i] > 1e-9).collect();
    let (p, m) = (x0.len(), active.len());
    if m == 0 {
        return None;
    }
    let mut x = x0.clone();
    let mut lam = Vector::from_iterator(m, active.iter().map(|&i| y0[i]));
    lam /= lam.sum();
    let residual = |x: &Vector, lam: &Vector| {
        let mut r = Vector::zeros(p + m);
        let mut stat = x * reg;
        for (k, &i) in active.iter().enumerate() {
            stat.axpy(lam[k], &groups[i].gradient(x), 1.0);
        }
        r.rows_mut(0, p).copy_from(&stat);
        r[p] = lam.sum() - 1.0;
        let g0 = groups[active[0]].value(x);
        for (k, &i) in active.iter().enumerate().skip(1) {
            r[p + k] = groups[i].value(x) - g0;
        }
        r
    };
    let mut r = residual(&x, &lam);
    for _ in 0..50 {
        if r.norm() <= 1e-14 {
            break;
        }
        let mut jac = Matrix::zeros(p + m, p + m);
        let mut hess = Matrix::identity(p, p) * reg;
        let grads: Vec<Vector> = active.iter().map(|&i| groups[i].gradient(&x)).collect();
        for (k, &i) in active.iter().enumerate() {
            hess += groups[i].hessian(&x) * lam[k];
            jac.view_mut((0, p + k), (p, 1)).copy_from(&grads[k]);
            jac[(p, p + k)] = 1.0;
        }
        jac.view_mut((0, 0), (p, p)).copy_from(&hess);
        for k in 1..m {
            jac.view_mut((p + k, 0), (1, p)).copy_from(&(&grads[k] - &grads[0]).transpose());
        }
        let d = jac.lu().solve(&(-&r))?;
        x += d.rows(0, p);
        lam += d.rows(p, m);
        let r_new = residual(&x, &lam);
        if !r_new.iter().all(|v| v.is_finite()) {
            return None;
        }
        r = r_new;
    }
    if r.norm() > 1e-10 || lam.min() < -1e-12 {
        return None;
    }
    let mut y = Vector::zeros(groups.len());
    for (k, &i) in active.iter().enumerate() {
        y[i] = lam[k].max(0.0);
    }
    y /= y.sum();
    Some((x, y))
}

/// Accelerated projected gradient ascent on the smooth concave dual function.
/// Its gradient at `y` is `g(x(y))` with `x(y)` the inner minimiser.
fn dual_ascent(groups: &[LogisticMean], reg: f64, done: &dyn Fn(&Vector) -> bool) -> Vector {
    let n = groups.len();
    let eval = |y: &Vector| {
        let inner = inner_newton(groups, reg, y);
        let g = Vector::from_iterator(n, groups.iter().map(|gi| gi.value(&inner.x)));
        (inner.lower_bound, g, inner.x)
    };
    let mut y = Vector::from_element(n, 1.0 / n as f64);
    let (mut gy, _, _) = eval(&y);
    let mut z = y.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    for it in 0..20_000 {
        if it % 25 == 24 && done(&y) {
            break;
        }
        let (gz, grad, _) = eval(&z);
        let mut y_new;
        loop {
            y_new = project_simplex(&(&z + &grad / lip)).expect("finite iterate");
            let d = &y_new - &z;
            let (g_new, _, _) = eval(&y_new);
            if g_new >= gz + grad.dot(&d) - 0.5 * lip * d.norm_squared() - 1e-15 || lip > 1e12 {
                break;
            }
            lip *= 2.0;
        }
        let (g_new, _, x_new) = eval(&y_new);
        if g_new < gy {
            z = y.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &y_new + (&y_new - &y) * ((t - 1.0) / t_new);
        t = t_new;
        let moved = (&y_new - &y).norm();
        y = y_new;
        gy = g_new;
        lip *= 0.9;
        let primal =
            0.5 * reg * x_new.norm_squared() + groups.iter().map(|g| g.value(&x_new)).fold(f64::NEG_INFINITY, f64::max);
        if primal - gy <= 1e-11 || moved == 0.0 {
            break;
        }
    }
    y
}

pub fn build_classification_with_oracle(datasets: &[Dataset], reg: f64, exec: Execution) -> Result<CompositeProblem> {
    let prob = build_multidist_logistic(datasets, reg)?;
    let opt = classification_oracle(datasets, reg, exec)?;
    Ok(prob.with_optimum(opt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups_collapse_to_single_loss() {
        let features = Matrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let labels = Vector::from_element(1, -1.0);
        let data = vec![(features.clone(), labels.clone()), (features.clone(), labels.clone())];
        let prob = build_multidist_logistic(&data, DEFAULT_REG).unwrap();
        let single = build_multidist_logistic(&data[..1], DEFAULT_REG).unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [3.0, 0.5]] {
            let x = Vector::from_row_slice(&x);
            let a = prob.evaluate_primal(&x).unwrap();
            let b = single.evaluate_primal(&x).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_empty_or_mismatched_data() {
        assert!(build_multidist_logistic(&[], DEFAULT_REG).is_err());
        let empty = (Matrix::zeros(0, 2), Vector::zeros(0));
        assert!(build_multidist_logistic(&[empty], DEFAULT_REG).is_err());
        let a = (Matrix::zeros(1, 2), Vector::zeros(1));
        let b = (Matrix::zeros(1, 3), Vector::zeros(1));
        assert!(build_multidist_logistic(&[a, b], DEFAULT_REG).is_err());
    }

    #[test]
    fn synthetic_data_is_deterministic_and_separated() {
        let a = synth_data(10, 3, 50, 7);
        let b = synth_data(10, 3, 50, 7);
        assert_eq!(a, b);
        let prob = build_multidist_logistic(&a, DEFAULT_REG).unwrap();
        let mut rng = sample_rng(99, 0);
        let x = Vector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = prob.g.apply(&x);
        assert!((g[0] - g[1]).abs() > 1e-3 && (g[1] - g[2]).abs() > 1e-3);
    }

    #[test]
    fn oracle_gap_is_small() {
        let data = synth_data(10, 3, 50, 7);
        let opt = classification_oracle(&data, DEFAULT_REG, Execution::default()).unwrap();
        assert!(opt.accuracy <= 1e-8, "gap {}", opt.accuracy);
    }

    #[test]
    fn ascent_path_matches_grid_path() {
        let data = synth_data(4, 3, 20, 3);
        let groups = groups_from(&data).unwrap();
        let y_grid =
            zoom_simplex_min(3, |y| -inner_newton(&groups, 0.05, y).lower_bound, 0.02, 1e-12, Execution::default()).0;
        let y_ascent = dual_ascent(&groups, 0.05, &|_| false);
        let g = |y: &Vector| inner_newton(&groups, 0.05, y).lower_bound;
        assert!((g(&y_grid) - g(&y_ascent)).abs() < 1e-9);
    }
}
