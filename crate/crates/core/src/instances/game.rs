//! Convex-concave game on simplices:
//!
//! ```text
//! min_{x in simplex_p} max_{y in simplex_n} (1/N) sum_j log(1 + exp(a_j^T x)) + sum_i b_i y_i / (1 + x_i)
//! ```

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::functions::LogisticMean;
use super::oracle::zoom_simplex_min;
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::problem::{CompositeProblem, KnownOptimum, Mapping, Matrix, ProxTerm, SmoothTerm, Vector, VectorMap};
use crate::prox::{MaxOfCoords, SimplexIndicator};
use crate::sample_rng;

/// `g_i(x) = b_i / (1 + x_i)` for `i < n`.
#[derive(Debug, Clone)]
pub struct InverseShift {
    pub b: Vector,
}

impl VectorMap for InverseShift {
    fn apply(&self, x: &Vector) -> Vector {
        Vector::from_fn(self.b.len(), |i, _| self.b[i] / (1.0 + x[i]))
    }
    fn jacobian_transpose_apply(&self, x: &Vector, y: &Vector) -> Vector {
        let mut out = Vector::zeros(x.len());
        for i in 0..self.b.len() {
            let d = 1.0 + x[i];
            out[i] = -self.b[i] * y[i] / (d * d);
        }
        out
    }
}

/// Builds the game from data `a` (one sample per row) and payoffs `b >= 0`.
/// The oracle is not attached; see [`attach_game_oracle`].
pub fn build_game(a: &Matrix, b: &Vector) -> Result<CompositeProblem> {
    let p = a.ncols();
    let n = b.len();
    if a.nrows() == 0 || p == 0 {
        return invalid("game data matrix must be nonempty");
    }
    if n == 0 || n > p {
        return invalid(format!("need 1 <= n <= p, got n = {n}, p = {p}"));
    }
    if let Some(bad) = b.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
        return invalid(format!("payoffs b must be finite and nonnegative, got {bad}"));
    }
    let spectral_sq = (a.transpose() * a).symmetric_eigenvalues().max().max(0.0);
    let l_f = spectral_sq / (4.0 * a.nrows() as f64);
    let f = SmoothTerm::new(Arc::new(LogisticMean { a: a.clone(), offset: 0.0 }), l_f, 0.0)?;
    let h = ProxTerm::new(Arc::new(SimplexIndicator), 0.0, f64::INFINITY)?;
    let outer = ProxTerm::new(Arc::new(MaxOfCoords), 0.0, 1.0)?;
    let m_gi: Vec<f64> = b.iter().map(|v| v.abs()).collect();
    let l_gi: Vec<f64> = b.iter().map(|v| 2.0 * v.abs()).collect();
    let g = Mapping::new(Arc::new(InverseShift { b: b.clone() }), m_gi, l_gi, false, Some(b.norm()))?;
    Ok(CompositeProblem::new("game", f, h, outer, g, p)?.with_conjugate_lipschitz(1.0))
}

/// Gaussian data with `samples` rows and payoffs drawn uniformly from `[0, 1)`.
pub fn random_game_data(p: usize, n: usize, samples: usize, seed: u64) -> (Matrix, Vector) {
    let mut rng = sample_rng(seed, 0);
    let a = Matrix::from_fn(samples, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = Vector::from_fn(n, |_, _| rng.random::<f64>());
    (a, b)
}

struct InnerSolution {
    x: Vector,
    lower_bound: f64,
}

/// Minimises `f(x) + <y, g(x)>` over the simplex by Newton's method on every
/// face (the objective is strictly convex and `p` is small), and returns the
/// candidate with the best Frank-Wolfe lower bound on the optimal value.
fn inner_min_on_simplex(prob: &CompositeProblem, y: &Vector) -> InnerSolution {
    let p = prob.dim_p;
    let phi = |x: &Vector| prob.f.value(x) + y.dot(&prob.g.apply(x));
    let grad = |x: &Vector| prob.f.gradient(x) + prob.g.jacobian_transpose_apply(x, y);
    let mut best = InnerSolution { x: Vector::from_element(p, 1.0 / p as f64), lower_bound: f64::NEG_INFINITY };
    for mask in 1u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let x = newton_on_face(&phi, &grad, p, &support);
        let gx = grad(&x);
        let fw_gap = (gx.dot(&x) - gx.min()).max(0.0);
        let lb = phi(&x) - fw_gap;
        if lb > best.lower_bound {
            best = InnerSolution { x, lower_bound: lb };
        }
    }
    best
}

/// Damped Newton on the relative interior of the face spanned by `support`,
/// in coordinates `x = e_m + sum_j t_j (e_j - e_m)`. Steps are cut to stay
/// inside the face.
fn newton_on_face<P, G>(phi: &P, grad: &G, p: usize, support: &[usize]) -> Vector
where
    P: Fn(&Vector) -> f64,
    G: Fn(&Vector) -> Vector,
{
    let m = support.len();
    let mut x = Vector::zeros(p);
    for &i in support {
        x[i] = 1.0 / m as f64;
    }
    if m == 1 {
        return x;
    }
    let last = support[m - 1];
    // basis of the face directions
    let basis: Vec<Vector> = support[..m - 1]
        .iter()
        .map(|&j| {
            let mut d = Vector::zeros(p);
            d[j] = 1.0;
            d[last] = -1.0;
            d
        })
        .collect();
    let reduced_grad = |x: &Vector| {
        let g = grad(x);
        Vector::from_iterator(m - 1, basis.iter().map(|d| d.dot(&g)))
    };
    let mut fx = phi(&x);
    for _ in 0..100 {
        let rg = reduced_grad(&x);
        let hstep = 1e-6;
        let mut hess = Matrix::zeros(m - 1, m - 1);
        for (c, d) in basis.iter().enumerate() {
            let col = (reduced_grad(&(&x + d * hstep)) - reduced_grad(&(&x - d * hstep))) / (2.0 * hstep);
            hess.set_column(c, &col);
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let dir_t = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&rg),
            None => -rg.clone(),
        };
        let mut dir = Vector::zeros(p);
        for (t, d) in dir_t.iter().zip(&basis) {
            dir.axpy(*t, d, 1.0);
        }
        // largest step keeping the support strictly positive
        let mut alpha: f64 = 1.0;
        for &i in support {
            if dir[i] < 0.0 {
                alpha = alpha.min(0.99 * x[i] / -dir[i]);
            }
        }
        let slope = rg.dot(&dir_t);
        if !(slope < 0.0) || alpha <= 0.0 {
            break;
        }
        let mut accepted = false;
        while alpha > 1e-20 {
            let cand = &x + &dir * alpha;
            let fc = phi(&cand);
            if fc <= fx + 1e-4 * alpha * slope {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || (&dir * alpha).norm() <= 1e-15 {
            break;
        }
    }
    x
}

/// Solution oracle for problems `min_{x in simplex_p} f(x) + max_i g_i(x)`
/// with `p, n <= 3`.
///
/// The primal value comes from a zooming grid on the simplex. The dual point
/// maximises a certified lower bound of `min_x f(x) + <y, g(x)>` over a
/// zooming grid on `simplex_n`. The reported accuracy is the resulting
/// duality gap.
pub fn simplex_grid_oracle(prob: &CompositeProblem, exec: Execution) -> Result<KnownOptimum> {
    if prob.dim_p > 3 || prob.dim_n > 3 {
        return invalid(format!("grid oracle supports p, n <= 3 (got p = {}, n = {})", prob.dim_p, prob.dim_n));
    }
    let primal = |x: &Vector| prob.objective_f(x) + prob.outer.value(&prob.g.apply(x));
    let (x_star, p_val) = zoom_simplex_min(prob.dim_p, primal, 1e-3, 1e-13, exec);
    let (y_star, neg_dual) =
        zoom_simplex_min(prob.dim_n, |y| -inner_min_on_simplex(prob, y).lower_bound, 0.05, 1e-11, exec);
    let accuracy = (p_val + neg_dual).max(f64::EPSILON * (1.0 + p_val.abs()));
    if accuracy > 1e-6 {
        log::warn!("game oracle duality gap {accuracy:.3e} exceeds 1e-6");
    }
    Ok(KnownOptimum {
        x: x_star,
        y: Some(y_star),
        value: p_val,
        accuracy,
        method: "zooming grid with dual certificate".into(),
    })
}

/// Builds the game and attaches its grid oracle.
pub fn build_game_with_oracle(a: &Matrix, b: &Vector, exec: Execution) -> Result<CompositeProblem> {
    let prob = build_game(a, b)?;
    let opt = simplex_grid_oracle(&prob, exec)?;
    Ok(prob.with_optimum(opt))
}

/// The inner minimiser of `f(x) + <y, g(x)>` on the simplex, exposed for tests.
pub fn game_inner_minimizer(prob: &CompositeProblem, y: &Vector) -> (Vector, f64) {
    let s = inner_min_on_simplex(prob, y);
    (s.x, s.lower_bound)
}
