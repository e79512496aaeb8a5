//! Building blocks shared by the instances.

use crate::problem::{Matrix, SmoothFunction, Vector, VectorMap};

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-t})` without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `x -> 0.5 x^T Q x + q^T x`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub q_mat: Matrix,
    pub q_vec: Vector,
}

impl SmoothFunction for QuadraticForm {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q_mat * x)) + self.q_vec.dot(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.q_mat * x + &self.q_vec
    }
}

/// `x -> (weight / 2) |x|^2`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledSquaredNorm(pub f64);

impl SmoothFunction for ScaledSquaredNorm {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * self.0 * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        x * self.0
    }
}

/// `x -> 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroSmooth;

impl SmoothFunction for ZeroSmooth {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }
    fn gradient(&self, x: &Vector) -> Vector {
        Vector::zeros(x.len())
    }
}

/// Mean logistic loss `x -> (1/N) sum_j log(1 + exp(offset + a_j^T x))` over the rows of `a`.
#[derive(Debug, Clone)]
pub struct LogisticMean {
    pub a: Matrix,
    pub offset: f64,
}

impl LogisticMean {
    fn margins(&self, x: &Vector) -> Vector {
        (&self.a * x).add_scalar(self.offset)
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        let w = self.margins(x).map(|t| {
            let s = sigmoid(t);
            s * (1.0 - s)
        });
        let n = self.a.nrows() as f64;
        let mut weighted = self.a.clone();
        for (mut row, wi) in weighted.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        self.a.transpose() * weighted / n
    }

    /// `(1/(4N)) sum_j |a_j|^2`, a bound on the Hessian norm.
    pub fn curvature_bound(&self) -> f64 {
        self.a.norm_squared() / (4.0 * self.a.nrows() as f64)
    }

    /// `max_j |a_j|`, a bound on the gradient norm.
    pub fn slope_bound(&self) -> f64 {
        self.a.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }
}

impl SmoothFunction for LogisticMean {
    fn value(&self, x: &Vector) -> f64 {
        let m = self.margins(x);
        m.iter().map(|&t| softplus(t)).sum::<f64>() / self.a.nrows() as f64
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let s = self.margins(x).map(sigmoid);
        self.a.tr_mul(&s) / self.a.nrows() as f64
    }
}

/// `x -> K x - b`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub k: Matrix,
    pub b: Vector,
}

impl VectorMap for AffineMap {
    fn apply(&self, x: &Vector) -> Vector {
        &self.k * x - &self.b
    }
    fn jacobian_transpose_apply(&self, _x: &Vector, y: &Vector) -> Vector {
        self.k.tr_mul(y)
    }
}

/// Stacks scalar smooth functions into a map `x -> (g_1(x), ..., g_n(x))`.
pub struct StackedMap<F: SmoothFunction> {
    pub parts: Vec<F>,
}

impl<F: SmoothFunction> VectorMap for StackedMap<F> {
    fn apply(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.parts.len(), self.parts.iter().map(|g| g.value(x)))
    }
    fn jacobian_transpose_apply(&self, x: &Vector, y: &Vector) -> Vector {
        let mut out = Vector::zeros(x.len());
        for (g, &yi) in self.parts.iter().zip(y.iter()) {
            if yi != 0.0 {
                out.axpy(yi, &g.gradient(x), 1.0);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_in_both_tails() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn logistic_hessian_matches_gradient_differences() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.3, -1.0, 1.5]);
        let f = LogisticMean { a, offset: 1.0 };
        let x = Vector::from_vec(vec![0.2, -0.4]);
        let h = f.hessian(&x);
        let eps = 1e-6;
        for j in 0..2 {
            let mut up = x.clone();
            up[j] += eps;
            let mut down = x.clone();
            down[j] -= eps;
            let col = (f.gradient(&up) - f.gradient(&down)) / (2.0 * eps);
            assert!((col - h.column(j)).norm() < 1e-8);
        }
        assert!(h.symmetric_eigenvalues().max() <= f.curvature_bound());
    }
}
