//! Hand-checkable one-dimensional problems.

use std::sync::Arc;

use super::functions::{AffineMap, ZeroSmooth};
use crate::problem::{CompositeProblem, KnownOptimum, Mapping, Matrix, ProxTerm, SmoothFunction, SmoothTerm, Vector};
use crate::prox::{HalfSquaredNorm, MaxOfCoords, ZeroFunction};

fn identity_map(rows: &[f64]) -> Mapping {
    let k = Matrix::from_column_slice(rows.len(), 1, rows);
    let m_gi: Vec<f64> = rows.iter().map(|r| r.abs()).collect();
    let l_gi = vec![0.0; rows.len()];
    let b = Vector::zeros(rows.len());
    Mapping::new(Arc::new(AffineMap { k, b }), m_gi, l_gi, true, None).expect("valid constants")
}

fn zero_terms() -> (SmoothTerm, ProxTerm) {
    (
        SmoothTerm::new(Arc::new(ZeroSmooth), 0.0, 0.0).expect("valid constants"),
        ProxTerm::new(Arc::new(ZeroFunction), 0.0, 0.0).expect("valid constants"),
    )
}

/// `min_x H(x)` with `H(s) = s^2 / 2`, i.e. the saddle problem
/// `min_x max_y x y - y^2 / 2` with saddle point `(0, 0)` and `P* = 0`.
///
/// `H` has no finite Lipschitz constant, so theorem certificates that need
/// `M_H` are unavailable here; see [`build_max_toy`].
pub fn build_bilinear_toy() -> CompositeProblem {
    let (f, h) = zero_terms();
    let outer = ProxTerm::new(Arc::new(HalfSquaredNorm), 1.0, f64::INFINITY).expect("valid constants");
    CompositeProblem::new("toy", f, h, outer, identity_map(&[1.0]), 1).expect("valid problem").with_optimum(
        KnownOptimum {
            x: Vector::zeros(1),
            y: Some(Vector::zeros(1)),
            value: 0.0,
            accuracy: 0.0,
            method: "analytic".into(),
        },
    )
}

/// `min_x max(x, -x) = |x|` with `g(x) = (x, -x)` and `H = max`, so `M_H = 1`.
/// Saddle point `x* = 0`, `y* = (1/2, 1/2)`.
pub fn build_max_toy() -> CompositeProblem {
    let (f, h) = zero_terms();
    let outer = ProxTerm::new(Arc::new(MaxOfCoords), 0.0, 1.0).expect("valid constants");
    CompositeProblem::new("toy_max", f, h, outer, identity_map(&[1.0, -1.0]), 1).expect("valid problem").with_optimum(
        KnownOptimum {
            x: Vector::zeros(1),
            y: Some(Vector::from_vec(vec![0.5, 0.5])),
            value: 0.0,
            accuracy: 0.0,
            method: "analytic".into(),
        },
    )
}

struct PoisonedGradient;

impl SmoothFunction for PoisonedGradient {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        Vector::from_element(x.len(), f64::NAN)
    }
}

/// The bilinear toy with an `f` whose gradient is NaN. Exercises divergence handling.
pub fn build_nan_fault() -> CompositeProblem {
    let f = SmoothTerm::new(Arc::new(PoisonedGradient), 1.0, 0.0).expect("valid constants");
    let h = ProxTerm::new(Arc::new(ZeroFunction), 0.0, 0.0).expect("valid constants");
    let outer = ProxTerm::new(Arc::new(MaxOfCoords), 0.0, 1.0).expect("valid constants");
    CompositeProblem::new("nan_fault", f, h, outer, identity_map(&[1.0, -1.0]), 1).expect("valid problem")
}
