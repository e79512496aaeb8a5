//! Proximal operators, projections, and the closed convex functions used by
//! the bundled instances.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{ProximableFunction, Vector};

/// Euclidean projection onto the unit simplex `{u >= 0, sum u = 1}`.
///
/// Sort-based thresholding; the descending sort is stable so ties keep their
/// original index order.
pub fn project_simplex(v: &Vector) -> Result<Vector> {
    if v.is_empty() {
        return invalid("cannot project an empty vector onto the simplex");
    }
    if v.iter().any(|a| !a.is_finite()) {
        return invalid("simplex projection input must be finite");
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
    }
    Ok(v.map(|a| (a - threshold).max(0.0)))
}

/// Prox of `lambda * max_i u_i`, via `v - lambda * proj_simplex(v / lambda)`.
pub fn prox_max_coords(v: &Vector, lambda: f64) -> Result<Vector> {
    if !(lambda > 0.0) {
        return invalid(format!("prox scale must be positive, got {lambda}"));
    }
    let p = project_simplex(&(v / lambda))?;
    Ok(v - p * lambda)
}

/// `prox_{rho H*}(v) = v - rho * prox_{H/rho}(v / rho)` (Moreau's identity).
pub fn prox_conjugate_moreau(outer: &dyn ProximableFunction, v: &Vector, rho: f64) -> Result<Vector> {
    if !(rho > 0.0) {
        return invalid(format!("rho must be positive, got {rho}"));
    }
    let inner = outer.prox(&(v / rho), 1.0 / rho);
    Ok(v - inner * rho)
}

pub fn soft_threshold(v: &Vector, lambda: f64) -> Result<Vector> {
    if !(lambda > 0.0) {
        return invalid(format!("threshold must be positive, got {lambda}"));
    }
    Ok(v.map(|a| a.signum() * (a.abs() - lambda).max(0.0)))
}

/// Closed convex cones with closed-form projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    /// `R^n_+`.
    Orthant,
    /// `{(t, u) : |u| <= t}` with `t` the first coordinate.
    SecondOrder,
    /// `{0}`.
    Zero,
    /// `R^n`, the dual of the zero cone.
    Free,
}

impl Cone {
    pub fn dual(self) -> Cone {
        match self {
            Cone::Orthant => Cone::Orthant,
            Cone::SecondOrder => Cone::SecondOrder,
            Cone::Zero => Cone::Free,
            Cone::Free => Cone::Zero,
        }
    }

    pub fn contains(self, v: &Vector, tol: f64) -> bool {
        match self {
            Cone::Orthant => v.iter().all(|&a| a >= -tol),
            Cone::SecondOrder => v.rows(1, v.len() - 1).norm() <= v[0] + tol,
            Cone::Zero => v.iter().all(|a| a.abs() <= tol),
            Cone::Free => true,
        }
    }
}

impl std::str::FromStr for Cone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Cone> {
        match s {
            "orthant" | "nonneg" => Ok(Cone::Orthant),
            "soc" | "second_order" => Ok(Cone::SecondOrder),
            "zero" => Ok(Cone::Zero),
            "free" => Ok(Cone::Free),
            other => invalid(format!("unknown cone tag `{other}`")),
        }
    }
}

/// Euclidean projection onto `cone`.
pub fn project_cone(v: &Vector, cone: Cone) -> Result<Vector> {
    if v.iter().any(|a| !a.is_finite()) {
        return invalid("cone projection input must be finite");
    }
    Ok(match cone {
        Cone::Orthant => v.map(|a| a.max(0.0)),
        Cone::Zero => Vector::zeros(v.len()),
        Cone::Free => v.clone(),
        Cone::SecondOrder => {
            if v.is_empty() {
                return invalid("second-order cone needs at least one coordinate");
            }
            let t = v[0];
            let u = v.rows(1, v.len() - 1);
            let nu = u.norm();
            if nu <= t {
                v.clone()
            } else if nu <= -t {
                Vector::zeros(v.len())
            } else {
                let scale = 0.5 * (t + nu);
                let mut out = Vector::zeros(v.len());
                out[0] = scale;
                out.rows_mut(1, v.len() - 1).copy_from(&(u * (scale / nu)));
                out
            }
        }
    })
}

/// Distance from `v` to `-cone`.
pub fn dist_to_negative_cone(v: &Vector, cone: Cone) -> Result<f64> {
    let neg = -project_cone(&(-v), cone)?;
    Ok((v - neg).norm())
}

/// `phi = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFunction;

impl ProximableFunction for ZeroFunction {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }
    fn prox(&self, v: &Vector, _lambda: f64) -> Vector {
        v.clone()
    }
    fn conjugate_value(&self, y: &Vector) -> Option<f64> {
        Some(if y.iter().all(|&a| a == 0.0) { 0.0 } else { f64::INFINITY })
    }
}

/// Indicator of the unit simplex.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimplexIndicator;

const SIMPLEX_TOL: f64 = 1e-9;

impl ProximableFunction for SimplexIndicator {
    fn value(&self, x: &Vector) -> f64 {
        let feasible = x.iter().all(|&a| a >= -SIMPLEX_TOL) && (x.sum() - 1.0).abs() <= SIMPLEX_TOL;
        if feasible {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn prox(&self, v: &Vector, _lambda: f64) -> Vector {
        project_simplex(v).expect("finite nonempty input")
    }
    fn conjugate_value(&self, y: &Vector) -> Option<f64> {
        Some(y.max())
    }
}

/// `H(u) = max_i u_i`, the support function of the simplex. Its conjugate is the
/// simplex indicator.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxOfCoords;

impl ProximableFunction for MaxOfCoords {
    fn value(&self, x: &Vector) -> f64 {
        x.max()
    }
    fn prox(&self, v: &Vector, lambda: f64) -> Vector {
        prox_max_coords(v, lambda).expect("positive scale")
    }
    fn conjugate_value(&self, y: &Vector) -> Option<f64> {
        Some(SimplexIndicator.value(y))
    }
}

/// `phi(u) = |u|^2 / 2`, which is its own conjugate.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfSquaredNorm;

impl ProximableFunction for HalfSquaredNorm {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.norm_squared()
    }
    fn prox(&self, v: &Vector, lambda: f64) -> Vector {
        v / (1.0 + lambda)
    }
    fn conjugate_value(&self, y: &Vector) -> Option<f64> {
        Some(0.5 * y.norm_squared())
    }
}

/// Indicator of `-K`, so that `H(g(x))` encodes `g(x) in -K`. The conjugate is
/// the indicator of the dual cone.
#[derive(Debug, Clone, Copy)]
pub struct NegativeConeIndicator(pub Cone);

const CONE_TOL: f64 = 1e-12;

impl ProximableFunction for NegativeConeIndicator {
    fn value(&self, x: &Vector) -> f64 {
        if self.0.contains(&(-x), CONE_TOL) {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn prox(&self, v: &Vector, _lambda: f64) -> Vector {
        -project_cone(&(-v), self.0).expect("finite input")
    }
    fn conjugate_value(&self, y: &Vector) -> Option<f64> {
        Some(if self.0.dual().contains(y, CONE_TOL) { 0.0 } else { f64::INFINITY })
    }
}

/// `phi(u) = weight * |u|_1`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm(pub f64);

impl ProximableFunction for L1Norm {
    fn value(&self, x: &Vector) -> f64 {
        self.0 * x.lp_norm(1)
    }
    fn prox(&self, v: &Vector, lambda: f64) -> Vector {
        soft_threshold(v, lambda * self.0).expect("positive threshold")
    }
    fn conjugate_value(&self, y: &Vector) -> Option<f64> {
        Some(if y.amax() <= self.0 + CONE_TOL { 0.0 } else { f64::INFINITY })
    }
}
