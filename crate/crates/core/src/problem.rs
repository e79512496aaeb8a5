//! The composite problem `min_x f(x) + h(x) + H(g(x))` and its evaluation
//! primitives.
//!
//! A problem is assembled from four pieces:
//!
//! * a smooth convex term `f` with gradient Lipschitz constant `L_f` and
//!   strong convexity modulus `mu_f`,
//! * a proximable convex term `h` (possibly an indicator),
//! * a proximable convex outer function `H` (possibly an indicator), and
//! * an inner map `g: R^p -> R^n` whose coupling `<y, g(x)>` is convex in `x`
//!   for every `y` in the domain of `H*`.
//!
//! Extended-real values are represented by `f64::INFINITY`. Problems are
//! immutable after construction and can be shared between concurrent runs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::prox::Cone;
use crate::sample_rng;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Product on the extended nonnegative reals with `0 * inf = 0`.
pub fn ext_mul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
}

/// A closed convex function with a computable scaled proximal map
/// `prox(v, lambda) = argmin_u phi(u) + |u - v|^2 / (2 lambda)`.
pub trait ProximableFunction: Send + Sync {
    /// Function value; `f64::INFINITY` outside the domain.
    fn value(&self, x: &Vector) -> f64;
    fn prox(&self, v: &Vector, lambda: f64) -> Vector;
    /// Value of the Fenchel conjugate, when it has a closed form.
    fn conjugate_value(&self, _y: &Vector) -> Option<f64> {
        None
    }
}

pub trait VectorMap: Send + Sync {
    fn apply(&self, x: &Vector) -> Vector;
    /// `g'(x)^T y`.
    fn jacobian_transpose_apply(&self, x: &Vector, y: &Vector) -> Vector;
}

#[derive(Clone)]
pub struct SmoothTerm {
    func: Arc<dyn SmoothFunction>,
    pub lipschitz: f64,
    pub strong_convexity: f64,
}

impl SmoothTerm {
    pub fn new(func: Arc<dyn SmoothFunction>, lipschitz: f64, strong_convexity: f64) -> Result<Self> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return invalid(format!("L_f must be finite and nonnegative, got {lipschitz}"));
        }
        if !(strong_convexity >= 0.0) {
            return invalid(format!("mu_f must be nonnegative, got {strong_convexity}"));
        }
        if lipschitz > 0.0 && strong_convexity > lipschitz {
            return invalid(format!("mu_f = {strong_convexity} exceeds L_f = {lipschitz}"));
        }
        Ok(SmoothTerm { func, lipschitz, strong_convexity })
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.func.value(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.func.gradient(x)
    }
}

#[derive(Clone)]
pub struct ProxTerm {
    func: Arc<dyn ProximableFunction>,
    pub strong_convexity: f64,
    /// Lipschitz constant of the function itself; `f64::INFINITY` when it has none.
    pub lipschitz: f64,
}

impl ProxTerm {
    pub fn new(func: Arc<dyn ProximableFunction>, strong_convexity: f64, lipschitz: f64) -> Result<Self> {
        if !(strong_convexity >= 0.0) || !(lipschitz >= 0.0) {
            return invalid("prox term constants must be nonnegative");
        }
        Ok(ProxTerm { func, strong_convexity, lipschitz })
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.func.value(x)
    }

    pub fn prox(&self, v: &Vector, lambda: f64) -> Vector {
        self.func.prox(v, lambda)
    }

    pub fn conjugate_value(&self, y: &Vector) -> Option<f64> {
        self.func.conjugate_value(y)
    }

    pub fn function(&self) -> &Arc<dyn ProximableFunction> {
        &self.func
    }
}

#[derive(Clone)]
pub struct Mapping {
    func: Arc<dyn VectorMap>,
    pub component_lipschitz: Vec<f64>,
    pub component_gradient_lipschitz: Vec<f64>,
    pub is_affine: bool,
    /// Uniform bound on `|g(x)|` over the domain of `F`, when known.
    pub bound: Option<f64>,
}

impl Mapping {
    pub fn new(
        func: Arc<dyn VectorMap>,
        component_lipschitz: Vec<f64>,
        component_gradient_lipschitz: Vec<f64>,
        is_affine: bool,
        bound: Option<f64>,
    ) -> Result<Self> {
        if component_lipschitz.len() != component_gradient_lipschitz.len() {
            return invalid("M_gi and L_gi must have the same length");
        }
        if component_lipschitz.is_empty() {
            return invalid("g must have at least one component");
        }
        if is_affine && component_gradient_lipschitz.iter().any(|&l| l != 0.0) {
            return invalid("an affine map must have L_gi = 0");
        }
        Ok(Mapping { func, component_lipschitz, component_gradient_lipschitz, is_affine, bound })
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.func.apply(x)
    }

    pub fn jacobian_transpose_apply(&self, x: &Vector, y: &Vector) -> Vector {
        self.func.jacobian_transpose_apply(x, y)
    }

    pub fn dim(&self) -> usize {
        self.component_lipschitz.len()
    }
}

/// A saddle point `(x*, y*)` with optimal value `P*`, as computed by an
/// instance oracle.
#[derive(Debug, Clone)]
pub struct KnownOptimum {
    pub x: Vector,
    pub y: Option<Vector>,
    pub value: f64,
    /// Absolute accuracy of `value`.
    pub accuracy: f64,
    pub method: String,
}

#[derive(Clone)]
pub struct CompositeProblem {
    pub name: String,
    pub f: SmoothTerm,
    pub h: ProxTerm,
    pub outer: ProxTerm,
    pub g: Mapping,
    pub dim_p: usize,
    pub dim_n: usize,
    pub m_g: f64,
    pub l_g: f64,
    /// Lipschitz constant of `F*`, i.e. a bound on `|x|` over `dom F`.
    pub m_fstar: Option<f64>,
    pub optimum: Option<KnownOptimum>,
    /// Set for cone-constrained programs where `H` is the indicator of `-K`.
    pub cone: Option<Cone>,
}

impl std::fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("name", &self.name)
            .field("p", &self.dim_p)
            .field("n", &self.dim_n)
            .field("L_f", &self.f.lipschitz)
            .field("mu_F", &self.mu_total())
            .field("M_g", &self.m_g)
            .field("L_g", &self.l_g)
            .field("M_H", &self.outer.lipschitz)
            .finish()
    }
}

/// `(M_g, L_g) = (sqrt(sum M_gi^2), sqrt(sum L_gi^2))`.
pub fn aggregate_constants(m_gi: &[f64], l_gi: &[f64]) -> Result<(f64, f64)> {
    if let Some(bad) = m_gi.iter().chain(l_gi).find(|&&v| !(v >= 0.0) || !v.is_finite()) {
        return invalid(format!("component constants must be finite and nonnegative, got {bad}"));
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok((norm(m_gi), norm(l_gi)))
}

impl CompositeProblem {
    pub fn new(
        name: impl Into<String>,
        f: SmoothTerm,
        h: ProxTerm,
        outer: ProxTerm,
        g: Mapping,
        dim_p: usize,
    ) -> Result<Self> {
        if dim_p == 0 {
            return invalid("dimension p must be positive");
        }
        let dim_n = g.dim();
        let (m_g, l_g) = aggregate_constants(&g.component_lipschitz, &g.component_gradient_lipschitz)?;
        Ok(CompositeProblem {
            name: name.into(),
            f,
            h,
            outer,
            g,
            dim_p,
            dim_n,
            m_g,
            l_g,
            m_fstar: None,
            optimum: None,
            cone: None,
        })
    }

    pub fn with_optimum(mut self, optimum: KnownOptimum) -> Self {
        self.optimum = Some(optimum);
        self
    }

    pub fn with_cone(mut self, cone: Cone) -> Self {
        self.cone = Some(cone);
        self
    }

    pub fn with_conjugate_lipschitz(mut self, m_fstar: f64) -> Self {
        self.m_fstar = Some(m_fstar);
        self
    }

    /// `mu_F = mu_f + mu_h`.
    pub fn mu_total(&self) -> f64 {
        self.f.strong_convexity + self.h.strong_convexity
    }

    /// `L_g * M_H` with `0 * inf = 0`.
    pub fn lg_mh(&self) -> f64 {
        ext_mul(self.l_g, self.outer.lipschitz)
    }

    pub(crate) fn check_primal(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim_p {
            return invalid(format!("x has length {}, expected {}", x.len(), self.dim_p));
        }
        Ok(())
    }

    pub(crate) fn check_dual(&self, y: &Vector, what: &str) -> Result<()> {
        if y.len() != self.dim_n {
            return invalid(format!("{what} has length {}, expected {}", y.len(), self.dim_n));
        }
        Ok(())
    }

    /// `F(x) = f(x) + h(x)`.
    pub fn objective_f(&self, x: &Vector) -> f64 {
        let hv = self.h.value(x);
        if hv == f64::INFINITY {
            return f64::INFINITY;
        }
        self.f.value(x) + hv
    }

    /// `P(x) = F(x) + H(g(x))`; `+inf` outside the domain.
    pub fn evaluate_primal(&self, x: &Vector) -> Result<f64> {
        self.check_primal(x)?;
        let fv = self.objective_f(x);
        if fv == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let outer = self.outer.value(&self.g.apply(x));
        if outer == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok(fv + outer)
    }

    /// Surrogate Lagrangian `F(x) + H(s) + <y, g(x) - s>`.
    pub fn lagrangian_value(&self, x: &Vector, s: &Vector, y: &Vector) -> Result<f64> {
        self.check_primal(x)?;
        self.check_dual(s, "s")?;
        self.check_dual(y, "y")?;
        let fv = self.objective_f(x);
        let hs = self.outer.value(s);
        if fv == f64::INFINITY || hs == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let gx = self.g.apply(x);
        Ok(fv + hs + y.dot(&(gx - s)))
    }

    /// Saddle function `F(x) + <y, g(x)> - H*(y)`. Requires a closed-form conjugate.
    pub fn saddle_value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_primal(x)?;
        self.check_dual(y, "y")?;
        let conj = self
            .outer
            .conjugate_value(y)
            .ok_or_else(|| Error::InvalidInput("outer function has no closed-form conjugate".into()))?;
        let fv = self.objective_f(x);
        if fv == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        if conj == f64::INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(fv + y.dot(&self.g.apply(x)) - conj)
    }

    /// A random point of `dom F`: a standard normal draw mapped through `prox_h`.
    pub fn sample_domain_point<R: Rng>(&self, rng: &mut R, scale: f64) -> Vector {
        let z = Vector::from_fn(self.dim_p, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        self.h.prox(&z, 1.0)
    }

    /// A random point of `dom H*`, obtained from Moreau's identity `prox_{H*}(z) = z - prox_H(z)`.
    pub fn sample_dual_point<R: Rng>(&self, rng: &mut R, scale: f64) -> Vector {
        let z = Vector::from_fn(self.dim_n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        crate::prox::prox_conjugate_moreau(self.outer.function().as_ref(), &z, 1.0).expect("rho = 1 is valid")
    }
}

#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    pub max_gradient_error: f64,
    pub max_jacobian_error: f64,
    pub samples_used: usize,
    pub resampled: usize,
    pub tolerance: f64,
    pub passed: bool,
}

const FD_STEP: f64 = 1e-6;
const FD_TOLERANCE: f64 = 1e-4;

fn centered_difference(fun: impl Fn(&Vector) -> f64, x: &Vector) -> Vector {
    let mut out = Vector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + FD_STEP;
        let up = fun(&probe);
        probe[i] = xi - FD_STEP;
        let down = fun(&probe);
        probe[i] = xi;
        out[i] = (up - down) / (2.0 * FD_STEP);
    }
    out
}

fn relative_error(approx: &Vector, exact: &Vector) -> f64 {
    (approx - exact).norm() / exact.norm().max(1.0)
}

/// Compares `grad f` and `g'(x)^T y` with centered differences at random
/// points of `dom F`.
pub fn finite_diff_check(prob: &CompositeProblem, samples: usize, seed: u64) -> Result<FiniteDiffReport> {
    finite_diff_check_with(prob, samples, seed, Execution::default())
}

pub fn finite_diff_check_with(
    prob: &CompositeProblem,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<FiniteDiffReport> {
    if samples == 0 {
        return invalid("samples must be positive");
    }
    const MAX_ATTEMPTS: usize = 20;
    let per_sample = exec.map(samples, |i| {
        let mut rng = sample_rng(seed, i as u64);
        for attempt in 0..MAX_ATTEMPTS {
            let x = prob.sample_domain_point(&mut rng, 1.0);
            let y = Vector::from_fn(prob.dim_n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let fx = prob.f.value(&x);
            let gx = prob.g.apply(&x);
            if !fx.is_finite() || gx.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let grad = prob.f.gradient(&x);
            let fd_grad = centered_difference(|z| prob.f.value(z), &x);
            let jvp = prob.g.jacobian_transpose_apply(&x, &y);
            let fd_jvp = centered_difference(|z| y.dot(&prob.g.apply(z)), &x);
            let errs = (relative_error(&fd_grad, &grad), relative_error(&fd_jvp, &jvp));
            if errs.0.is_finite() && errs.1.is_finite() {
                return Some((errs, attempt));
            }
        }
        None
    });
    let mut report = FiniteDiffReport {
        max_gradient_error: 0.0,
        max_jacobian_error: 0.0,
        samples_used: 0,
        resampled: 0,
        tolerance: FD_TOLERANCE,
        passed: false,
    };
    for ((eg, ej), attempts) in per_sample.into_iter().flatten() {
        report.max_gradient_error = report.max_gradient_error.max(eg);
        report.max_jacobian_error = report.max_jacobian_error.max(ej);
        report.samples_used += 1;
        report.resampled += attempts;
    }
    if report.samples_used == 0 {
        return Err(Error::CheckFailed("every sample was infeasible".into()));
    }
    report.passed = report.max_gradient_error <= FD_TOLERANCE && report.max_jacobian_error <= FD_TOLERANCE;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ConstantsReport {
    /// max over pairs of `|g(x) - g(x')| / (M_g |x - x'|)`.
    pub worst_mg_ratio: f64,
    /// max over pairs of `|g'(x)^T y - g'(x')^T y| / (L_g |y| |x - x'|)`; zero for affine maps.
    pub worst_lg_ratio: f64,
    pub pairs: usize,
}

impl ConstantsReport {
    pub fn passed(&self) -> bool {
        self.worst_mg_ratio <= 1.0 + 1e-12 && self.worst_lg_ratio <= 1.0 + 1e-12
    }
}

/// Empirical check that the stored `M_g` and `L_g` bound the observed
/// variation of `g` and of `g'(.)^T y` for `y` in `dom H*`.
pub fn check_constants(prob: &CompositeProblem, pairs: usize, seed: u64, exec: Execution) -> ConstantsReport {
    let ratios = exec.map(pairs, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let x = prob.sample_domain_point(&mut rng, 1.0);
        let xh = prob.sample_domain_point(&mut rng, 1.0);
        let y = prob.sample_dual_point(&mut rng, 1.0);
        let dx = (&x - &xh).norm();
        if dx == 0.0 {
            return (0.0, 0.0);
        }
        let dg = (prob.g.apply(&x) - prob.g.apply(&xh)).norm();
        let rm = if dg == 0.0 { 0.0 } else { dg / (prob.m_g * dx) };
        let dj = (prob.g.jacobian_transpose_apply(&x, &y) - prob.g.jacobian_transpose_apply(&xh, &y)).norm();
        let rl = if dj <= 1e-14 * (1.0 + y.norm()) { 0.0 } else { dj / (prob.l_g * y.norm() * dx) };
        (rm, rl)
    });
    ConstantsReport {
        worst_mg_ratio: ratios.iter().map(|r| r.0).fold(0.0, f64::max),
        worst_lg_ratio: ratios.iter().map(|r| r.1).fold(0.0, f64::max),
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{build_bilinear_toy, build_game, build_max_toy};
    use crate::prox::{SimplexIndicator, ZeroFunction};

    struct WrongGradient;
    impl SmoothFunction for WrongGradient {
        fn value(&self, x: &Vector) -> f64 {
            0.5 * x.norm_squared()
        }
        fn gradient(&self, x: &Vector) -> Vector {
            x * 2.0
        }
    }

    #[test]
    fn toy_primal_value() {
        let prob = build_bilinear_toy();
        assert_eq!(prob.evaluate_primal(&Vector::from_element(1, 1.0)).unwrap(), 0.5);
    }

    #[test]
    fn indicator_outside_domain_is_infinite() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let prob = build_game(&a, &Vector::from_vec(vec![0.5, 0.5])).unwrap();
        let v = prob.evaluate_primal(&Vector::from_vec(vec![2.0, 0.0])).unwrap();
        assert_eq!(v, f64::INFINITY);
        let h = ProxTerm::new(Arc::new(SimplexIndicator), 0.0, f64::INFINITY).unwrap();
        assert_eq!(h.value(&Vector::from_vec(vec![2.0, 0.0])), f64::INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let prob = build_bilinear_toy();
        assert!(matches!(prob.evaluate_primal(&Vector::zeros(2)), Err(Error::InvalidInput(_))));
        let one = Vector::from_element(1, 1.0);
        assert!(prob.lagrangian_value(&one, &Vector::zeros(2), &one).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_constants(&[1.0], &[0.0]).unwrap(), (1.0, 0.0));
        assert_eq!(aggregate_constants(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), (5.0, 0.0));
        let (m, l) = aggregate_constants(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!((m - 5f64.sqrt()).abs() < 1e-15);
        assert!((l - 2.0 * 5f64.sqrt()).abs() < 1e-15);
        assert!(aggregate_constants(&[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn ext_mul_zero_times_infinity() {
        assert_eq!(ext_mul(0.0, f64::INFINITY), 0.0);
        assert_eq!(ext_mul(f64::INFINITY, 0.0), 0.0);
        assert_eq!(ext_mul(2.0, f64::INFINITY), f64::INFINITY);
        assert_eq!(ext_mul(2.0, 3.0), 6.0);
    }

    #[test]
    fn toy_lagrangian_values() {
        let prob = build_bilinear_toy();
        let v = |a: f64| Vector::from_element(1, a);
        let l = prob.lagrangian_value(&v(1.0), &v(0.5), &v(0.5)).unwrap();
        assert!((l - 0.375).abs() < 1e-15);
        // coupling vanishes when s = g(x)
        let l = prob.lagrangian_value(&v(0.7), &v(0.7), &v(-3.0)).unwrap();
        assert!((l - 0.5 * 0.49).abs() < 1e-15);
        // at the saddle the value is P* = 0
        assert_eq!(prob.lagrangian_value(&v(0.0), &v(0.0), &v(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn saddle_value_equals_lagrangian_on_conjugate_subgradient() {
        // H(s) = s^2/2 has dH*(y) = {y}; so s = y attains equality.
        let prob = build_bilinear_toy();
        let mut rng = sample_rng(5, 0);
        for _ in 0..200 {
            let x = Vector::from_element(1, rng.sample::<f64, _>(StandardNormal));
            let y = Vector::from_element(1, rng.sample::<f64, _>(StandardNormal));
            let lt = prob.saddle_value(&x, &y).unwrap();
            let l = prob.lagrangian_value(&x, &y, &y).unwrap();
            assert!((lt - l).abs() <= 1e-8 * (1.0 + l.abs()));
            // any other s gives an upper bound
            let s = Vector::from_element(1, y[0] + 0.3);
            assert!(prob.lagrangian_value(&x, &s, &y).unwrap() >= lt - 1e-12);
        }
    }

    #[test]
    fn finite_differences_on_toy() {
        let report = finite_diff_check(&build_bilinear_toy(), 100, 1).unwrap();
        assert!(report.passed);
        assert!(report.max_gradient_error <= 1e-8);
        assert!(report.max_jacobian_error <= 1e-8);
    }

    #[test]
    fn finite_differences_affine_map() {
        let report = finite_diff_check(&build_max_toy(), 100, 2).unwrap();
        assert!(report.passed);
        assert!(report.max_jacobian_error <= 1e-8);
    }

    #[test]
    fn finite_differences_catch_wrong_gradient() {
        let toy = build_bilinear_toy();
        let f = SmoothTerm::new(Arc::new(WrongGradient), 1.0, 0.0).unwrap();
        let h = ProxTerm::new(Arc::new(ZeroFunction), 0.0, 0.0).unwrap();
        let prob = CompositeProblem::new("wrong", f, h, toy.outer.clone(), toy.g.clone(), 1).unwrap();
        let report = finite_diff_check(&prob, 20, 3).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn smooth_term_rejects_inconsistent_constants() {
        assert!(SmoothTerm::new(Arc::new(WrongGradient), 1.0, 2.0).is_err());
        assert!(SmoothTerm::new(Arc::new(WrongGradient), -1.0, 0.0).is_err());
    }
}
