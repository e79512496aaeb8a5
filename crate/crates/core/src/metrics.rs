//! Convergence measures: primal and dual residuals, the primal-dual gap, the
//! cone measure `E(x)`, the theoretical rate certificates, empirical rate
//! slopes and the curvature sandwich diagnostic for the potential function.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::problem::{CompositeProblem, Vector};
use crate::prox::dist_to_negative_cone;
use crate::sample_rng;
use crate::schedule::{Schedule, ScheduleConstants, ScheduleState, Variant};
use crate::solver::{IterateState, RunOptions};

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub tau: f64,
    pub rho: f64,
    pub eta: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub beta: f64,
    /// `P(x) - P*` (or `F(x) - F*` on cone programs); absent without an optimum.
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    pub pd_gap: Option<f64>,
    pub feasibility: Option<f64>,
    pub theorem_bound: Option<f64>,
    pub wall_time_ms: f64,
}

/// `P(x) - P*`; `+inf` outside the domain.
pub fn primal_residual(prob: &CompositeProblem, x: &Vector, p_star: f64) -> Result<f64> {
    if !p_star.is_finite() {
        return invalid("P* must be finite");
    }
    let p = prob.evaluate_primal(x)?;
    if p == f64::INFINITY {
        log::debug!("{}: primal residual evaluated outside the domain", prob.name);
    }
    Ok(p - p_star)
}

/// `E(x) = max{|F(x) - F*|, dist_{-K}(g(x))}`.
pub fn cone_measure_e(prob: &CompositeProblem, x: &Vector, f_star: f64) -> Result<f64> {
    let cone = prob.cone.ok_or_else(|| Error::InvalidInput("problem has no cone constraint".into()))?;
    prob.check_primal(x)?;
    let dist = dist_to_negative_cone(&prob.g.apply(x), cone)?;
    Ok((prob.objective_f(x) - f_star).abs().max(dist))
}

/// Evaluates `D(y) = H*(y) - min_x {F(x) + <y, g(x)>}` with an accelerated
/// proximal-gradient inner solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOracle {
    /// Stop once the gradient mapping norm falls to this level.
    pub tolerance: f64,
    pub iteration_cap: usize,
}

impl Default for DualOracle {
    fn default() -> Self {
        DualOracle { tolerance: 1e-10, iteration_cap: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct DualValue {
    pub value: f64,
    /// Approximate inner minimiser, reusable as a warm start.
    pub inner_point: Vector,
    pub iterations: usize,
    /// False when the cap was reached before the tolerance.
    pub converged: bool,
}

const UNBOUNDED_NORM: f64 = 1e10;
const UNBOUNDED_VALUE: f64 = -1e15;

impl DualOracle {
    pub fn dual_value(&self, prob: &CompositeProblem, y: &Vector, warm: Option<&Vector>) -> Result<DualValue> {
        prob.check_dual(y, "y")?;
        let conj = prob
            .outer
            .conjugate_value(y)
            .ok_or_else(|| Error::CertificateUnavailable("outer function has no closed-form conjugate".into()))?;
        let start = match warm {
            Some(w) => {
                prob.check_primal(w)?;
                prob.h.prox(w, 1.0)
            }
            None => prob.h.prox(&Vector::zeros(prob.dim_p), 1.0),
        };
        if conj == f64::INFINITY {
            return Ok(DualValue { value: f64::INFINITY, inner_point: start, iterations: 0, converged: true });
        }
        let (point, inner, iterations, converged) = self.inner_min(prob, y, start);
        let value = if inner == f64::NEG_INFINITY { f64::INFINITY } else { conj - inner };
        if !converged {
            log::debug!("{}: dual oracle reached its iteration cap", prob.name);
        }
        Ok(DualValue { value, inner_point: point, iterations, converged })
    }

    /// Minimises `f(x) + <y, g(x)> + h(x)` by FISTA with backtracking and
    /// function-value restarts. Returns `-inf` when the iterates run away.
    fn inner_min(&self, prob: &CompositeProblem, y: &Vector, start: Vector) -> (Vector, f64, usize, bool) {
        let smooth = |x: &Vector| prob.f.value(x) + y.dot(&prob.g.apply(x));
        let grad = |x: &Vector| prob.f.gradient(x) + prob.g.jacobian_transpose_apply(x, y);
        let total = |x: &Vector, s: f64| s + prob.h.value(x);

        let mut l = (prob.f.lipschitz + prob.l_g * y.norm()).max(1e-8);
        let mut x = start;
        let mut obj = total(&x, smooth(&x));
        let mut z = x.clone();
        let mut t = 1.0_f64;
        for it in 1..=self.iteration_cap {
            let fz = smooth(&z);
            let gz = grad(&z);
            let (x_new, f_new) = loop {
                let cand = prob.h.prox(&(&z - &gz / l), 1.0 / l);
                let d = &cand - &z;
                let f_cand = smooth(&cand);
                if f_cand <= fz + gz.dot(&d) + 0.5 * l * d.norm_squared() + 1e-14 * fz.abs().max(1.0) || l > 1e300 {
                    break (cand, f_cand);
                }
                l *= 2.0;
            };
            let mapping_norm = l * (&x_new - &z).norm();
            let obj_new = total(&x_new, f_new);
            if x_new.norm() > UNBOUNDED_NORM || obj_new < UNBOUNDED_VALUE {
                return (x_new, f64::NEG_INFINITY, it, true);
            }
            if obj_new > obj {
                // restart momentum from the last accepted point
                t = 1.0;
                z = x.clone();
                continue;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            z = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
            t = t_new;
            x = x_new;
            obj = obj_new;
            l *= 0.9;
            if mapping_norm <= self.tolerance {
                return (x, obj, it, true);
            }
        }
        (x, obj, self.iteration_cap, false)
    }
}

/// `D(y)` with the default oracle.
pub fn dual_value(prob: &CompositeProblem, y: &Vector, oracle: &DualOracle) -> Result<f64> {
    Ok(oracle.dual_value(prob, y, None)?.value)
}

/// `P(x) + D(y)`, nonnegative by weak duality.
pub fn pd_gap(prob: &CompositeProblem, x: &Vector, y: &Vector, oracle: &DualOracle) -> Result<f64> {
    let p = prob.evaluate_primal(x)?;
    let d = dual_value(prob, y, oracle)?;
    Ok(p + d)
}

/// Which right-hand side applies.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BoundShape {
    /// `bracket / (2k)`
    Harmonic,
    /// `bracket / (2 rho0 k + P0 k (k - 1))`
    Growing { rho0: f64, p0: f64 },
    /// `bracket / (2 [rho0 k + P0 k (k - 1)])`
    GrowingCone { rho0: f64, p0: f64 },
    /// `2 bracket / (k + 1)^2`
    Quadratic,
}

/// A theorem right-hand side with its `k`-independent part evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    bracket: f64,
    shape: BoundShape,
}

impl Certificate {
    /// The bound after `k` iterations; `+inf` at `k = 0`.
    pub fn at(&self, k: usize) -> f64 {
        if k == 0 {
            return f64::INFINITY;
        }
        let k = k as f64;
        match self.shape {
            BoundShape::Harmonic => self.bracket / (2.0 * k),
            BoundShape::Growing { rho0, p0 } => self.bracket / (2.0 * rho0 * k + p0 * k * (k - 1.0)),
            BoundShape::GrowingCone { rho0, p0 } => self.bracket / (2.0 * (rho0 * k + p0 * k * (k - 1.0))),
            BoundShape::Quadratic => 2.0 * self.bracket / ((k + 1.0) * (k + 1.0)),
        }
    }

    /// The primal certificate. On cone programs it bounds `E(x)`, otherwise
    /// `P(x) - P*` at the reported point.
    pub fn primal(
        prob: &CompositeProblem,
        variant: Variant,
        consts: &ScheduleConstants,
        x0: &Vector,
        y0: &Vector,
    ) -> Result<Self> {
        let opt = prob
            .optimum
            .as_ref()
            .ok_or_else(|| Error::CertificateUnavailable("no known optimum for this instance".into()))?;
        prob.check_primal(x0)?;
        prob.check_dual(y0, "y0")?;
        let dx2 = (x0 - &opt.x).norm_squared();
        if prob.cone.is_some() {
            let y_star = opt
                .y
                .as_ref()
                .ok_or_else(|| Error::CertificateUnavailable("cone bound needs the optimal multiplier".into()))?;
            let r = y0.norm() + y_star.norm() + 1.0;
            let bracket = consts.l0 * dx2 + r * r / consts.eta0;
            let shape = match variant {
                Variant::ErgodicConvex | Variant::SemiErgodicConvex => BoundShape::Harmonic,
                Variant::ErgodicStrong => BoundShape::GrowingCone { rho0: consts.rho0, p0: p0_of(consts)? },
                Variant::SemiErgodicStrong => BoundShape::Quadratic,
            };
            return Ok(Certificate { bracket, shape });
        }
        let m_h = prob.outer.lipschitz;
        if !m_h.is_finite() {
            return Err(Error::CertificateUnavailable("M_H is infinite".into()));
        }
        let r = y0.norm() + m_h;
        Self::from_parts(variant, consts, dx2, r * r)
    }

    /// The dual certificate on `D(y) - D*`, needing `M_{F*}` and `y*`.
    pub fn dual(
        prob: &CompositeProblem,
        variant: Variant,
        consts: &ScheduleConstants,
        x0: &Vector,
        y0: &Vector,
    ) -> Result<Self> {
        let m_fstar = prob
            .m_fstar
            .filter(|m| m.is_finite())
            .ok_or_else(|| Error::CertificateUnavailable("M_F* is unknown or infinite".into()))?;
        let y_star = prob
            .optimum
            .as_ref()
            .and_then(|o| o.y.as_ref())
            .ok_or_else(|| Error::CertificateUnavailable("no known optimal dual point".into()))?;
        prob.check_dual(y0, "y0")?;
        let rx = x0.norm() + m_fstar;
        Self::from_parts(variant, consts, rx * rx, (y0 - y_star).norm_squared())
    }

    fn from_parts(variant: Variant, consts: &ScheduleConstants, primal_sq: f64, dual_sq: f64) -> Result<Self> {
        let (weight, shape) = match variant {
            Variant::ErgodicConvex => (2.0 / consts.rho0, BoundShape::Harmonic),
            Variant::ErgodicStrong => {
                (2.0 / consts.rho0, BoundShape::Growing { rho0: consts.rho0, p0: p0_of(consts)? })
            }
            Variant::SemiErgodicConvex => (1.0 / ((1.0 - consts.gamma) * consts.rho0), BoundShape::Harmonic),
            Variant::SemiErgodicStrong => (1.0 / ((1.0 - consts.gamma) * consts.rho0), BoundShape::Quadratic),
        };
        Ok(Certificate { bracket: consts.l0 * primal_sq + weight * dual_sq, shape })
    }
}

fn p0_of(consts: &ScheduleConstants) -> Result<f64> {
    consts.p0.ok_or_else(|| Error::InvalidInput("schedule has no P0".into()))
}

/// The variant's primal bound after `k` iterations.
pub fn theorem_bound(schedule: &Schedule, prob: &CompositeProblem, k: usize, x0: &Vector, y0: &Vector) -> Result<f64> {
    Ok(Certificate::primal(prob, schedule.variant(), schedule.constants(), x0, y0)?.at(k))
}

/// The variant's dual bound after `k` iterations.
pub fn dual_theorem_bound(
    schedule: &Schedule,
    prob: &CompositeProblem,
    k: usize,
    x0: &Vector,
    y0: &Vector,
) -> Result<f64> {
    Ok(Certificate::dual(prob, schedule.variant(), schedule.constants(), x0, y0)?.at(k))
}

/// Least-squares slope of `log(envelope)` against `log(k)` over
/// `[k_min, k_max]`, where the envelope is the running minimum of the series.
pub fn fit_rate_slope(trace: &[(usize, f64)], k_min: usize, k_max: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut pts = Vec::new();
    for &(k, v) in trace {
        best = best.min(v);
        if k >= k_min && k <= k_max && k > 0 {
            if !(best > 0.0) || !best.is_finite() {
                return invalid(format!(
                    "envelope must be positive and finite on the fitted range, got {best} at k = {k}"
                ));
            }
            pts.push(((k as f64).ln(), best.ln()));
        }
    }
    if pts.len() < 5 {
        return invalid(format!("need at least 5 points in [{k_min}, {k_max}], got {}", pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("fitted range has a single distinct k");
    }
    Ok(sxy / sxx)
}

/// `phi_rho(x, s, y) = <y, g(x) - s> + (rho/2)|g(x) - s|^2`.
fn phi(prob: &CompositeProblem, x: &Vector, s: &Vector, y: &Vector, rho: f64) -> f64 {
    let r = prob.g.apply(x) - s;
    y.dot(&r) + 0.5 * rho * r.norm_squared()
}

/// Bregman-type remainder of `phi_rho` between `(x^, s^)` and `(x, s)`,
/// computed from its definition with the analytic partial gradients.
pub fn lemma1_delta(
    prob: &CompositeProblem,
    x_hat: &Vector,
    s_hat: &Vector,
    x: &Vector,
    s: &Vector,
    y: &Vector,
    rho: f64,
) -> f64 {
    let w = y + (prob.g.apply(x) - s) * rho;
    let grad_x = prob.g.jacobian_transpose_apply(x, &w);
    phi(prob, x_hat, s_hat, y, rho) - phi(prob, x, s, y, rho) - grad_x.dot(&(x_hat - x)) + w.dot(&(s_hat - s))
}

/// Outcome of the curvature sandwich check over random samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub samples: usize,
    pub skipped: usize,
    /// Smallest `Delta - (rho/2)|...|^2`; must be nonnegative.
    pub min_lower_slack: f64,
    /// Largest excess over the curvature bound; must be nonpositive.
    pub max_upper_slack: f64,
}

impl SandwichReport {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.samples > self.skipped
            && self.min_lower_slack >= -Self::TOLERANCE
            && self.max_upper_slack <= Self::TOLERANCE
    }
}

pub type DeltaFn = dyn Fn(&CompositeProblem, &Vector, &Vector, &Vector, &Vector, &Vector, f64) -> f64 + Sync;

/// Checks `0 <= Delta - (rho/2)|[g(x^) - s^] - [g(x) - s]|^2 <= (L_g |w| / 2)|x^ - x|^2`
/// with `w = y + rho [g(x) - s]` drawn from `dom H*`.
pub fn lemma1_sandwich_check(
    prob: &CompositeProblem,
    samples: usize,
    seed: u64,
    rho: f64,
    exec: Execution,
) -> Result<SandwichReport> {
    lemma1_sandwich_check_with(prob, samples, seed, rho, exec, &lemma1_delta)
}

pub fn lemma1_sandwich_check_with(
    prob: &CompositeProblem,
    samples: usize,
    seed: u64,
    rho: f64,
    exec: Execution,
    delta: &DeltaFn,
) -> Result<SandwichReport> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    if samples == 0 {
        return invalid("need at least one sample");
    }
    if !(rho > 0.0) {
        return invalid(format!("rho must be positive, got {rho}"));
    }
    let slacks = exec.map(samples, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let x = prob.sample_domain_point(&mut rng, 1.0);
        let x_hat = prob.sample_domain_point(&mut rng, 1.0);
        let mut gauss = |n: usize| Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = gauss(prob.dim_n);
        let s_hat = gauss(prob.dim_n);
        let w = prob.sample_dual_point(&mut rng, 1.0);
        let (gx, gxh) = (prob.g.apply(&x), prob.g.apply(&x_hat));
        if gx.iter().chain(gxh.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        let y = &w - (&gx - &s) * rho;
        let quad = 0.5 * rho * ((&gxh - &s_hat) - (&gx - &s)).norm_squared();
        let d = delta(prob, &x_hat, &s_hat, &x, &s, &y, rho);
        if !d.is_finite() {
            return None;
        }
        let lower = d - quad;
        let upper = lower - 0.5 * prob.l_g * w.norm() * (&x_hat - &x).norm_squared();
        Some((lower, upper))
    });
    let mut report =
        SandwichReport { samples, skipped: 0, min_lower_slack: f64::INFINITY, max_upper_slack: f64::NEG_INFINITY };
    for s in slacks {
        match s {
            Some((lo, up)) => {
                report.min_lower_slack = report.min_lower_slack.min(lo);
                report.max_upper_slack = report.max_upper_slack.max(up);
            }
            None => report.skipped += 1,
        }
    }
    Ok(report)
}

/// Builds trace rows for a run, carrying warm starts for the dual oracle.
pub(crate) struct RowEvaluator<'a> {
    prob: &'a CompositeProblem,
    variant: Variant,
    certificate: Option<Certificate>,
    dual_every: Option<usize>,
    oracle: DualOracle,
    warm: Option<Vector>,
}

impl<'a> RowEvaluator<'a> {
    pub(crate) fn new(
        prob: &'a CompositeProblem,
        schedule: &Schedule,
        x0: &Vector,
        y0: &Vector,
        options: &RunOptions,
    ) -> Self {
        let certificate = if options.certificate {
            match Certificate::primal(prob, schedule.variant(), schedule.constants(), x0, y0) {
                Ok(c) => Some(c),
                Err(e) => {
                    log::info!("{}: no theorem bound recorded ({e})", prob.name);
                    None
                }
            }
        } else {
            None
        };
        RowEvaluator {
            prob,
            variant: schedule.variant(),
            certificate,
            dual_every: options.dual_every.filter(|&d| d > 0),
            oracle: options.dual_oracle,
            warm: None,
        }
    }

    pub(crate) fn row(&mut self, sched: &ScheduleState, state: &IterateState, wall_time_ms: f64) -> TraceRecord {
        let prob = self.prob;
        let (x, y) = state.reported(self.variant);
        let opt = prob.optimum.as_ref();
        let (primal_residual, feasibility) = match prob.cone {
            Some(cone) => {
                (opt.map(|o| prob.objective_f(&x) - o.value), dist_to_negative_cone(&prob.g.apply(&x), cone).ok())
            }
            None => (opt.and_then(|o| prob.evaluate_primal(&x).ok().map(|p| p - o.value)), None),
        };
        let (mut dual_residual, mut gap) = (None, None);
        if self.dual_every.is_some_and(|d| state.k.is_multiple_of(d)) {
            match self.oracle.dual_value(prob, &y, self.warm.as_ref()) {
                Ok(dv) => {
                    self.warm = Some(dv.inner_point);
                    dual_residual = opt.map(|o| dv.value + o.value);
                    gap = prob.evaluate_primal(&x).ok().map(|p| p + dv.value);
                }
                Err(e) => {
                    log::debug!("{}: dual value unavailable ({e})", prob.name);
                    self.dual_every = None;
                }
            }
        }
        let theorem_bound = self.certificate.map(|c| c.at(state.k)).filter(|b| b.is_finite());
        TraceRecord {
            k: state.k,
            tau: sched.tau,
            rho: sched.rho,
            eta: sched.eta,
            lipschitz: sched.lipschitz,
            beta: sched.beta,
            primal_residual,
            dual_residual,
            pd_gap: gap,
            feasibility,
            theorem_bound,
            wall_time_ms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{build_bilinear_toy, build_game, build_max_toy, example_cone_qp, random_game_data};
    use crate::schedule::ScheduleParams;

    fn v(a: &[f64]) -> Vector {
        Vector::from_row_slice(a)
    }

    #[test]
    fn toy_residuals_and_gap() {
        let prob = build_bilinear_toy();
        assert_eq!(primal_residual(&prob, &v(&[1.0]), 0.0).unwrap(), 0.5);
        assert!(primal_residual(&prob, &v(&[1.0]), f64::NAN).is_err());
        let oracle = DualOracle::default();
        assert_eq!(dual_value(&prob, &v(&[0.0]), &oracle).unwrap(), 0.0);
        assert_eq!(pd_gap(&prob, &v(&[1.0]), &v(&[0.0]), &oracle).unwrap(), 0.5);
        // nonzero coupling with f = h = 0 leaves the inner problem unbounded
        assert_eq!(dual_value(&prob, &v(&[0.3]), &oracle).unwrap(), f64::INFINITY);
    }

    #[test]
    fn infeasible_point_gives_infinite_residual() {
        let (a, b) = random_game_data(3, 3, 5, 2);
        let game = build_game(&a, &b).unwrap();
        assert_eq!(primal_residual(&game, &v(&[2.0, 0.0, 0.0]), 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn max_toy_gap_vanishes_at_saddle() {
        let prob = build_max_toy();
        let oracle = DualOracle::default();
        let gap = pd_gap(&prob, &v(&[0.0]), &v(&[0.5, 0.5]), &oracle).unwrap();
        assert!(gap.abs() <= 1e-9, "{gap}");
        for y in [[1.0, 0.0], [0.2, 0.8], [0.0, 1.0]] {
            for x in [-1.0, 0.3, 2.0] {
                assert!(pd_gap(&prob, &v(&[x]), &v(&y), &oracle).unwrap() >= -1e-9);
            }
        }
        // outside the simplex H* is infinite
        assert_eq!(dual_value(&prob, &v(&[0.7, 0.7]), &oracle).unwrap(), f64::INFINITY);
    }

    #[test]
    fn cone_measure_examples() {
        let prob = example_cone_qp();
        let opt = prob.optimum.clone().unwrap();
        assert!(cone_measure_e(&prob, &opt.x, opt.value).unwrap() <= 1e-8);
        // g(x) = x1 + x2 - 1; at (1, 1) the violation is 1 and F - F* = 0 at F* = F(x)
        let x = v(&[1.0, 1.0]);
        assert_eq!(cone_measure_e(&prob, &x, prob.objective_f(&x)).unwrap(), 1.0);
        assert!(cone_measure_e(&build_bilinear_toy(), &v(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn cone_distance_uses_componentwise_clamp() {
        let d = dist_to_negative_cone(&v(&[1.0, -1.0]), crate::prox::Cone::Orthant).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn slope_fits() {
        let inv: Vec<_> = (1..=1000).map(|k| (k, 1.0 / k as f64)).collect();
        assert!((fit_rate_slope(&inv, 10, 1000).unwrap() + 1.0).abs() <= 1e-6);
        let inv2: Vec<_> = (1..=1000).map(|k| (k, 1.0 / (k * k) as f64)).collect();
        assert!((fit_rate_slope(&inv2, 10, 1000).unwrap() + 2.0).abs() <= 1e-6);
        let flat: Vec<_> = (1..=1000).map(|k| (k, 3.0)).collect();
        assert!(fit_rate_slope(&flat, 10, 1000).unwrap().abs() <= 1e-9);
        assert!(fit_rate_slope(&flat, 10, 13).is_err());
        let zero: Vec<_> = (1..=100).map(|k| (k, 0.0)).collect();
        assert!(fit_rate_slope(&zero, 10, 100).is_err());
    }

    #[test]
    fn slope_uses_running_minimum() {
        // oscillating series whose envelope is 1/k
        let s: Vec<_> = (1..=2000).map(|k| (k, if k % 2 == 0 { 1.0 / k as f64 } else { 5.0 })).collect();
        assert!((fit_rate_slope(&s, 100, 2000).unwrap() + 1.0).abs() < 1e-2);
    }

    fn max_toy_schedule(variant: Variant) -> (CompositeProblem, Schedule, Vector, Vector) {
        let prob = build_max_toy();
        let (x0, y0) = (v(&[1.0]), v(&[0.5, 0.5]));
        let sched = Schedule::new(&prob, &ScheduleParams::new(variant), &x0, &y0).unwrap();
        (prob, sched, x0, y0)
    }

    #[test]
    fn ergodic_bound_scales_as_one_over_k() {
        let (prob, sched, x0, y0) = max_toy_schedule(Variant::ErgodicConvex);
        for k in [1, 3, 10, 250] {
            let a = theorem_bound(&sched, &prob, k, &x0, &y0).unwrap();
            let b = theorem_bound(&sched, &prob, 2 * k, &x0, &y0).unwrap();
            assert_eq!(a, 2.0 * b);
        }
        assert_eq!(theorem_bound(&sched, &prob, 0, &x0, &y0).unwrap(), f64::INFINITY);
        // L0 |x0 - x*|^2 + (2/rho0)(|y0| + M_H)^2 over 2k
        let c = sched.constants();
        let r = y0.norm() + 1.0;
        let expected = (c.l0 * 1.0 + 2.0 * r * r) / 2.0;
        assert!((theorem_bound(&sched, &prob, 1, &x0, &y0).unwrap() - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn semi_ergodic_strong_bound_at_one() {
        let (a, b) = random_game_data(3, 3, 5, 4);
        let game = build_game(&a, &b).unwrap();
        // a strongly convex stand-in: the toy bound formula only needs constants
        let c = ScheduleConstants::for_tests(2.0, 0.5, 1.0, Some(0.3));
        let (x0, y0) = (Vector::from_element(3, 1.0 / 3.0), Vector::from_element(3, 1.0 / 3.0));
        let mut game = game;
        game.optimum = Some(crate::problem::KnownOptimum {
            x: Vector::from_element(3, 0.0),
            y: None,
            value: 0.0,
            accuracy: 0.0,
            method: "test".into(),
        });
        let cert = Certificate::primal(&game, Variant::SemiErgodicStrong, &c, &x0, &y0).unwrap();
        let r = y0.norm() + 1.0;
        let bracket = 2.0 * x0.norm_squared() + r * r / (0.5 * 1.0);
        assert!((cert.at(1) - 0.5 * bracket).abs() <= 1e-14 * bracket);
        let cert2 = Certificate::primal(&game, Variant::ErgodicStrong, &c, &x0, &y0).unwrap();
        let bracket2 = 2.0 * x0.norm_squared() + 2.0 * r * r;
        assert!((cert2.at(3) - bracket2 / (6.0 + 0.3 * 6.0)).abs() <= 1e-14 * bracket2);
    }

    #[test]
    fn certificate_needs_finite_mh_and_optimum() {
        let prob = build_bilinear_toy();
        let (x0, y0) = (v(&[1.0]), v(&[0.0]));
        let sched = Schedule::new(&prob, &ScheduleParams::new(Variant::ErgodicConvex), &x0, &y0).unwrap();
        assert!(matches!(theorem_bound(&sched, &prob, 5, &x0, &y0), Err(Error::CertificateUnavailable(_))));
        let mut bare = build_max_toy();
        bare.optimum = None;
        let sched = Schedule::new(&bare, &ScheduleParams::new(Variant::ErgodicConvex), &x0, &v(&[0.5, 0.5])).unwrap();
        assert!(matches!(theorem_bound(&sched, &bare, 5, &x0, &v(&[0.5, 0.5])), Err(Error::CertificateUnavailable(_))));
    }

    #[test]
    fn cone_bound_uses_delta0() {
        let prob = example_cone_qp();
        let (x0, y0) = (v(&[1.0, 1.0]), v(&[0.0]));
        let sched = Schedule::new(&prob, &ScheduleParams::new(Variant::ErgodicConvex), &x0, &y0).unwrap();
        let c = sched.constants();
        let opt = prob.optimum.clone().unwrap();
        let r = y0.norm() + opt.y.as_ref().unwrap().norm() + 1.0;
        let delta0 = c.l0 * (&x0 - &opt.x).norm_squared() + r * r / c.eta0;
        let b = theorem_bound(&sched, &prob, 7, &x0, &y0).unwrap();
        assert!((b - delta0 / 14.0).abs() <= 1e-14 * delta0);
    }

    #[test]
    fn sandwich_is_exact_for_affine_maps() {
        let prob = example_cone_qp();
        let r = lemma1_sandwich_check(&prob, 200, 3, 1.7, Execution::Sequential).unwrap();
        assert!(r.passed());
        assert!(r.min_lower_slack.abs() <= 1e-12 && r.max_upper_slack <= 1e-12);
    }

    #[test]
    fn sandwich_holds_on_game_and_catches_sign_fault() {
        let (a, b) = random_game_data(3, 3, 20, 11);
        let game = build_game(&a, &b).unwrap();
        let seq = lemma1_sandwich_check(&game, 300, 5, 1.0, Execution::Sequential).unwrap();
        assert!(seq.passed(), "{seq:?}");
        let par = lemma1_sandwich_check(&game, 300, 5, 1.0, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        let faulty = |p: &CompositeProblem, xh: &Vector, sh: &Vector, x: &Vector, s: &Vector, y: &Vector, rho: f64| {
            let w = y + (p.g.apply(x) - s) * rho;
            let gx = p.g.jacobian_transpose_apply(x, &w);
            phi(p, xh, sh, y, rho) - phi(p, x, s, y, rho) + gx.dot(&(xh - x)) + w.dot(&(sh - s))
        };
        let bad = lemma1_sandwich_check_with(&game, 300, 5, 1.0, Execution::Sequential, &faulty).unwrap();
        assert!(!bad.passed());
        assert!(lemma1_sandwich_check(&game, 0, 5, 1.0, Execution::Sequential).is_err());
    }
}
