//! Per-iteration parameter schedules `(tau_k, rho_k, eta_k, L_k, beta_{k+1})`.
//!
//! Four variants are provided:
//!
//! | tag    | averaging       | rate      | requires        |
//! |--------|-----------------|-----------|-----------------|
//! | `thm1` | ergodic         | `O(1/k)`  | bound `D`       |
//! | `thm2` | ergodic         | `O(1/k^2)`| `mu_F > 0`, `D` |
//! | `thm3` | semi-ergodic    | `O(1/k)`  | `L_g M_H < inf` |
//! | `thm4` | semi-ergodic    | `O(1/k^2)`| `mu_F > 0`, small `rho_0` |
//!
//! In cone mode the semi-ergodic variants replace `L_k` by a bound that does
//! not need a finite `M_H` (see [`cone_l_override`]).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{CompositeProblem, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "thm1")]
    ErgodicConvex,
    #[serde(rename = "thm2")]
    ErgodicStrong,
    #[serde(rename = "thm3")]
    SemiErgodicConvex,
    #[serde(rename = "thm4")]
    SemiErgodicStrong,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::ErgodicConvex, Variant::ErgodicStrong, Variant::SemiErgodicConvex, Variant::SemiErgodicStrong];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::ErgodicConvex => "thm1",
            Variant::ErgodicStrong => "thm2",
            Variant::SemiErgodicConvex => "thm3",
            Variant::SemiErgodicStrong => "thm4",
        }
    }

    /// Ergodic variants report averages; semi-ergodic ones the last primal iterate.
    pub fn is_ergodic(self) -> bool {
        matches!(self, Variant::ErgodicConvex | Variant::ErgodicStrong)
    }

    pub fn needs_strong_convexity(self) -> bool {
        matches!(self, Variant::ErgodicStrong | Variant::SemiErgodicStrong)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "thm1" => Ok(Variant::ErgodicConvex),
            "thm2" => Ok(Variant::ErgodicStrong),
            "thm3" => Ok(Variant::SemiErgodicConvex),
            "thm4" => Ok(Variant::SemiErgodicStrong),
            other => invalid(format!("unknown variant `{other}` (expected thm1..thm4)")),
        }
    }
}

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_RHO0: f64 = 1.0;
/// Tuning grid for `rho_0` of the semi-ergodic variants.
pub const RHO0_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub variant: Variant,
    pub rho0: f64,
    pub gamma: f64,
    pub d_bound: Option<f64>,
    pub cone_mode: bool,
}

impl ScheduleParams {
    pub fn new(variant: Variant) -> Self {
        ScheduleParams { variant, rho0: DEFAULT_RHO0, gamma: DEFAULT_GAMMA, d_bound: None, cone_mode: false }
    }

    pub fn rho0(mut self, rho0: f64) -> Self {
        self.rho0 = rho0;
        self
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn d_bound(mut self, d: f64) -> Self {
        self.d_bound = Some(d);
        self
    }

    pub fn cone_mode(mut self, on: bool) -> Self {
        self.cone_mode = on;
        self
    }
}

/// Parameters used at iteration `k`. `beta` is `beta_{k+1}`, the momentum
/// applied when forming `x_hat^{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub k: usize,
    pub tau: f64,
    pub rho: f64,
    pub eta: f64,
    pub lipschitz: f64,
    pub beta: f64,
    /// `theta_{k+1}` of the strongly convex ergodic variant.
    pub theta: Option<f64>,
}

/// `L_k = L_f + (rho_k / gamma) (L_g [|y0| / rho_0 + (2 - gamma) B_g] + M_g^2)`.
///
/// Used by the semi-ergodic variants on cone-constrained programs, where `H` is
/// an indicator and has no finite Lipschitz constant.
pub fn cone_l_override(prob: &CompositeProblem, params: &ScheduleParams, rho_k: f64, y0_norm: f64) -> Result<f64> {
    let curvature = if prob.l_g == 0.0 {
        0.0
    } else {
        let b_g = prob
            .g
            .bound
            .ok_or_else(|| Error::Precondition("cone mode with a nonlinear g needs the bound B_g on |g(x)|".into()))?;
        prob.l_g * (y0_norm / params.rho0 + (2.0 - params.gamma) * b_g)
    };
    Ok(prob.f.lipschitz + (rho_k / params.gamma) * (curvature + prob.m_g * prob.m_g))
}

/// Problem constants captured when the schedule is built.
#[derive(Debug, Clone)]
pub struct ScheduleConstants {
    pub l_f: f64,
    pub mu_f: f64,
    pub mu_h: f64,
    pub m_g: f64,
    pub l_g: f64,
    pub lg_mh: f64,
    /// `C` of the ergodic variants.
    pub c: Option<f64>,
    /// `D` of the ergodic variants.
    pub d: Option<f64>,
    /// `P_0` of the strongly convex ergodic variant.
    pub p0: Option<f64>,
    pub l0: f64,
    pub rho0: f64,
    pub eta0: f64,
    pub gamma: f64,
    /// `(|y0|, B_g)` when the cone override for `L_k` is active.
    cone: Option<(f64, f64)>,
}

#[cfg(test)]
impl ScheduleConstants {
    pub(crate) fn for_tests(l0: f64, gamma: f64, rho0: f64, p0: Option<f64>) -> Self {
        ScheduleConstants {
            l_f: 0.0,
            mu_f: 0.0,
            mu_h: 0.0,
            m_g: 0.0,
            l_g: 0.0,
            lg_mh: 0.0,
            c: None,
            d: None,
            p0,
            l0,
            rho0,
            eta0: (1.0 - gamma) * rho0,
            gamma,
            cone: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Schedule {
    variant: Variant,
    consts: ScheduleConstants,
    /// `tau_k` for the strongly convex semi-ergodic variant.
    taus: Vec<f64>,
    /// `(rho_k, L_k)` for the strongly convex ergodic variant.
    growth: Vec<(f64, f64)>,
}

fn ergodic_c(l_f: f64, m_g: f64, l_g: f64, d: f64) -> f64 {
    let a = l_f + 2.0 * m_g * m_g + 2.0;
    let b = l_g * d * (l_g * d + 4.0 * m_g + 2.0);
    a.max(b)
}

/// `theta_{k+1} = 2 L_k / (mu_f + sqrt(mu_f^2 + 4 L_k (L_k + mu_h)))`.
pub fn thm2_theta(l_k: f64, mu_f: f64, mu_h: f64) -> f64 {
    2.0 * l_k / (mu_f + (mu_f * mu_f + 4.0 * l_k * (l_k + mu_h)).sqrt())
}

/// `P_0 = rho_0 / (2 L_0) [sqrt(4 L_0 mu_F + (2 L_0 - mu_f)^2) - (2 L_0 - mu_f)]`.
pub fn thm2_p0(rho0: f64, l0: f64, mu_f: f64, mu_h: f64) -> f64 {
    let a = 2.0 * l0 - mu_f;
    rho0 / (2.0 * l0) * ((4.0 * l0 * (mu_f + mu_h) + a * a).sqrt() - a)
}

/// `tau_{k+1} = (tau_k / 2)(sqrt(tau_k^2 + 4) - tau_k)`, evaluated in the
/// cancellation-free form `2 tau_k / (sqrt(tau_k^2 + 4) + tau_k)`.
pub fn thm4_next_tau(tau: f64) -> f64 {
    2.0 * tau / ((tau * tau + 4.0).sqrt() + tau)
}

impl Schedule {
    pub fn new(prob: &CompositeProblem, params: &ScheduleParams, x0: &Vector, y0: &Vector) -> Result<Self> {
        if !(params.gamma > 0.0 && params.gamma < 1.0) {
            return invalid(format!("gamma must lie in (0, 1), got {}", params.gamma));
        }
        if !(params.rho0 > 0.0 && params.rho0.is_finite()) {
            return invalid(format!("rho0 must be positive, got {}", params.rho0));
        }
        let mu_f = prob.f.strong_convexity;
        let mu_h = prob.h.strong_convexity;
        let mu = mu_f + mu_h;
        let variant = params.variant;
        let l_f = prob.f.lipschitz;
        let m_g = prob.m_g;
        let l_g = prob.l_g;
        let mut consts = ScheduleConstants {
            l_f,
            mu_f,
            mu_h,
            m_g,
            l_g,
            lg_mh: prob.lg_mh(),
            c: None,
            d: None,
            p0: None,
            l0: 0.0,
            rho0: params.rho0,
            eta0: 0.0,
            gamma: params.gamma,
            cone: None,
        };
        if variant.needs_strong_convexity() && !(mu > 0.0) {
            return Err(Error::Precondition(format!(
                "{variant} needs a strongly convex F (mu_f + mu_h > 0); without it the rate degrades to O(1/k)"
            )));
        }
        match variant {
            Variant::ErgodicConvex | Variant::ErgodicStrong => {
                if params.rho0 != 1.0 {
                    return Err(Error::Precondition(format!(
                        "{variant} fixes rho = 1 (the constant C is calibrated for it), got rho0 = {}",
                        params.rho0
                    )));
                }
                let d = resolve_d_bound(prob, params, x0, y0)?;
                let c = ergodic_c(l_f, m_g, l_g, d);
                consts.d = Some(d);
                consts.c = Some(c);
                consts.l0 = l_f + params.rho0 * (c + 2.0 * m_g * m_g);
                consts.eta0 = params.rho0 / 2.0;
                if variant == Variant::ErgodicStrong {
                    consts.p0 = Some(thm2_p0(params.rho0, consts.l0, mu_f, mu_h));
                }
            }
            Variant::SemiErgodicConvex | Variant::SemiErgodicStrong => {
                if params.cone_mode {
                    // validates B_g availability
                    cone_l_override(prob, params, params.rho0, y0.norm())?;
                    consts.cone = Some((y0.norm(), prob.g.bound.unwrap_or(0.0)));
                } else if !consts.lg_mh.is_finite() {
                    return Err(Error::Precondition(format!(
                        "{variant} needs L_g * M_H < inf (H Lipschitz or g affine); got L_g = {l_g}, M_H = inf"
                    )));
                }
                if variant == Variant::SemiErgodicStrong {
                    let bound = mu / (consts.lg_mh + m_g * m_g);
                    if params.rho0 > bound {
                        return Err(Error::Precondition(format!(
                            "thm4 needs 0 < rho0 <= mu_F / (L_g M_H + M_g^2) = {bound:.6e}, got rho0 = {}",
                            params.rho0
                        )));
                    }
                }
                consts.eta0 = (1.0 - params.gamma) * params.rho0;
            }
        }
        let mut schedule = Schedule { variant, consts, taus: vec![1.0], growth: Vec::new() };
        if variant == Variant::ErgodicStrong {
            schedule.growth.push((params.rho0, schedule.consts.l0));
        }
        if matches!(variant, Variant::SemiErgodicConvex | Variant::SemiErgodicStrong) {
            schedule.consts.l0 = schedule.lipschitz_semi(params.rho0);
        }
        Ok(schedule)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn constants(&self) -> &ScheduleConstants {
        &self.consts
    }

    /// True when `beta_{k+1} = 0` for every `k`.
    pub fn is_momentum_free(&self) -> bool {
        self.variant.is_ergodic()
    }

    fn lipschitz_semi(&self, rho: f64) -> f64 {
        let c = &self.consts;
        match c.cone {
            Some((y0_norm, b_g)) => {
                let curvature = if c.l_g == 0.0 { 0.0 } else { c.l_g * (y0_norm / c.rho0 + (2.0 - c.gamma) * b_g) };
                c.l_f + (rho / c.gamma) * (curvature + c.m_g * c.m_g)
            }
            None => c.l_f + c.lg_mh + c.m_g * c.m_g * rho / c.gamma,
        }
    }

    fn tau_strong(&mut self, k: usize) -> f64 {
        while self.taus.len() <= k {
            let last = *self.taus.last().expect("tau_0 is seeded");
            self.taus.push(thm4_next_tau(last));
        }
        self.taus[k]
    }

    fn growth(&mut self, k: usize) -> (f64, f64) {
        while self.growth.len() <= k {
            let (rho, l) = *self.growth.last().expect("seeded with (rho_0, L_0)");
            let theta = thm2_theta(l, self.consts.mu_f, self.consts.mu_h);
            self.growth.push((rho / theta, l / theta));
        }
        self.growth[k]
    }

    /// Parameters for iteration `k`; later values are computed lazily and cached.
    pub fn state(&mut self, k: usize) -> ScheduleState {
        let c = self.consts.clone();
        match self.variant {
            Variant::ErgodicConvex => {
                ScheduleState { k, tau: 1.0, rho: c.rho0, eta: c.eta0, lipschitz: c.l0, beta: 0.0, theta: None }
            }
            Variant::ErgodicStrong => {
                let (rho, l) = self.growth(k);
                ScheduleState {
                    k,
                    tau: 1.0,
                    rho,
                    eta: rho / 2.0,
                    lipschitz: l,
                    beta: 0.0,
                    theta: Some(thm2_theta(l, c.mu_f, c.mu_h)),
                }
            }
            Variant::SemiErgodicConvex => {
                let tau = 1.0 / (k as f64 + 1.0);
                let tau_next = 1.0 / (k as f64 + 2.0);
                let rho = c.rho0 / tau;
                ScheduleState {
                    k,
                    tau,
                    rho,
                    eta: (1.0 - c.gamma) * rho,
                    lipschitz: self.lipschitz_semi(rho),
                    beta: (1.0 - tau) * tau_next / tau,
                    theta: None,
                }
            }
            Variant::SemiErgodicStrong => {
                let tau = self.tau_strong(k);
                let tau_next = self.tau_strong(k + 1);
                let rho = c.rho0 / (tau * tau);
                let l = self.lipschitz_semi(rho);
                let l_next = self.lipschitz_semi(c.rho0 / (tau_next * tau_next));
                let mh = c.mu_h;
                let beta = (1.0 - tau) * tau * (l + mh) / (tau * tau * (l + mh) + (l_next + mh) * tau_next);
                ScheduleState { k, tau, rho, eta: (1.0 - c.gamma) * rho, lipschitz: l, beta, theta: None }
            }
        }
    }

    /// Slacks `(lhs - rhs)` of the two momentum conditions that make the
    /// strongly convex semi-ergodic recursion contract at iteration `k >= 1`.
    pub fn momentum_condition_slacks(&mut self, k: usize) -> (f64, f64) {
        assert!(k >= 1, "conditions are stated for k >= 1");
        let prev = self.state(k - 1);
        let cur = self.state(k);
        let c = &self.consts;
        let (mf, mh) = (c.mu_f, c.mu_h);
        let m_k = (cur.lipschitz + mh) / (prev.lipschitz + mh);
        let first = (prev.lipschitz + mh) * (1.0 - cur.tau) * prev.tau * prev.tau
            + (mf + mh) * (1.0 - cur.tau) * cur.tau
            - (cur.lipschitz - mf) * cur.tau * cur.tau;
        let second = (prev.lipschitz + mh) * (prev.tau * prev.tau + m_k * cur.tau) * m_k * cur.tau
            - (cur.lipschitz - mf) * prev.tau * prev.tau;
        (first, second)
    }
}

fn resolve_d_bound(prob: &CompositeProblem, params: &ScheduleParams, x0: &Vector, y0: &Vector) -> Result<f64> {
    if let Some(d) = params.d_bound {
        if !(d > 0.0 && d.is_finite()) {
            return invalid(format!("D must be positive, got {d}"));
        }
        return Ok(d);
    }
    if let Some(opt) = &prob.optimum {
        if let Some(ys) = &opt.y {
            let d = (x0 - &opt.x).norm().max((y0 - ys).norm()).max(ys.norm());
            if d > 0.0 {
                return Ok(d);
            }
        }
    }
    let d = 10.0 * (x0.norm() + y0.norm() + 1.0);
    log::warn!(
        "no saddle point known for `{}`; using D = {d:.3} as the bound on max(|x0 - x*|, |y0 - y*|, |y*|); \
         the ergodic guarantees only hold if this over-estimates the true value",
        prob.name
    );
    Ok(d)
}
