//! The single-loop primal-dual iteration.
//!
//! One iteration with parameters `(tau, rho, eta, L, beta)`:
//!
//! ```text
//! y+      = prox_{rho H*}(y~ + rho g(x^))
//! x+      = prox_{h/L}(x^ - [grad f(x^) + g'(x^)^T y+] / L)
//! Theta+  = g(x+) - g(x^) + (y+ - y~) / rho
//! y~+     = y~ + eta [Theta+ - (1 - tau) Theta]
//! x^+     = x+ + beta (x+ - x)
//! y_breve = (1 - tau) y_breve + tau y+
//! ```
//!
//! On cone-constrained programs the first line becomes a projection onto the
//! dual cone.

use std::ops::AddAssign;
use std::time::Instant;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::metrics::{self, DualOracle, TraceRecord};
use crate::problem::{CompositeProblem, Vector};
use crate::prox::{project_cone, prox_conjugate_moreau, Cone};
use crate::schedule::{Schedule, ScheduleParams, ScheduleState, Variant};

/// Oracle calls made by one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    pub g_evals: usize,
    pub jvp_evals: usize,
    pub grad_f_evals: usize,
    pub prox_h_calls: usize,
    pub prox_hstar_calls: usize,
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, o: OpCounters) {
        self.g_evals += o.g_evals;
        self.jvp_evals += o.jvp_evals;
        self.grad_f_evals += o.grad_f_evals;
        self.prox_h_calls += o.prox_h_calls;
        self.prox_hstar_calls += o.prox_hstar_calls;
    }
}

#[derive(Debug, Clone)]
pub struct IterateState {
    pub k: usize,
    pub x: Vector,
    pub x_hat: Vector,
    pub y: Vector,
    pub y_tilde: Vector,
    pub y_breve: Vector,
    pub theta: Vector,
    pub xbar_num: Vector,
    pub ybar_num: Vector,
    pub weight_sum: f64,
    /// Calls made by the most recent iteration.
    pub ops: OpCounters,
    pub total_ops: OpCounters,
    /// `(y~^k, g(x^^k), rho_k)` of the most recent iteration.
    last_input: Option<(Vector, Vector, f64)>,
    /// `g(x^^k)` when it is already known from the previous iteration.
    g_hat_cache: Option<Vector>,
}

impl IterateState {
    /// Ergodic primal average, if any iteration has been averaged.
    pub fn x_average(&self) -> Option<Vector> {
        (self.weight_sum > 0.0).then(|| &self.xbar_num / self.weight_sum)
    }

    pub fn y_average(&self) -> Option<Vector> {
        (self.weight_sum > 0.0).then(|| &self.ybar_num / self.weight_sum)
    }

    /// The primal-dual pair the variant's guarantees are stated for: the
    /// averages for ergodic variants, `(x^k, y_breve^k)` otherwise.
    pub fn reported(&self, variant: Variant) -> (Vector, Vector) {
        if variant.is_ergodic() {
            match (self.x_average(), self.y_average()) {
                (Some(x), Some(y)) => (x, y),
                _ => (self.x.clone(), self.y.clone()),
            }
        } else {
            (self.x.clone(), self.y_breve.clone())
        }
    }
}

/// How `y^{k+1}` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualUpdate {
    /// `prox_{rho H*}` through Moreau's identity.
    Moreau,
    /// Projection onto the dual of the given cone.
    ConeProjection(Cone),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepMode {
    pub dual: DualUpdate,
    /// Reuse `g(x^{k+1})` as `g(x^^{k+1})` when `beta_{k+1} = 0`.
    pub reuse_g: bool,
}

impl Default for StepMode {
    fn default() -> Self {
        StepMode { dual: DualUpdate::Moreau, reuse_g: false }
    }
}

pub fn init_state(prob: &CompositeProblem, x0: &Vector, y0: &Vector) -> Result<IterateState> {
    prob.check_primal(x0)?;
    prob.check_dual(y0, "y0")?;
    if x0.iter().chain(y0.iter()).any(|v| !v.is_finite()) {
        return invalid("starting point must be finite");
    }
    if prob.h.value(x0) == f64::INFINITY {
        return invalid("x0 lies outside dom h");
    }
    let (p, n) = (prob.dim_p, prob.dim_n);
    Ok(IterateState {
        k: 0,
        x: x0.clone(),
        x_hat: x0.clone(),
        y: y0.clone(),
        y_tilde: y0.clone(),
        y_breve: y0.clone(),
        theta: Vector::zeros(n),
        xbar_num: Vector::zeros(p),
        ybar_num: Vector::zeros(n),
        weight_sum: 0.0,
        ops: OpCounters::default(),
        total_ops: OpCounters::default(),
        last_input: None,
        g_hat_cache: None,
    })
}

fn all_finite(vs: &[&Vector]) -> bool {
    vs.iter().all(|v| v.iter().all(|a| a.is_finite()))
}

/// Advances `state` by one iteration. On a non-finite result the state is
/// left untouched and [`Error::Diverged`] is returned.
pub fn step(prob: &CompositeProblem, sched: &ScheduleState, state: &mut IterateState, mode: StepMode) -> Result<()> {
    let (tau, rho, eta, l, beta) = (sched.tau, sched.rho, sched.eta, sched.lipschitz, sched.beta);
    let mut ops = OpCounters::default();

    let g_hat = match state.g_hat_cache.take() {
        Some(g) => g,
        None => {
            ops.g_evals += 1;
            prob.g.apply(&state.x_hat)
        }
    };
    let arg = &state.y_tilde + &g_hat * rho;
    let diverged = |what: &str| Error::Diverged(format!("non-finite {what} at iteration {}", state.k));
    if !all_finite(&[&arg]) {
        return Err(diverged("dual prox argument"));
    }
    ops.prox_hstar_calls += 1;
    let y_new = match mode.dual {
        DualUpdate::Moreau => prox_conjugate_moreau(prob.outer.function().as_ref(), &arg, rho)?,
        DualUpdate::ConeProjection(cone) => project_cone(&arg, cone.dual())?,
    };

    ops.grad_f_evals += 1;
    ops.jvp_evals += 1;
    let direction = prob.f.gradient(&state.x_hat) + prob.g.jacobian_transpose_apply(&state.x_hat, &y_new);
    let forward = &state.x_hat - direction / l;
    if !all_finite(&[&forward]) {
        return Err(diverged("primal gradient step"));
    }
    ops.prox_h_calls += 1;
    let x_new = prob.h.prox(&forward, 1.0 / l);

    ops.g_evals += 1;
    let g_new = prob.g.apply(&x_new);
    let theta_new = (&g_new - &g_hat) + (&y_new - &state.y_tilde) * (1.0 / rho);
    let y_tilde_new = &state.y_tilde + (&theta_new - &state.theta * (1.0 - tau)) * eta;
    let x_hat_new = if beta == 0.0 { x_new.clone() } else { &x_new + (&x_new - &state.x) * beta };
    let y_breve_new = &state.y_breve * (1.0 - tau) + &y_new * tau;

    if !all_finite(&[&y_new, &x_new, &g_new, &theta_new, &y_tilde_new, &x_hat_new, &y_breve_new]) {
        return Err(diverged("iterate"));
    }

    let g_cache = (mode.reuse_g && beta == 0.0).then(|| g_new.clone());
    state.last_input = Some((std::mem::replace(&mut state.y_tilde, y_tilde_new), g_hat, rho));
    state.x = x_new;
    state.x_hat = x_hat_new;
    state.y = y_new;
    state.theta = theta_new;
    state.y_breve = y_breve_new;
    state.g_hat_cache = g_cache;
    state.ops = ops;
    state.total_ops += ops;
    state.k += 1;
    Ok(())
}

/// Folds the newest iterate into the ergodic averages: uniform weights for the
/// convex ergodic variant, `rho_k` weights for the strongly convex one, and
/// nothing for the semi-ergodic variants (which report the last iterate).
pub fn update_averages(state: &mut IterateState, sched: &ScheduleState, variant: Variant) {
    let w = match variant {
        Variant::ErgodicConvex => 1.0,
        Variant::ErgodicStrong => sched.rho,
        Variant::SemiErgodicConvex | Variant::SemiErgodicStrong => return,
    };
    state.xbar_num.axpy(w, &state.x, 1.0);
    state.ybar_num.axpy(w, &state.y, 1.0);
    state.weight_sum += w;
}

/// The auxiliary variable eliminated by Moreau's identity,
/// `s^{k+1} = g(x^^k) + (y~^k - y^{k+1}) / rho_k`, for the last iteration.
pub fn reconstruct_s(state: &IterateState, rho: f64) -> Result<Vector> {
    if !(rho > 0.0) {
        return invalid(format!("rho must be positive, got {rho}"));
    }
    let (y_tilde, g_hat, _) =
        state.last_input.as_ref().ok_or_else(|| Error::InvalidInput("no iteration has been run yet".into()))?;
    Ok(g_hat + (y_tilde - &state.y) / rho)
}

/// `(y~^k, g(x^^k), rho_k)` used by the most recent iteration.
pub fn last_step_input(state: &IterateState) -> Option<(&Vector, &Vector, f64)> {
    state.last_input.as_ref().map(|(a, b, r)| (a, b, *r))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged(String),
    PreconditionFailed(String),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Evaluate the dual residual and gap every this many iterations.
    pub dual_every: Option<usize>,
    pub dual_oracle: DualOracle,
    /// Record wall time; disable for byte-identical traces.
    pub wall_time: bool,
    /// Record the theorem right-hand side when it is available.
    pub certificate: bool,
    /// Stop once the primal residual falls to this level.
    pub stop_below: Option<f64>,
}

impl RunOptions {
    pub fn new(max_iters: usize) -> Self {
        RunOptions {
            max_iters,
            dual_every: None,
            dual_oracle: DualOracle::default(),
            wall_time: true,
            certificate: true,
            stop_below: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_state: IterateState,
    /// Row `k` describes the reported point after `k` iterations.
    pub trace: Vec<TraceRecord>,
    pub status: RunStatus,
}

/// Runs the iteration from `(x0, y0)` for at most `options.max_iters`
/// iterations, recording one trace row per iterate (including `k = 0`).
/// `observe` sees every state and its row but cannot change them.
pub fn run<F>(
    prob: &CompositeProblem,
    params: &ScheduleParams,
    x0: &Vector,
    y0: &Vector,
    options: &RunOptions,
    mut observe: F,
) -> Result<RunResult>
where
    F: FnMut(&IterateState, &TraceRecord),
{
    if options.max_iters == 0 {
        return invalid("max_iters must be at least 1");
    }
    let mut state = init_state(prob, x0, y0)?;
    let mut schedule = match Schedule::new(prob, params, x0, y0) {
        Ok(s) => s,
        Err(Error::Precondition(msg)) => {
            return Ok(RunResult { final_state: state, trace: Vec::new(), status: RunStatus::PreconditionFailed(msg) })
        }
        Err(e) => return Err(e),
    };
    let dual = if params.cone_mode {
        let cone = prob.cone.ok_or_else(|| Error::InvalidInput("cone mode needs a cone-constrained problem".into()))?;
        DualUpdate::ConeProjection(cone)
    } else {
        DualUpdate::Moreau
    };
    let mode = StepMode { dual, reuse_g: schedule.is_momentum_free() };
    let variant = schedule.variant();
    let start = Instant::now();
    let mut evaluator = metrics::RowEvaluator::new(prob, &schedule, x0, y0, options);

    let mut trace = Vec::with_capacity(options.max_iters + 1);
    let row = evaluator.row(&schedule.state(0), &state, elapsed_ms(start, options));
    observe(&state, &row);
    trace.push(row);
    let mut status = RunStatus::Completed;
    for k in 0..options.max_iters {
        let sched = schedule.state(k);
        if let Err(e) = step(prob, &sched, &mut state, mode) {
            match e {
                Error::Diverged(msg) => {
                    log::warn!("{}: {msg}", prob.name);
                    status = RunStatus::Diverged(msg);
                    break;
                }
                other => return Err(other),
            }
        }
        update_averages(&mut state, &sched, variant);
        let row = evaluator.row(&schedule.state(k + 1), &state, elapsed_ms(start, options));
        observe(&state, &row);
        let done = matches!((options.stop_below, row.primal_residual), (Some(t), Some(r)) if r <= t);
        trace.push(row);
        if done {
            break;
        }
    }
    Ok(RunResult { final_state: state, trace, status })
}

fn elapsed_ms(start: Instant, options: &RunOptions) -> f64 {
    if options.wall_time {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}
