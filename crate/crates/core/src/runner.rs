//! Config-driven experiments: JSON run configurations, CSV traces, summary
//! lines with certificate verdicts, batch execution and the invariant checks
//! behind the `check` command.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::instances::{build_instance, Instance, InstanceSpec, INSTANCE_NAMES};
use crate::metrics::{fit_rate_slope, lemma1_sandwich_check, TraceRecord};
use crate::problem::{check_constants, finite_diff_check_with, CompositeProblem, Vector};
use crate::sample_rng;
use crate::schedule::{Schedule, ScheduleParams, Variant, RHO0_GRID};
use crate::solver::{run, OpCounters, RunOptions, RunResult, RunStatus};

pub const TRACE_HEADER: &str =
    "k,tau,rho,eta,L,beta,primal_residual,dual_residual,pd_gap,feasibility,theorem_bound,wall_time_ms";

fn default_rho0() -> f64 {
    crate::schedule::DEFAULT_RHO0
}
fn default_gamma() -> f64 {
    crate::schedule::DEFAULT_GAMMA
}
fn default_max_iters() -> usize {
    10_000
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSpec,
    pub variant: Variant,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Seed for instances that set none themselves.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default = "yes")]
    pub certificate: bool,
    /// Bound `D` for the ergodic variants; derived from the oracle if absent.
    #[serde(default)]
    pub d_bound: Option<f64>,
    #[serde(default)]
    pub cone_mode: bool,
    /// Evaluate the dual residual and gap every this many iterations.
    #[serde(default)]
    pub dual_every: Option<usize>,
    /// Record wall time in the trace; disable for byte-identical reruns.
    #[serde(default = "yes")]
    pub wall_time: bool,
}

impl RunConfig {
    pub fn new(instance: InstanceSpec, variant: Variant) -> Self {
        RunConfig {
            instance,
            variant,
            rho0: default_rho0(),
            gamma: default_gamma(),
            max_iters: default_max_iters(),
            seed: None,
            trace_path: None,
            certificate: true,
            d_bound: None,
            cone_mode: false,
            dual_every: None,
            wall_time: true,
        }
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        let mut p = ScheduleParams::new(self.variant).rho0(self.rho0).gamma(self.gamma).cone_mode(self.cone_mode);
        if let Some(d) = self.d_bound {
            p = p.d_bound(d);
        }
        p
    }

    pub fn run_options(&self) -> RunOptions {
        let mut o = RunOptions::new(self.max_iters);
        o.dual_every = self.dual_every;
        o.wall_time = self.wall_time;
        o.certificate = self.certificate;
        o
    }

    /// Checks the config against the instance constants and schedule
    /// preconditions without running anything or computing oracles.
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("`max_iters` must be at least 1".into()));
        }
        if self.dual_every == Some(0) {
            return Err(Error::Config("`dual_every` must be at least 1".into()));
        }
        let inst = build_instance(&self.instance, self.seed, false, Execution::Sequential)?;
        if self.cone_mode && inst.problem.cone.is_none() {
            return Err(Error::Config(format!(
                "`cone_mode` needs a cone-constrained instance, got `{}`",
                self.instance.name
            )));
        }
        let mut params = self.schedule_params();
        if inst.problem.optimum.is_none() && params.d_bound.is_none() {
            params.d_bound = Some(1.0);
        }
        Schedule::new(&inst.problem, &params, &inst.x0, &inst.y0)?;
        Ok(())
    }

    /// Resolves relative file paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        if let Some(p) = &self.trace_path {
            if p.is_relative() {
                self.trace_path = Some(base.join(p));
            }
        }
        if let Some(paths) = &mut self.instance.data {
            for p in paths.iter_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
    }
}

/// Parses and validates a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file; relative paths inside it are taken relative to the file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.rebase(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|a| a.to_string()).unwrap_or_default()
}

/// Writes a trace as CSV, one row per record, empty fields for absent values.
pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.tau,
            r.rho,
            r.eta,
            r.lipschitz,
            r.beta,
            fmt_opt(r.primal_residual),
            fmt_opt(r.dual_residual),
            fmt_opt(r.pd_gap),
            fmt_opt(r.feasibility),
            fmt_opt(r.theorem_bound),
            r.wall_time_ms
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Outcome of comparing a trace against the theorem bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CertificateVerdict {
    Pass { checked: usize },
    Fail { k: usize, measure: f64, bound: f64 },
    Unavailable,
}

impl fmt::Display for CertificateVerdict {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            CertificateVerdict::Pass { checked } => write!(f, "pass ({checked} iterates)"),
            CertificateVerdict::Fail { k, measure, bound } => write!(f, "FAIL at k={k}: {measure:.3e} > {bound:.3e}"),
            CertificateVerdict::Unavailable => write!(f, "unavailable"),
        }
    }
}

/// The quantity the certificate bounds: `E(x)` on cone programs, the primal
/// residual otherwise.
pub fn certified_measure(r: &TraceRecord) -> Option<f64> {
    match r.feasibility {
        Some(feas) => r.primal_residual.map(|p| p.abs().max(feas)),
        None => r.primal_residual,
    }
}

/// Checks every row with a bound, allowing violations up to twice the
/// oracle's accuracy.
pub fn verify_certificate(trace: &[TraceRecord], accuracy: f64) -> CertificateVerdict {
    let mut checked = 0;
    for r in trace {
        if let (Some(b), Some(m)) = (r.theorem_bound, certified_measure(r)) {
            checked += 1;
            if !(m <= b + 2.0 * accuracy) {
                return CertificateVerdict::Fail { k: r.k, measure: m, bound: b };
            }
        }
    }
    if checked == 0 {
        CertificateVerdict::Unavailable
    } else {
        CertificateVerdict::Pass { checked }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub instance: String,
    pub variant: Variant,
    pub iterations: usize,
    pub status: String,
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    pub pd_gap: Option<f64>,
    pub slope: Option<f64>,
    pub certificate: CertificateVerdict,
    pub exit_code: i32,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let e = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.3e}"));
        write!(
            f,
            "{} {} iters={} status={} primal={} dual={} gap={} slope={} certificate={}",
            self.instance,
            self.variant,
            self.iterations,
            self.status,
            e(self.primal_residual),
            e(self.dual_residual),
            e(self.pd_gap),
            self.slope.map_or("-".to_string(), |s| format!("{s:.3}")),
            self.certificate
        )
    }
}

/// Fits the rate slope of the certified measure over the last two decades of
/// the run, when there are enough positive points.
fn trace_slope(trace: &[TraceRecord]) -> Option<f64> {
    let last = trace.last()?.k;
    let pts: Vec<(usize, f64)> = trace.iter().filter_map(|r| certified_measure(r).map(|m| (r.k, m))).collect();
    fit_rate_slope(&pts, (last / 100).max(1), last).ok()
}

fn last_some(trace: &[TraceRecord], f: impl Fn(&TraceRecord) -> Option<f64>) -> Option<f64> {
    trace.iter().rev().find_map(f)
}

/// Runs a validated config on a prepared instance.
pub fn run_config_on(cfg: &RunConfig, inst: &Instance) -> Result<(RunResult, RunSummary)> {
    let result = run(&inst.problem, &cfg.schedule_params(), &inst.x0, &inst.y0, &cfg.run_options(), |_, _| {})?;
    let (status, exit_code) = match &result.status {
        RunStatus::Completed => ("completed".to_string(), 0),
        RunStatus::Diverged(m) => (format!("diverged ({m})"), 2),
        RunStatus::PreconditionFailed(m) => (format!("precondition failed ({m})"), 1),
    };
    let accuracy = inst.problem.optimum.as_ref().map_or(0.0, |o| o.accuracy);
    let certificate =
        if cfg.certificate { verify_certificate(&result.trace, accuracy) } else { CertificateVerdict::Unavailable };
    let summary = RunSummary {
        instance: inst.problem.name.clone(),
        variant: cfg.variant,
        iterations: result.final_state.k,
        status,
        primal_residual: result.trace.last().and_then(|r| r.primal_residual),
        dual_residual: last_some(&result.trace, |r| r.dual_residual),
        pd_gap: last_some(&result.trace, |r| r.pd_gap),
        slope: trace_slope(&result.trace),
        certificate,
        exit_code,
    };
    Ok((result, summary))
}

/// Builds the instance (with its oracle), runs, and writes the trace.
pub fn run_experiment(cfg: &RunConfig, exec: Execution) -> Result<RunSummary> {
    cfg.validate()?;
    let inst = build_instance(&cfg.instance, cfg.seed, true, exec)?;
    let (result, summary) = run_config_on(cfg, &inst)?;
    if let Some(path) = &cfg.trace_path {
        write_trace(&result.trace, path)?;
    }
    Ok(summary)
}

/// Runs every `*.json` config in `dir` (sorted by file name), concurrently
/// under [`Execution::Parallel`]. Configs writing to the same trace file are
/// rejected up front.
pub fn run_batch(dir: &Path, exec: Execution) -> Result<Vec<(PathBuf, Result<RunSummary>)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let configs: Vec<Result<RunConfig>> = files.iter().map(|p| load_config(p)).collect();
    let mut seen = std::collections::HashMap::new();
    for (file, cfg) in files.iter().zip(&configs) {
        if let Ok(RunConfig { trace_path: Some(t), .. }) = cfg {
            if let Some(other) = seen.insert(t.clone(), file.clone()) {
                return Err(Error::Config(format!(
                    "{} and {} both write {}",
                    other.display(),
                    file.display(),
                    t.display()
                )));
            }
        }
    }
    let summaries = exec.map(configs.len(), |i| match &configs[i] {
        Ok(cfg) => run_experiment(cfg, Execution::Sequential),
        Err(e) => Err(Error::Config(e.to_string())),
    });
    Ok(files.into_iter().zip(summaries).collect())
}

/// Final primal residual for each `rho0` of the tuning grid.
pub fn sweep_rho0(cfg: &RunConfig, inst: &Instance, exec: Execution) -> Vec<(f64, Result<Option<f64>>)> {
    let runs = exec.map(RHO0_GRID.len(), |i| {
        let c = RunConfig { rho0: RHO0_GRID[i], certificate: false, ..cfg.clone() };
        run_config_on(&c, inst).map(|(_, s)| s.primal_residual)
    });
    RHO0_GRID.iter().copied().zip(runs).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn outcome(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail: detail.into() }
}

/// Moreau envelope identity `|v|^2 / (2 lam) = e_{lam H}(v) + e_{H*/lam}(v / lam)`,
/// linking `prox_H` to the closed-form conjugate. Returns the worst relative error.
pub fn moreau_identity_error(prob: &CompositeProblem, samples: usize, seed: u64, exec: Execution) -> Result<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let outer = prob.outer.function().clone();
    let errs = exec.map(samples, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let lam: f64 = 10f64.powf(rng.random_range(-2.0..2.0));
        let v = Vector::from_fn(prob.dim_n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let p = outer.prox(&v, lam);
        let q = (&v - &p) / lam;
        let env_h = outer.value(&p) + (&p - &v).norm_squared() / (2.0 * lam);
        let conj = outer.conjugate_value(&q)?;
        let env_conj = conj + 0.5 * lam * (&q - &v / lam).norm_squared();
        let lhs = v.norm_squared() / (2.0 * lam);
        Some((env_h + env_conj - lhs).abs() / lhs.max(1.0))
    });
    errs.into_iter()
        .try_fold(0.0_f64, |m, e| e.map(|e| m.max(e)))
        .ok_or_else(|| Error::CertificateUnavailable(format!("{}: outer function has no conjugate", prob.name)))
}

/// Worst violation of `tau_k^2 = (1 - tau_k) tau_{k-1}^2` and of
/// `1/(k+1) <= tau_k <= 2/(k+2)` over `k <= k_max`.
pub fn tau_recursion_error(schedule: &mut Schedule, k_max: usize) -> (f64, f64) {
    let (mut ident, mut bounds) = (0.0_f64, 0.0_f64);
    let mut prev = schedule.state(0).tau;
    for k in 1..=k_max {
        let t = schedule.state(k).tau;
        ident = ident.max((t * t - (1.0 - t) * prev * prev).abs());
        let kf = k as f64;
        bounds = bounds.max(1.0 / (kf + 1.0) - t).max(t - 2.0 / (kf + 2.0));
        prev = t;
    }
    (ident, bounds)
}

/// Worst relative deviation of `y~^{k+1} - eta_k Theta_{k+1}` from `y^0`.
pub fn telescoping_error(inst: &Instance, params: &ScheduleParams, iters: usize) -> Result<f64> {
    let mut schedule = Schedule::new(&inst.problem, params, &inst.x0, &inst.y0)?;
    let etas: Vec<f64> = (0..iters).map(|k| schedule.state(k).eta).collect();
    let y0 = inst.y0.clone();
    let mut worst = 0.0_f64;
    let mut opts = RunOptions::new(iters);
    opts.certificate = false;
    run(&inst.problem, params, &inst.x0, &inst.y0, &opts, |s, _| {
        if s.k > 0 {
            let lhs = &s.y_tilde - &s.theta * etas[s.k - 1];
            let scale = y0.norm().max(s.y_tilde.norm()).max(1.0);
            worst = worst.max((lhs - &y0).norm() / scale);
        }
    })?;
    Ok(worst)
}

/// Largest ratio `L_g [|y*| + |y~^k - y*| + rho M_g |x^k - x*|] / (rho C)`
/// along an ergodic convex run; the bound requires it to stay at most 1.
pub fn ergodic_bound_ratio(inst: &Instance, iters: usize) -> Result<f64> {
    let prob = &inst.problem;
    let opt = prob.optimum.as_ref().ok_or_else(|| Error::CertificateUnavailable("no optimum".into()))?;
    let ys = opt.y.clone().ok_or_else(|| Error::CertificateUnavailable("no optimal dual point".into()))?;
    let params = ScheduleParams::new(Variant::ErgodicConvex);
    let schedule = Schedule::new(prob, &params, &inst.x0, &inst.y0)?;
    let c = schedule.constants().c.expect("ergodic schedule has C");
    let mut worst = 0.0_f64;
    let mut opts = RunOptions::new(iters);
    opts.certificate = false;
    run(prob, &params, &inst.x0, &inst.y0, &opts, |s, r| {
        let lhs = prob.l_g * (ys.norm() + (&s.y_tilde - &ys).norm() + r.rho * prob.m_g * (&s.x - &opt.x).norm());
        worst = worst.max(lhs / (r.rho * c));
    })?;
    Ok(worst)
}

/// Counts the oracle calls of each iteration and compares them with the
/// contract: one `g` evaluation less when the previous `g(x)` is reused.
pub fn op_counter_violations(inst: &Instance, params: &ScheduleParams, iters: usize) -> Result<usize> {
    let schedule = Schedule::new(&inst.problem, params, &inst.x0, &inst.y0)?;
    let reuse = schedule.is_momentum_free();
    let full = OpCounters { g_evals: 2, jvp_evals: 1, grad_f_evals: 1, prox_h_calls: 1, prox_hstar_calls: 1 };
    let mut bad = 0;
    let mut opts = RunOptions::new(iters);
    opts.certificate = false;
    run(&inst.problem, params, &inst.x0, &inst.y0, &opts, |s, _| {
        if s.k == 0 {
            return;
        }
        let expected = if reuse && s.k > 1 { OpCounters { g_evals: 1, ..full } } else { full };
        if s.ops != expected {
            bad += 1;
        }
    })?;
    Ok(bad)
}

/// The invariant checks run by the `check` command.
pub fn check_suite(exec: Execution) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let build = |name: &str, oracle: bool| build_instance(&InstanceSpec::named(name), None, oracle, exec);

    for name in INSTANCE_NAMES.iter().filter(|n| **n != "nan_fault") {
        match build(name, false) {
            Ok(inst) => {
                match finite_diff_check_with(&inst.problem, 200, 1, exec) {
                    Ok(r) => out.push(outcome(
                        format!("finite differences ({name})"),
                        r.passed,
                        format!("gradient {:.2e}, jacobian {:.2e}", r.max_gradient_error, r.max_jacobian_error),
                    )),
                    Err(e) => out.push(outcome(format!("finite differences ({name})"), false, e.to_string())),
                }
                let c = check_constants(&inst.problem, 500, 2, exec);
                out.push(outcome(
                    format!("declared constants ({name})"),
                    c.passed(),
                    format!("worst M_g ratio {:.3}, worst L_g ratio {:.3}", c.worst_mg_ratio, c.worst_lg_ratio),
                ));
                match moreau_identity_error(&inst.problem, 1000, 3, exec) {
                    Ok(e) => {
                        out.push(outcome(format!("Moreau identity ({name})"), e <= 1e-10, format!("worst {e:.2e}")))
                    }
                    Err(e) => out.push(outcome(format!("Moreau identity ({name})"), false, e.to_string())),
                }
            }
            Err(e) => out.push(outcome(format!("build {name}"), false, e.to_string())),
        }
    }

    match build("classification", false) {
        Ok(inst) => {
            let p = &inst.problem;
            let rho0 = crate::schedule::DEFAULT_GAMMA * p.mu_total() / (p.lg_mh() + p.m_g * p.m_g);
            let params = ScheduleParams::new(Variant::SemiErgodicStrong).rho0(rho0);
            match Schedule::new(p, &params, &inst.x0, &inst.y0) {
                Ok(mut s) => {
                    let (ident, bounds) = tau_recursion_error(&mut s, 10_000);
                    out.push(outcome(
                        "tau recursion",
                        ident <= 1e-14 && bounds <= 1e-14,
                        format!("identity {ident:.2e}, bounds {bounds:.2e}"),
                    ));
                }
                Err(e) => out.push(outcome("tau recursion", false, e.to_string())),
            }
            match telescoping_error(&inst, &params, 2000) {
                Ok(e) => out.push(outcome("telescoping (thm4)", e <= 1e-8, format!("worst {e:.2e}"))),
                Err(e) => out.push(outcome("telescoping (thm4)", false, e.to_string())),
            }
        }
        Err(e) => out.push(outcome("build classification", false, e.to_string())),
    }

    match build("game", true) {
        Ok(inst) => {
            let params = ScheduleParams::new(Variant::SemiErgodicConvex);
            match telescoping_error(&inst, &params, 2000) {
                Ok(e) => out.push(outcome("telescoping (thm3)", e <= 1e-8, format!("worst {e:.2e}"))),
                Err(e) => out.push(outcome("telescoping (thm3)", false, e.to_string())),
            }
            match lemma1_sandwich_check(&inst.problem, 1000, 4, 1.0, exec) {
                Ok(r) => out.push(outcome(
                    "curvature sandwich (game)",
                    r.passed(),
                    format!("lower {:.2e}, upper {:.2e}, skipped {}", r.min_lower_slack, r.max_upper_slack, r.skipped),
                )),
                Err(e) => out.push(outcome("curvature sandwich (game)", false, e.to_string())),
            }
            match ergodic_bound_ratio(&inst, 2000) {
                Ok(r) => out.push(outcome("ergodic iterate bound (game)", r <= 1.0, format!("worst ratio {r:.3e}"))),
                Err(e) => out.push(outcome("ergodic iterate bound (game)", false, e.to_string())),
            }
            for variant in Variant::ALL.into_iter().filter(|v| !v.needs_strong_convexity()) {
                let name = format!("op counters ({variant})");
                match op_counter_violations(&inst, &ScheduleParams::new(variant), 50) {
                    Ok(b) => out.push(outcome(name, b == 0, format!("{b} mismatching iterations"))),
                    Err(e) => out.push(outcome(name, false, e.to_string())),
                }
            }
        }
        Err(e) => out.push(outcome("build game", false, e.to_string())),
    }

    match build("toy_max", false) {
        Ok(inst) => match ergodic_bound_ratio(&inst, 10_000) {
            Ok(r) => out.push(outcome("ergodic iterate bound (toy_max)", r <= 1.0, format!("worst ratio {r:.3e}"))),
            Err(e) => out.push(outcome("ergodic iterate bound (toy_max)", false, e.to_string())),
        },
        Err(e) => out.push(outcome("build toy_max", false, e.to_string())),
    }
    out
}
