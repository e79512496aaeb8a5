//! Acceptance criteria. One PASS/FAIL line per criterion; exits nonzero on any
//! failure. Detail lines start with two spaces.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use slpd::instances::{build_instance, build_max_toy, Instance, InstanceSpec};
use slpd::metrics::{fit_rate_slope, lemma1_sandwich_check};
use slpd::runner::{
    certified_measure, ergodic_bound_ratio, moreau_identity_error, op_counter_violations, run_config_on,
    tau_recursion_error, telescoping_error, verify_certificate, CertificateVerdict, RunConfig,
};
use slpd::schedule::{ScheduleState, DEFAULT_GAMMA, RHO0_GRID};
use slpd::solver::{init_state, run, step, RunOptions, RunStatus, StepMode};
use slpd::{Execution, Schedule, ScheduleParams, Variant, Vector};

const EXEC: Execution = Execution::Sequential;

struct Outcome {
    passed: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, summary: String::new(), details: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.details.push(format!("info {line}"));
    }
}

fn instance(spec: InstanceSpec, oracle: bool) -> Instance {
    build_instance(&spec, None, oracle, EXEC).expect("instance builds")
}

fn named(name: &str) -> InstanceSpec {
    InstanceSpec::named(name)
}

fn classification(reg: f64) -> InstanceSpec {
    InstanceSpec { reg: Some(reg), ..named("classification") }
}

/// `rho0 = gamma mu_F / (L_g M_H + M_g^2)`, the largest value the strongly
/// convex semi-ergodic analysis admits.
fn strong_rho0(inst: &Instance) -> f64 {
    let p = &inst.problem;
    DEFAULT_GAMMA * p.mu_total() / (p.lg_mh() + p.m_g * p.m_g)
}

fn config(spec: &InstanceSpec, variant: Variant, rho0: f64, iters: usize) -> RunConfig {
    RunConfig { rho0, max_iters: iters, wall_time: false, ..RunConfig::new(spec.clone(), variant) }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn criterion1() -> Outcome {
    let mut out = Outcome::new();
    let cases = [
        (named("toy_max"), vec![(Variant::ErgodicConvex, false), (Variant::SemiErgodicConvex, false)]),
        (named("game"), vec![(Variant::ErgodicConvex, false), (Variant::SemiErgodicConvex, false)]),
        (
            named("classification"),
            vec![
                (Variant::ErgodicConvex, false),
                (Variant::ErgodicStrong, false),
                (Variant::SemiErgodicConvex, false),
                (Variant::SemiErgodicStrong, true),
            ],
        ),
    ];
    for (spec, variants) in cases {
        let (inst, t_oracle) = timed(|| instance(spec.clone(), true));
        let acc = inst.problem.optimum.as_ref().map_or(f64::NAN, |o| o.accuracy);
        out.note(format!("{}: oracle accuracy {acc:.2e} in {t_oracle:.2?}", spec.name));
        for (variant, strong) in variants {
            let rho0 = if strong { strong_rho0(&inst) } else { 1.0 };
            let cfg = config(&spec, variant, rho0, 5000);
            let (res, t) = timed(|| run_config_on(&cfg, &inst));
            let (ok, msg) = match res {
                Ok((r, _)) => {
                    let verdict = verify_certificate(&r.trace, acc);
                    let pass = matches!(verdict, CertificateVerdict::Pass { checked } if checked == 5000)
                        && matches!(r.status, RunStatus::Completed);
                    (pass, format!("{verdict}"))
                }
                Err(e) => (false, e.to_string()),
            };
            let within = t + t_oracle <= Duration::from_secs(60);
            out.check(ok && within, format!("{} {variant} rho0={rho0:.3e}: {msg} ({t:.2?})", spec.name));
        }
    }
    out.summary = "theorem-bound certificates hold at every k <= 5000".into();
    out
}

fn slope_of(spec: &InstanceSpec, variant: Variant, rho0: Option<f64>) -> (Result<f64, String>, Duration) {
    timed(|| {
        let inst = instance(spec.clone(), true);
        let rho0 = rho0.unwrap_or_else(|| strong_rho0(&inst));
        let cfg = RunConfig { certificate: false, ..config(spec, variant, rho0, 10_000) };
        let (r, _) = run_config_on(&cfg, &inst).map_err(|e| e.to_string())?;
        let pts: Vec<(usize, f64)> = r.trace.iter().filter_map(|t| certified_measure(t).map(|m| (t.k, m))).collect();
        fit_rate_slope(&pts, 100, 10_000).map_err(|e| e.to_string())
    })
}

fn criterion2() -> Outcome {
    let mut out = Outcome::new();
    let cases = [
        (named("game"), Variant::SemiErgodicConvex, Some(1.0), -0.8),
        (named("classification"), Variant::SemiErgodicStrong, None, -1.6),
        (named("game"), Variant::ErgodicConvex, Some(1.0), -0.8),
    ];
    for (spec, variant, rho0, limit) in cases {
        let (slope, t) = slope_of(&spec, variant, rho0);
        let within = t <= Duration::from_secs(120);
        match slope {
            Ok(s) => out.check(
                s <= limit && within,
                format!("{} {variant}: slope {s:.3} (limit {limit}) ({t:.2?})", spec.name),
            ),
            Err(e) => out.check(false, format!("{} {variant}: {e}", spec.name)),
        }
    }
    out.summary = "running-minimum rate slopes over k in [100, 10^4]".into();
    out
}

const TARGET: f64 = 1e-4;
const BUDGET: usize = 100_000;

/// Iterations until the reported point's primal residual reaches [`TARGET`],
/// or `None` within [`BUDGET`] or when the schedule's preconditions fail.
fn iterations_to_target(inst: &Instance, variant: Variant, rho0: f64) -> Option<usize> {
    let params = ScheduleParams::new(variant).rho0(rho0);
    let mut opts = RunOptions::new(BUDGET);
    opts.certificate = false;
    opts.wall_time = false;
    opts.stop_below = Some(TARGET);
    let r = run(&inst.problem, &params, &inst.x0, &inst.y0, &opts, |_, _| {}).ok()?;
    let last = r.trace.last()?;
    (matches!(r.status, RunStatus::Completed) && last.primal_residual? <= TARGET).then_some(last.k)
}

/// Best iteration count over the tuning grid (plus the strong-convexity
/// `rho0` for the strongly convex variants).
fn best_iterations(inst: &Instance, variant: Variant) -> (Option<usize>, f64) {
    let mut grid = RHO0_GRID.to_vec();
    if variant.needs_strong_convexity() {
        grid.push(strong_rho0(inst));
    }
    let runs = EXEC.map(grid.len(), |i| iterations_to_target(inst, variant, grid[i]));
    grid.into_iter()
        .zip(runs)
        .filter_map(|(rho, k)| k.map(|k| (k, rho)))
        .min_by_key(|&(k, _)| k)
        .map_or((None, f64::NAN), |(k, rho)| (Some(k), rho))
}

fn show(k: Option<usize>) -> String {
    k.map_or(format!(">{BUDGET}"), |k| k.to_string())
}

fn ordering(spec: &InstanceSpec) -> (bool, bool, String) {
    let inst = instance(spec.clone(), true);
    let [v1, v2, v3, v4] = Variant::ALL.map(|v| best_iterations(&inst, v));
    let faster = |a: Option<usize>, b: Option<usize>| match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    let line = format!(
        "thm1 {} (rho0 {:.0e}), thm2 {} (rho0 {:.0e}), thm3 {} (rho0 {:.0e}), thm4 {} (rho0 {:.2e})",
        show(v1.0),
        v1.1,
        show(v2.0),
        v2.1,
        show(v3.0),
        v3.1,
        show(v4.0),
        v4.1
    );
    (faster(v2.0, v1.0), faster(v4.0, v3.0), line)
}

fn criterion3() -> Outcome {
    let mut out = Outcome::new();
    let spec = classification(1.0);
    let ((ergodic, semi, line), t) = timed(|| ordering(&spec));
    out.check(ergodic, format!("reg=1: thm2 before thm1; {line} ({t:.2?})"));
    out.check(semi, "reg=1: thm4 before thm3".into());
    let ((ergodic, semi, line), t) = timed(|| ordering(&classification(slpd::instances::DEFAULT_REG)));
    out.note(format!("reg={}: thm2<thm1 {ergodic}, thm4<thm3 {semi}; {line} ({t:.2?})", slpd::instances::DEFAULT_REG));
    out.summary = format!("iterations to primal residual {TARGET:.0e}: thm2 < thm1 and thm4 < thm3");
    out
}

fn criterion4() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    for name in ["toy_max", "game", "classification", "cone_qp"] {
        let inst = instance(named(name), false);
        match moreau_identity_error(&inst.problem, 1000, 3, EXEC) {
            Ok(e) => out.check(e <= 1e-10, format!("Moreau identity on {name}: worst {e:.2e} over 1000 samples")),
            Err(e) => out.check(false, format!("Moreau identity on {name}: {e}")),
        }
    }

    let cls = instance(named("classification"), false);
    let strong = ScheduleParams::new(Variant::SemiErgodicStrong).rho0(strong_rho0(&cls));
    let mut sched = Schedule::new(&cls.problem, &strong, &cls.x0, &cls.y0).expect("thm4 schedule");
    let (ident, bounds) = tau_recursion_error(&mut sched, 10_000);
    out.check(
        ident <= 1e-14 && bounds <= 1e-14,
        format!("tau identity {ident:.2e}, bounds {bounds:.2e} for k <= 10^4"),
    );

    let game = instance(named("game"), true);
    let tel3 = telescoping_error(&game, &ScheduleParams::new(Variant::SemiErgodicConvex), 2000);
    let tel4 = telescoping_error(&cls, &strong, 2000);
    for (v, e) in [("thm3", tel3), ("thm4", tel4)] {
        match e {
            Ok(e) => out.check(e <= 1e-8, format!("telescoping under {v}: worst relative {e:.2e}")),
            Err(e) => out.check(false, format!("telescoping under {v}: {e}")),
        }
    }

    let toy = Instance { problem: build_max_toy(), x0: Vector::from_element(1, 1.0), y0: Vector::from_element(2, 0.5) };
    for (name, inst) in [("toy_max", &toy), ("game", &game)] {
        match ergodic_bound_ratio(inst, 10_000) {
            Ok(r) => out.check(r <= 1.0, format!("iterate bound under thm1 on {name}: worst ratio {r:.3e}")),
            Err(e) => out.check(false, format!("iterate bound on {name}: {e}")),
        }
    }

    match lemma1_sandwich_check(&game.problem, 1000, 4, 1.0, EXEC) {
        Ok(r) => out.check(
            r.passed() && r.samples == 1000,
            format!(
                "curvature sandwich on game: {} samples, lower {:.2e}, upper {:.2e}",
                r.samples, r.min_lower_slack, r.max_upper_slack
            ),
        ),
        Err(e) => out.check(false, format!("curvature sandwich: {e}")),
    }

    for v in Variant::ALL {
        let (inst, params) = if v.needs_strong_convexity() {
            (&cls, ScheduleParams::new(v).rho0(if v == Variant::ErgodicStrong { 1.0 } else { strong.rho0 }))
        } else {
            (&game, ScheduleParams::new(v))
        };
        match op_counter_violations(inst, &params, 200) {
            Ok(b) => out.check(b == 0, format!("op counters under {v}: {b} mismatching iterations of 200")),
            Err(e) => out.check(false, format!("op counters under {v}: {e}")),
        }
    }

    let t = start.elapsed();
    out.check(t <= Duration::from_secs(30), format!("runtime {t:.2?} (limit 30 s)"));
    out.summary = "invariant suites".into();
    out
}

fn criterion5() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let spec = named("cone_qp");
    let inst = instance(spec.clone(), true);
    let acc = inst.problem.optimum.as_ref().map_or(f64::NAN, |o| o.accuracy);

    let cfg = RunConfig { cone_mode: true, ..config(&spec, Variant::ErgodicConvex, 1.0, 10_000) };
    match run_config_on(&cfg, &inst) {
        Ok((r, _)) => {
            let verdict = verify_certificate(&r.trace, acc);
            let ok = matches!(verdict, CertificateVerdict::Pass { checked } if checked == 10_000);
            out.check(ok, format!("E(xbar^k) <= Delta0/(2k) under thm1: {verdict}"));
        }
        Err(e) => out.check(false, format!("thm1 cone run: {e}")),
    }

    let cfg =
        RunConfig { cone_mode: true, certificate: false, ..config(&spec, Variant::SemiErgodicConvex, 1.0, 10_000) };
    match run_config_on(&cfg, &inst) {
        Ok((r, _)) => {
            let feas = r.trace.last().and_then(|t| t.feasibility).unwrap_or(f64::INFINITY);
            out.check(feas <= 1e-3, format!("feasibility of x^k at k = 10^4 under thm3: {feas:.2e}"));
        }
        Err(e) => out.check(false, format!("thm3 cone run: {e}")),
    }

    let t = start.elapsed();
    out.check(t <= Duration::from_secs(60), format!("runtime {t:.2?} (limit 60 s)"));
    out.summary = "cone-constrained variant".into();
    out
}

fn criterion6() -> Outcome {
    let mut out = Outcome::new();
    let toy = instance(named("toy"), false);
    let sched = ScheduleState { k: 0, tau: 1.0, rho: 1.0, eta: 0.5, lipschitz: 6.0, beta: 0.0, theta: None };
    let mut s = init_state(&toy.problem, &toy.x0, &toy.y0).expect("state");
    step(&toy.problem, &sched, &mut s, StepMode::default()).expect("step");

    // Scalar recomputation: H*(y) = y^2/2 so prox_{rho H*}(v) = v / (1 + rho).
    let (x0, y0, rho, eta, l) = (1.0_f64, 0.0_f64, 1.0_f64, 0.5_f64, 6.0_f64);
    let y1 = (y0 + rho * x0) / (1.0 + rho);
    let x1 = x0 - y1 / l;
    let theta = x1 - x0 + (y1 - y0) / rho;
    let yt = y0 + eta * theta;
    let expected = [
        (s.y[0], y1, 0.5),
        (s.x[0], x1, 11.0 / 12.0),
        (s.theta[0], theta, 5.0 / 12.0),
        (s.y_tilde[0], yt, 5.0 / 24.0),
        (s.y_breve[0], y1, 0.5),
    ];
    let worst = expected
        .iter()
        .map(|&(got, scalar, exact)| (got - exact).abs().max((scalar - exact).abs()))
        .fold(0.0, f64::max);
    out.check(
        worst <= 1e-15,
        format!(
            "(y1, x1, Theta1, y~1, y^1) = ({}, {}, {}, {}, {}), worst error {worst:.1e}",
            s.y[0], s.x[0], s.theta[0], s.y_tilde[0], s.y_breve[0]
        ),
    );
    out.summary = "single iteration on the 1-D toy".into();
    out
}

type Criterion = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 6] = [
        ("1", criterion1),
        ("2", criterion2),
        ("3", criterion3),
        ("4", criterion4),
        ("5", criterion5),
        ("6", criterion6),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|a| a == id) {
            continue;
        }
        let (o, t) = timed(f);
        println!("{} criterion {id}: {} [{t:.2?}]", if o.passed { "PASS" } else { "FAIL" }, o.summary);
        for d in &o.details {
            println!("  {d}");
        }
        failed += usize::from(!o.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
