use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "k,tau,rho,eta,L,beta,primal_residual,dual_residual,pd_gap,feasibility,theorem_bound,wall_time_ms";

fn slpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slpd")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn solve_writes_a_trace_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "toy.json",
        r#"{"instance": "toy_max", "variant": "thm1", "max_iters": 200, "trace_path": "trace.csv"}"#,
    );
    let out = slpd(&["solve", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("certificate=pass"), "{stdout}");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some(HEADER));
    assert_eq!(lines.count(), 201);
}

#[test]
fn reruns_without_wall_time_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = |t: &str| {
        format!(
            r#"{{"instance": "game", "variant": "thm3", "max_iters": 300, "wall_time": false, "dual_every": 100, "trace_path": "{t}"}}"#
        )
    };
    let a = write(dir.path(), "a.json", &body("a.csv"));
    let b = write(dir.path(), "b.json", &body("b.csv"));
    assert_eq!(code(&slpd(&["solve", &a])), 0);
    assert_eq!(code(&slpd(&["--sequential", "solve", &b])), 0);
    let ta = fs::read(dir.path().join("a.csv")).unwrap();
    let tb = fs::read(dir.path().join("b.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn invalid_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.json", r#"{"instance": "toy", "variant": "thm1", "speed": 3}"#),
        ("variant.json", r#"{"instance": "toy", "variant": "thm9"}"#),
        ("strong.json", r#"{"instance": "game", "variant": "thm2", "max_iters": 10}"#),
        ("gamma.json", r#"{"instance": "game", "variant": "thm3", "gamma": 1.5}"#),
        ("cone.json", r#"{"instance": "game", "variant": "thm1", "cone_mode": true}"#),
        ("syntax.json", "{"),
    ];
    for (name, body) in cases {
        let cfg = write(dir.path(), name, body);
        let out = slpd(&["solve", &cfg]);
        assert_eq!(code(&out), 1, "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn divergence_and_io_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "nan.json", r#"{"instance": "nan_fault", "variant": "thm1", "max_iters": 10}"#);
    let out = slpd(&["solve", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("diverged"));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&slpd(&["solve", missing.to_str().unwrap()])), 2);

    let cfg = write(
        dir.path(),
        "bad_trace.json",
        r#"{"instance": "toy_max", "variant": "thm1", "max_iters": 5, "trace_path": "no/such/dir/t.csv"}"#,
    );
    assert_eq!(code(&slpd(&["solve", &cfg])), 2);
}

#[test]
fn batch_reports_every_config_and_the_worst_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.json", r#"{"instance": "toy_max", "variant": "thm1", "max_iters": 50}"#);
    write(dir.path(), "b.json", r#"{"instance": "toy_max", "variant": "thm3", "max_iters": 50}"#);
    write(dir.path(), "notes.txt", "ignored");
    let out = slpd(&["batch", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 2, "{stdout}");

    write(dir.path(), "c.json", r#"{"instance": "toy", "variant": "thm1", "bogus": 1}"#);
    assert_eq!(code(&slpd(&["batch", dir.path().to_str().unwrap()])), 1);
    write(dir.path(), "d.json", r#"{"instance": "nan_fault", "variant": "thm1", "max_iters": 5}"#);
    assert_eq!(code(&slpd(&["batch", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn check_passes() {
    let out = slpd(&["check"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("0 failed"));
}
