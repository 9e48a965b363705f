//! End-to-end runs of the compiled binary: exit codes, byte-identical
//! output, dump modes, and the external-backend protocol (exercised by
//! pointing the tool at its own reference backend mode).

use std::io::Write;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_gpsat");

const PHI: &str = "(forall x . U(x)) \
                   & (forall x . (U(x) -> 1*#[R(x, y)]{true} = 2)) \
                   & (forall x . (U(x) -> 1*#[R(y, x)]{true} <= 1)) ;";

fn run_stdin(input: &str, args: &[&str]) -> Output {
    let mut child = Command::new(BIN)
        .arg("-")
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn gpsat");
    child.stdin.as_mut().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn exit_codes_sat_unsat_error() {
    let out = run_stdin(PHI, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"status\":\"sat\""));

    let out = run_stdin("forall x . false ;", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"status\":\"unsat\""));

    let out = run_stdin("forall x . #[R(x, y)]{x != y} = ;", &[]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"status\":\"error\""));
    assert!(text.contains("\"line\""));
}

#[test]
fn identical_runs_are_byte_identical() {
    let args = ["--mode", "prefix", "--seed", "9", "--stats", "--trace"];
    let a = run_stdin(PHI, &args);
    let b = run_stdin(PHI, &args);
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(a.stdout, b.stdout);
    // Timing is on stderr only, so stdout stays deterministic even with
    // --stats.
    assert!(String::from_utf8_lossy(&a.stderr).contains("wall time"));
}

#[test]
fn witness_and_prefix_modes_emit_their_sections() {
    let out = run_stdin(PHI, &["--mode", "witness"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"witness\""));
    assert!(text.contains("\"solutions\""));

    let out = run_stdin(PHI, &["--mode", "prefix", "--prefix-len", "7"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"prefix\""));
    assert!(text.contains("\"prefix_check\""));
    assert!(text.contains("\"ok\":true"));
}

#[test]
fn graph_dump_and_normalize_only_are_plain_text() {
    let out = run_stdin(PHI, &["--mode", "graph-dump"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("V ")));
    assert!(text.lines().any(|l| l.starts_with("E ")));

    let out = run_stdin(PHI, &["--mode", "normalize-only"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("forall x"));
    assert!(text.contains(":="));
}

#[test]
fn external_backend_agrees_with_builtin() {
    let cmd = format!("{BIN} - --mode solve-dump");
    let external = ["--solver"];
    let solver_arg = format!("external:{cmd}");

    let sat = run_stdin(PHI, &[external[0], &solver_arg]);
    assert_eq!(sat.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&sat.stderr));

    let unsat_text = "(forall x . U(x)) \
                      & (forall x . forall y : R(x, y) . false) \
                      & (forall x . (U(x) -> 1*#[R(x, y)]{x != y} >= 1)) ;";
    let unsat = run_stdin(unsat_text, &[external[0], &solver_arg]);
    assert_eq!(unsat.status.code(), Some(1));
}

#[test]
fn garbage_backend_is_a_solver_failure_not_unsat() {
    let out = run_stdin(PHI, &["--solver", "external:echo nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("solver-failure"));
}

#[test]
fn semantics_flip_from_the_command_line() {
    let uncapped = "(forall x . U(x)) \
        & (forall x . (U(x) -> 1*#[R(x, y)]{x != y} - 1*#[S(x, y)]{x != y} >= 1)) \
        & (forall x . (U(x) -> 1*#[S(x, y)]{x != y} - 1*#[R(x, y)]{x != y} >= 1)) ;";
    let nat = run_stdin(uncapped, &["--semantics", "nat"]);
    assert_eq!(nat.status.code(), Some(1));
    let inf = run_stdin(uncapped, &["--semantics", "nat-infinity", "--mode", "witness"]);
    assert_eq!(inf.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&inf.stdout).contains("\"inf\""));
}

#[test]
fn stats_mode_reports_call_accounting() {
    let out = run_stdin(PHI, &["--stats"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"solver_calls\""));
    assert!(text.contains("\"within_call_bound\":true"));
}
