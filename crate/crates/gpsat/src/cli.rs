//! Command-line front end: parse → validate → rewrite → build → eliminate →
//! decide, with witness, prefix, dump, and stats modes. Output is a single
//! JSON object on stdout (plain text for the dump modes); identical inputs
//! and flags produce byte-identical output, so timing goes to stderr.

use std::io::Read;

use clap::{Parser, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::json;

use crate::eliminate::{decide, PipelineOpts, Strategy, TraceEvent};
use crate::error::{Error, Result};
use crate::nf::NormalForm;
use crate::parse::{infer_signature, parse};
use crate::solver::{Backend, Count, Semantics};
use crate::types::{BinaryType, Configuration, UnaryType};
use crate::witness::{check_prefix, expand_prefix, verify_witness, ModelPrefix, Witness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Decide satisfiability and report the verdict.
    Sat,
    /// Decide and, on sat, emit the verified witness.
    Witness,
    /// Decide and, on sat, unfold a model prefix of --prefix-len elements.
    Prefix,
    /// Rewrite to normal form and print it with the extension table.
    NormalizeOnly,
    /// Print the final graph after elimination in the dump format.
    GraphDump,
    /// Reference backend: read a system dump on input, answer sat/unsat.
    SolveDump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SemanticsArg {
    Nat,
    NatInfinity,
}

/// Decide satisfiability of a two-variable guarded sentence with local
/// counting constraints. Exit code: 0 = sat, 1 = unsat, 2 = error.
#[derive(Debug, Parser)]
#[command(name = "gpsat", version)]
pub struct Cli {
    /// Input file containing one sentence, or `-` for stdin.
    pub input: String,

    #[arg(long, value_enum, default_value_t = Mode::Sat)]
    pub mode: Mode,

    #[arg(long, value_enum, default_value_t = SemanticsArg::Nat)]
    pub semantics: SemanticsArg,

    /// `builtin` or `external:<command>`; the command receives a system dump
    /// on stdin and must answer `sat` or `unsat` on its first output line.
    #[arg(long, default_value = "builtin")]
    pub solver: String,

    /// Number of unfolding iterations in prefix mode.
    #[arg(long, default_value_t = 7)]
    pub prefix_len: usize,

    /// Seed for all seeded choices (prefix unfolding).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Report sweep/removal/solver-call statistics.
    #[arg(long)]
    pub stats: bool,

    /// Record every removal with its condemning system.
    #[arg(long)]
    pub trace: bool,

    /// Worker threads for edge classification.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,

    /// Maximum number of type atoms (n+m) to enumerate over.
    #[arg(long, default_value_t = 24)]
    pub type_cap: usize,

    /// Node budget per feasibility call.
    #[arg(long, default_value_t = 10_000_000)]
    pub node_budget: u64,

    /// Largest modulus accepted in residue enumeration.
    #[arg(long, default_value_t = 65_536)]
    pub mod_cap: u64,

    /// Maximum elements a prefix may allocate.
    #[arg(long, default_value_t = 10_000)]
    pub prefix_cap: usize,

    /// Elements materialized per ∞-valued slot in prefix mode.
    #[arg(long, default_value_t = 3)]
    pub inf_sample: usize,
}

impl Cli {
    fn backend(&self) -> Result<Backend> {
        if self.solver == "builtin" {
            Ok(Backend::Builtin)
        } else if let Some(cmd) = self.solver.strip_prefix("external:") {
            Ok(Backend::External(cmd.to_string()))
        } else {
            Err(Error::SolverFailure(format!(
                "unknown solver `{}`; use builtin or external:<cmd>",
                self.solver
            )))
        }
    }

    fn opts(&self) -> Result<PipelineOpts> {
        if self.jobs == 0 || self.prefix_cap == 0 || self.type_cap == 0 {
            return Err(Error::Internal("caps and jobs must be positive".into()));
        }
        Ok(PipelineOpts {
            semantics: match self.semantics {
                SemanticsArg::Nat => Semantics::Nat,
                SemanticsArg::NatInfinity => Semantics::NatInfinity,
            },
            backend: self.backend()?,
            type_cap: self.type_cap,
            node_budget: self.node_budget,
            mod_cap: self.mod_cap,
            strategy: Strategy::Sweep,
            jobs: self.jobs,
        })
    }
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        Ok(buf)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn atoms_u(pi: UnaryType, nf: &NormalForm) -> serde_json::Value {
    json!(pi.atom_names(&nf.sig))
}

fn atoms_b(eta: BinaryType, nf: &NormalForm) -> serde_json::Value {
    json!(eta.atom_names(&nf.sig))
}

fn edge_json(e: Configuration, nf: &NormalForm) -> serde_json::Value {
    json!({ "src": atoms_u(e.src, nf), "eta": atoms_b(e.eta, nf), "dst": atoms_u(e.dst, nf) })
}

fn count_json(c: &Count) -> serde_json::Value {
    match c {
        Count::Inf => json!("inf"),
        Count::Fin(v) => match v.to_u64() {
            Some(n) => json!(n),
            None => json!(v.to_string()),
        },
    }
}

fn witness_json(w: &Witness, nf: &NormalForm) -> serde_json::Value {
    json!({
        "vertices": w.graph.vertices().map(|v| atoms_u(v, nf)).collect::<Vec<_>>(),
        "edges": w.graph.edges().map(|e| edge_json(e, nf)).collect::<Vec<_>>(),
        "solutions": w.solutions.iter().map(|(e, sol)| json!({
            "edge": edge_json(*e, nf),
            "counts": sol.iter().map(|(k, c)| json!({
                "eta": atoms_b(k.eta, nf),
                "pi": atoms_u(k.pi, nf),
                "count": count_json(c),
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

fn prefix_json(p: &ModelPrefix, nf: &NormalForm) -> serde_json::Value {
    json!({
        "elements": p.types.iter().enumerate().map(|(i, t)| json!({
            "id": i + 1,
            "type": atoms_u(*t, nf),
            "status": if i < p.processed { "processed" } else { "pending" },
            "back_link": p.back_link[i].map(|h| h + 1),
        })).collect::<Vec<_>>(),
        "pairs": p.pairs.iter().map(|(&(a, b), eta)| json!({
            "a": a + 1,
            "b": b + 1,
            "eta": atoms_b(*eta, nf),
        })).collect::<Vec<_>>(),
        "frontiers": p.frontiers,
        "inf_sample": p.inf_sample,
    })
}

fn stats_json(stats: &crate::eliminate::Stats) -> serde_json::Value {
    json!({
        "initial_vertices": stats.initial_vertices,
        "initial_edges": stats.initial_edges,
        "final_vertices": stats.final_vertices,
        "final_edges": stats.final_edges,
        "edges_removed": stats.edges_removed,
        "vertices_removed": stats.vertices_removed,
        "sweeps": stats.sweeps,
        "solver_calls": stats.solver_calls,
        "backend_invocations": stats.backend_invocations,
        "solver_call_bound": stats.solver_call_bound.to_string(),
        "within_call_bound": stats.within_call_bound(),
    })
}

fn trace_json(trace: &crate::eliminate::EliminationTrace, nf: &NormalForm) -> serde_json::Value {
    json!(trace
        .events
        .iter()
        .map(|ev| match ev {
            TraceEvent::RemovedEdge { edge, system } => json!({
                "kind": "edge",
                "edge": edge_json(*edge, nf),
                "system": system,
            }),
            TraceEvent::RemovedVertex { vertex, clause } => json!({
                "kind": "vertex",
                "vertex": atoms_u(*vertex, nf),
                "clause": clause,
            }),
        })
        .collect::<Vec<_>>())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse",
        Error::NotGuarded(_) => "not-guarded",
        Error::TypeCapExceeded { .. } => "type-cap",
        Error::ModulusCapExceeded { .. } => "mod-cap",
        Error::ZeroModulus => "zero-modulus",
        Error::NodeBudgetExceeded { .. } => "resource-limit",
        Error::SearchCapExceeded { .. } => "search-cap",
        Error::PrefixCapExceeded { .. } => "prefix-cap",
        Error::SolverFailure(_) => "solver-failure",
        Error::AbsentEdge | Error::AbsentVertex => "graph",
        Error::ShapeMismatch(_) => "shape",
        Error::EmptyWitness => "empty-witness",
        Error::Internal(_) => "internal",
        Error::Io(_) => "io",
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut obj = json!({ "kind": error_kind(e), "message": e.to_string() });
    if let Error::Parse { line, col, .. } = e {
        obj["line"] = json!(line);
        obj["col"] = json!(col);
    }
    json!({ "status": "error", "error": obj })
}

/// Run the front end; returns the exit code and the stdout payload.
pub fn run(cli: &Cli) -> (i32, String) {
    match run_inner(cli) {
        Ok((code, out)) => (code, out),
        Err(e) => (2, error_json(&e).to_string()),
    }
}

fn run_inner(cli: &Cli) -> Result<(i32, String)> {
    let started = std::time::Instant::now();
    let text = read_input(&cli.input)?;

    if cli.mode == Mode::SolveDump {
        let (vars, rows) = crate::solver::parse_dump(&text)?;
        let sys = crate::constraints::LinearSystem {
            anchor: Configuration {
                src: UnaryType(0),
                eta: BinaryType(1),
                dst: UnaryType(0),
            },
            anchor_var: *vars.first().unwrap_or(&crate::constraints::VarKey {
                eta: BinaryType(1),
                pi: UnaryType(0),
            }),
            rows,
            vars,
        };
        let feasible = match cli.semantics {
            SemanticsArg::Nat => {
                crate::solver::feasible_system(&sys, cli.node_budget, cli.mod_cap)?.is_some()
            }
            SemanticsArg::NatInfinity => {
                crate::solver::feasible_infinity(&sys, cli.node_budget, cli.mod_cap)?.is_some()
            }
        };
        return Ok((0, if feasible { "sat".into() } else { "unsat".into() }));
    }

    let sig = infer_signature(&text)?;
    let sentence = parse(&text, &sig)?;
    let opts = cli.opts()?;

    if cli.mode == Mode::NormalizeOnly {
        let nf = crate::normalize::normalize(&sentence, &sig)?;
        let mut out = nf.to_sentence_text();
        out.push('\n');
        out.push_str(&nf.extension_table());
        return Ok((0, out.trim_end().to_string()));
    }

    let outcome = decide(&sentence, &sig, &opts)?;
    if cli.stats {
        eprintln!(
            "wall time: {:.3}s; sweeps {}, solver calls {}",
            started.elapsed().as_secs_f64(),
            outcome.stats.sweeps,
            outcome.stats.solver_calls,
        );
    }

    if cli.mode == Mode::GraphDump {
        let code = if outcome.sat { 0 } else { 1 };
        return Ok((code, outcome.graph.dump().trim_end().to_string()));
    }

    let mut payload = json!({ "status": if outcome.sat { "sat" } else { "unsat" } });
    if let Some(w) = &outcome.witness {
        if matches!(cli.mode, Mode::Witness | Mode::Prefix) {
            let violations = verify_witness(w, &outcome.nf);
            if !violations.is_empty() {
                return Err(Error::Internal(format!(
                    "witness fails verification: {}",
                    violations.join("; ")
                )));
            }
            payload["witness"] = witness_json(w, &outcome.nf);
        }
        if cli.mode == Mode::Prefix {
            let p = expand_prefix(w, cli.prefix_len, cli.seed, cli.prefix_cap, cli.inf_sample)?;
            let report = check_prefix(&p, &outcome.nf);
            payload["prefix"] = prefix_json(&p, &outcome.nf);
            payload["prefix_check"] = json!({
                "ok": report.ok,
                "violations": report.violations,
                "pending": report.pending.iter().map(|i| i + 1).collect::<Vec<_>>(),
            });
        }
    }
    if cli.stats {
        payload["stats"] = stats_json(&outcome.stats);
    }
    if cli.trace {
        payload["trace"] = trace_json(&outcome.trace, &outcome.nf);
    }
    Ok((if outcome.sat { 0 } else { 1 }, payload.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn cli_for(path: &str, extra: &[&str]) -> Cli {
        let mut args = vec!["gpsat", path];
        args.extend_from_slice(extra);
        Cli::parse_from(args)
    }

    fn write_tmp(name: &str, content: &str) -> String {
        let dir = std::env::temp_dir().join("gpsat-cli-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, content).unwrap();
        path.to_string_lossy().into_owned()
    }

    #[test]
    fn sat_unsat_and_error_exit_codes() {
        let sat = write_tmp("sat.gp", "forall x . (U(x) | !(U(x))) ;");
        let (code, out) = run(&cli_for(&sat, &[]));
        assert_eq!(code, 0);
        assert!(out.contains("\"sat\""));

        let unsat = write_tmp("unsat.gp", "forall x . false ;");
        let (code, out) = run(&cli_for(&unsat, &[]));
        assert_eq!(code, 1);
        assert!(out.contains("\"unsat\""));

        let bad = write_tmp("bad.gp", "forall x . #[R(x, y)]{x != y} = ;");
        let (code, out) = run(&cli_for(&bad, &[]));
        assert_eq!(code, 2);
        assert!(out.contains("\"error\""));
        assert!(out.contains("\"parse\""));
    }

    #[test]
    fn determinism_of_the_full_payload() {
        let path = write_tmp(
            "phi.gp",
            "(forall x . U(x)) & (forall x . (U(x) -> 1*#[R(x, y)]{true} = 2)) \
             & (forall x . (U(x) -> 1*#[R(y, x)]{true} <= 1)) ;",
        );
        let run1 = run(&cli_for(&path, &["--mode", "prefix", "--seed", "5", "--stats", "--trace"]));
        let run2 = run(&cli_for(&path, &["--mode", "prefix", "--seed", "5", "--stats", "--trace"]));
        assert_eq!(run1, run2);
        assert_eq!(run1.0, 0);
    }

    #[test]
    fn normalize_only_prints_reparseable_text_and_table() {
        let path = write_tmp(
            "norm.gp",
            "forall x . (U(x) -> exists y : R(x, y) . U(y)) ;",
        );
        let (code, out) = run(&cli_for(&path, &["--mode", "normalize-only"]));
        assert_eq!(code, 0);
        let sentence_line = out.lines().next().unwrap();
        let sig = infer_signature(sentence_line).unwrap();
        assert!(parse(sentence_line, &sig).is_ok());
        assert!(out.lines().any(|l| l.contains(":=")));
    }

    #[test]
    fn solve_dump_round_trip() {
        let dump = "vars 2 z@1.0 z@1.1\n1 1 >= 1\n1 0 = 0\n";
        let path = write_tmp("dump.txt", dump);
        let (code, out) = run(&cli_for(&path, &["--mode", "solve-dump"]));
        assert_eq!(code, 0);
        assert_eq!(out, "sat");
        let dump = "vars 1 z@1.0\n1 >= 1\n1 = 0\n";
        let path = write_tmp("dump2.txt", dump);
        let (_, out) = run(&cli_for(&path, &["--mode", "solve-dump"]));
        assert_eq!(out, "unsat");
    }
}
