//! The elimination fixpoint: repeatedly delete bad edges (with their
//! inverses) and bad vertices from the type graph until none remain. The
//! sentence is satisfiable exactly when the surviving graph is non-empty,
//! and the survivor is then the greatest good subgraph.
//!
//! Deleting several bad edges per sweep is sound because badness is
//! monotone: an edge whose system is infeasible against a graph stays
//! infeasible against every subgraph (solutions only lose variables, which
//! can be set to zero in the larger graph). The single-deletion strategy
//! exists to witness confluence: both orders reach the same fixpoint.

use std::collections::HashMap;

use num_bigint::BigUint;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::constraints::{build_z, is_bad_vertex};
use crate::error::Result;
use crate::graph::TypeGraph;
use crate::nf::NormalForm;
use crate::solver::{dump_system, Backend, Solver};
use crate::types::{Configuration, UnaryType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Classify every edge against the current snapshot, delete all bad
    /// ones, purge bad vertices, repeat.
    Sweep,
    /// Delete one bad edge per iteration, chosen by the seeded generator.
    Single { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    RemovedEdge {
        edge: Configuration,
        /// Dump of the infeasible system that condemned the edge, taken
        /// against the snapshot it was classified in.
        system: String,
    },
    RemovedVertex {
        vertex: UnaryType,
        /// Index of the violated obligation.
        clause: usize,
    },
}

#[derive(Debug, Clone, Default)]
pub struct EliminationTrace {
    pub events: Vec<TraceEvent>,
    pub sweeps: u64,
}

impl EliminationTrace {
    /// Reapply the recorded deletions to a fresh copy of the starting graph.
    pub fn replay(&self, start: &TypeGraph) -> Result<TypeGraph> {
        let mut g = start.clone();
        for ev in &self.events {
            match ev {
                TraceEvent::RemovedEdge { edge, .. } => g.remove_edge(*edge)?,
                TraceEvent::RemovedVertex { vertex, .. } => g.remove_vertex(*vertex)?,
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub initial_vertices: usize,
    pub initial_edges: usize,
    pub final_vertices: usize,
    pub final_edges: usize,
    pub edges_removed: u64,
    pub vertices_removed: u64,
    pub sweeps: u64,
    pub solver_calls: u64,
    pub backend_invocations: u64,
    /// The call bound 2^(4n+8m) over the rewritten signature.
    pub solver_call_bound: BigUint,
}

impl Stats {
    pub fn within_call_bound(&self) -> bool {
        BigUint::from(self.solver_calls) <= self.solver_call_bound
    }
}

struct Memo {
    entries: HashMap<Configuration, (u64, bool, String)>,
}

impl Memo {
    /// An edge's system depends only on the outgoing neighbourhood of its
    /// source, so a verdict is reusable until that neighbourhood changes.
    fn lookup(&self, g: &TypeGraph, e: Configuration) -> Option<(bool, String)> {
        self.entries.get(&e).and_then(|(ver, bad, dump)| {
            (*ver == g.neighborhood_version(e.src)).then(|| (*bad, dump.clone()))
        })
    }

    fn store(&mut self, g: &TypeGraph, e: Configuration, bad: bool, dump: String) {
        self.entries.insert(e, (g.neighborhood_version(e.src), bad, dump));
    }
}

/// Classify every edge of the current snapshot; returns the bad ones in
/// canonical order together with their condemning system dumps.
fn classify_all(
    g: &TypeGraph,
    nf: &NormalForm,
    solver: &mut Solver,
    memo: &mut Memo,
    jobs: usize,
) -> Result<Vec<(Configuration, String)>> {
    let mut bad = Vec::new();
    let mut todo: Vec<Configuration> = Vec::new();
    for e in g.edges() {
        match memo.lookup(g, e) {
            Some((true, dump)) => bad.push((e, dump)),
            Some((false, _)) => {}
            None => todo.push(e),
        }
    }
    let verdicts: Vec<(Configuration, bool, String)> = if jobs > 1 && todo.len() > 1 {
        classify_parallel(g, nf, solver, &todo, jobs)?
    } else {
        let mut out = Vec::with_capacity(todo.len());
        for e in todo {
            let z = build_z(g, e, nf)?;
            let dump = dump_system(&z);
            let feasible = solver.decide(&z)?;
            out.push((e, !feasible, dump));
        }
        out
    };
    for (e, is_bad, dump) in verdicts {
        memo.store(g, e, is_bad, dump.clone());
        if is_bad {
            bad.push((e, dump));
        }
    }
    bad.sort_by_key(|(e, _)| *e);
    Ok(bad)
}

fn classify_parallel(
    g: &TypeGraph,
    nf: &NormalForm,
    solver: &mut Solver,
    todo: &[Configuration],
    jobs: usize,
) -> Result<Vec<(Configuration, bool, String)>> {
    let chunk = todo.len().div_ceil(jobs);
    let results: Vec<Result<(Vec<(Configuration, bool, String)>, u64, u64)>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = todo
                .chunks(chunk)
                .map(|part| {
                    let backend = solver.backend.clone();
                    let (sem, budget, cap) = (solver.semantics, solver.node_budget, solver.mod_cap);
                    scope.spawn(move || {
                        let mut local = Solver::new(sem, backend, budget, cap);
                        let mut out = Vec::with_capacity(part.len());
                        for &e in part {
                            let z = build_z(g, e, nf)?;
                            let dump = dump_system(&z);
                            let feasible = local.decide(&z)?;
                            out.push((e, !feasible, dump));
                        }
                        Ok((out, local.calls, local.backend_invocations))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("classification worker panicked")).collect()
        });
    let mut merged = Vec::with_capacity(todo.len());
    for r in results {
        let (part, calls, inv) = r?;
        solver.calls += calls;
        solver.backend_invocations += inv;
        merged.extend(part);
    }
    Ok(merged)
}

fn purge_bad_vertices(g: &mut TypeGraph, nf: &NormalForm, trace: &mut EliminationTrace) -> Result<u64> {
    // A bad vertex has no incident edges, so removals cannot create new bad
    // vertices; one pass per call suffices.
    let bad: Vec<(UnaryType, usize)> = g
        .vertices()
        .filter_map(|pi| is_bad_vertex(g, pi, nf).map(|clause| (pi, clause)))
        .collect();
    for (pi, clause) in &bad {
        debug_assert!(g.isolated_has_no_incoming(*pi));
        g.remove_vertex(*pi)?;
        trace.events.push(TraceEvent::RemovedVertex { vertex: *pi, clause: *clause });
    }
    Ok(bad.len() as u64)
}

/// Run the fixpoint. Bad vertices are purged before the first sweep as well
/// as after every deletion round: an initially edge-free vertex with a
/// violated zero check must not survive into an accepting graph.
pub fn eliminate(
    g0: &TypeGraph,
    nf: &NormalForm,
    solver: &mut Solver,
    strategy: Strategy,
    jobs: usize,
) -> Result<(TypeGraph, EliminationTrace, Stats)> {
    let mut g = g0.clone();
    let mut trace = EliminationTrace::default();
    let mut stats = Stats {
        initial_vertices: g.vertex_count(),
        initial_edges: g.edge_count(),
        solver_call_bound: BigUint::from(1u32) << (4 * nf.sig.n() + 8 * nf.sig.m()),
        ..Stats::default()
    };
    let mut memo = Memo { entries: HashMap::new() };
    let mut rng = match strategy {
        Strategy::Single { seed } => Some(StdRng::seed_from_u64(seed)),
        Strategy::Sweep => None,
    };

    stats.vertices_removed += purge_bad_vertices(&mut g, nf, &mut trace)?;
    loop {
        trace.sweeps += 1;
        stats.sweeps += 1;
        let bad = classify_all(&g, nf, solver, &mut memo, jobs.max(1))?;
        if bad.is_empty() {
            break;
        }
        match &mut rng {
            None => {
                for (e, dump) in bad {
                    if g.contains_edge(e) {
                        g.remove_edge(e)?;
                        trace.events.push(TraceEvent::RemovedEdge { edge: e, system: dump });
                        stats.edges_removed += 1;
                    }
                }
            }
            Some(rng) => {
                let (e, dump) = bad[rng.gen_range(0..bad.len())].clone();
                g.remove_edge(e)?;
                trace.events.push(TraceEvent::RemovedEdge { edge: e, system: dump });
                stats.edges_removed += 1;
            }
        }
        stats.vertices_removed += purge_bad_vertices(&mut g, nf, &mut trace)?;
    }

    stats.final_vertices = g.vertex_count();
    stats.final_edges = g.edge_count();
    stats.solver_calls = solver.calls;
    stats.backend_invocations = solver.backend_invocations;
    debug_assert!(g.is_symmetric());
    Ok((g, trace, stats))
}

/// Re-verify the fixpoint's output independently of the loop: symmetric, no
/// bad edge, no bad vertex.
pub fn assert_good(g: &TypeGraph, nf: &NormalForm, solver: &mut Solver) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    if !g.is_symmetric() {
        problems.push("graph is not symmetric".into());
    }
    for e in g.edges() {
        let z = build_z(g, e, nf)?;
        if !solver.decide(&z)? {
            problems.push(format!("bad edge survived: {e:?}"));
        }
    }
    for pi in g.vertices() {
        if let Some(clause) = is_bad_vertex(g, pi, nf) {
            problems.push(format!("bad vertex survived: {pi:?} (obligation {clause})"));
        }
    }
    Ok(problems)
}

/// Pipeline options for the full decision procedure.
#[derive(Debug, Clone)]
pub struct PipelineOpts {
    pub semantics: crate::solver::Semantics,
    pub backend: Backend,
    pub type_cap: usize,
    pub node_budget: u64,
    pub mod_cap: u64,
    pub strategy: Strategy,
    pub jobs: usize,
}

impl Default for PipelineOpts {
    fn default() -> Self {
        PipelineOpts {
            semantics: crate::solver::Semantics::Nat,
            backend: Backend::Builtin,
            type_cap: 24,
            node_budget: 10_000_000,
            mod_cap: 1 << 16,
            strategy: Strategy::Sweep,
            jobs: 1,
        }
    }
}

#[derive(Debug)]
pub struct DecideOutcome {
    pub nf: NormalForm,
    pub initial: TypeGraph,
    pub graph: TypeGraph,
    pub trace: EliminationTrace,
    pub stats: Stats,
    pub sat: bool,
    pub witness: Option<crate::witness::Witness>,
}

/// Decide satisfiability of a validated sentence: rewrite to normal form,
/// build the type graph, run the fixpoint, and accept exactly when the
/// final graph is non-empty. On acceptance a witness (the good subgraph
/// plus one solution per edge) is attached.
pub fn decide(
    s: &crate::formula::Sentence,
    sig: &crate::sig::Signature,
    opts: &PipelineOpts,
) -> Result<DecideOutcome> {
    let nf = crate::normalize::normalize(s, sig)?;
    decide_normal(nf, opts)
}

pub fn decide_normal(nf: NormalForm, opts: &PipelineOpts) -> Result<DecideOutcome> {
    let initial = crate::graph::build_graph(&nf, opts.type_cap)?;
    let mut solver = Solver::new(opts.semantics, opts.backend.clone(), opts.node_budget, opts.mod_cap);
    let (graph, trace, stats) =
        eliminate(&initial, &nf, &mut solver, opts.strategy, opts.jobs)?;
    let sat = !graph.is_empty();
    let witness = if sat {
        Some(crate::witness::make_witness(&graph, &nf, &mut solver)?)
    } else {
        None
    };
    Ok(DecideOutcome { nf, initial, graph, trace, stats, sat, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;
    use crate::sig::Signature;
    use crate::solver::Semantics;

    fn run(text: &str, unary: Vec<&str>, binary: Vec<&str>) -> DecideOutcome {
        let sig = Signature::new(unary, binary).unwrap();
        let s = parse(text, &sig).unwrap();
        decide(&s, &sig, &PipelineOpts::default()).unwrap()
    }

    #[test]
    fn no_obligations_leave_the_graph_unchanged() {
        let out = run("forall x . (U(x) | !(U(x))) ;", vec!["U"], vec!["R"]);
        assert!(out.sat);
        assert_eq!(out.stats.edges_removed, 0);
        assert_eq!(out.stats.vertices_removed, 0);
        assert_eq!(out.graph, out.initial);
    }

    #[test]
    fn infeasible_edge_then_bad_vertex_empties_the_graph() {
        // One unary, one binary; every element must have both at least one
        // and exactly zero outgoing R-edges.
        let text = "(forall x . U(x)) \
                    & (forall x . (U(x) -> 1*#[R(x, y)]{x != y} >= 1)) \
                    & (forall x . (U(x) -> 1*#[R(x, y)]{x != y} = 0)) ;";
        let out = run(text, vec!["U"], vec!["R"]);
        assert!(!out.sat);
        assert!(out.graph.is_empty());
        let edges_removed = out.stats.edges_removed;
        let vertices_removed = out.stats.vertices_removed;
        assert!(edges_removed > 0 && vertices_removed > 0);
    }

    #[test]
    fn hand_traced_unsat_removes_u_vertices_as_bad() {
        let text = "(forall x . U(x)) \
                    & (forall x . forall y : R(x, y) . false) \
                    & (forall x . (U(x) -> 1*#[R(x, y)]{x != y} >= 1)) ;";
        let out = run(text, vec!["U"], vec!["R"]);
        assert!(!out.sat);
        // All removals are vertex removals: the graph starts edge-free.
        assert_eq!(out.stats.edges_removed, 0);
        assert!(out.stats.vertices_removed > 0);
        assert!(out
            .trace
            .events
            .iter()
            .all(|e| matches!(e, TraceEvent::RemovedVertex { .. })));
    }

    #[test]
    fn false_gamma_is_unsat_with_an_empty_initial_graph() {
        let out = run("forall x . false ;", vec!["U"], vec![]);
        assert!(!out.sat);
        assert_eq!(out.initial.vertex_count(), 0);
    }

    #[test]
    fn trace_replay_reproduces_the_final_graph() {
        let text = "(forall x . U(x)) \
                    & (forall x . (U(x) -> 1*#[R(x, y)]{true} = 2)) \
                    & (forall x . (U(x) -> 1*#[R(y, x)]{true} <= 1)) ;";
        let out = run(text, vec!["U"], vec!["R"]);
        assert!(out.sat);
        let replayed = out.trace.replay(&out.initial).unwrap();
        assert_eq!(replayed.dump(), out.graph.dump());
    }

    #[test]
    fn final_graph_passes_the_independent_goodness_check() {
        let text = "(forall x . U(x)) \
                    & (forall x . (U(x) -> 1*#[R(x, y)]{true} = 2)) \
                    & (forall x . (U(x) -> 1*#[R(y, x)]{true} <= 1)) ;";
        let out = run(text, vec!["U"], vec!["R"]);
        assert!(out.sat);
        let mut solver = Solver::new(
            Semantics::Nat,
            Backend::Builtin,
            10_000_000,
            1 << 16,
        );
        assert!(assert_good(&out.graph, &out.nf, &mut solver).unwrap().is_empty());
    }
}
