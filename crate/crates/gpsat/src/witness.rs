//! SAT witnesses and their verification.
//!
//! A witness is a good subgraph together with one stored solution per edge.
//! From a witness a finite prefix of the canonical infinite model can be
//! unfolded: elements are processed one at a time, each drawing fresh
//! neighbours beyond the current frontier according to its edge solution, so
//! that every processed element satisfies all counting obligations exactly
//! and every unprocessed element keeps at most one link back into the
//! processed region.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::constraints::{build_z, is_bad_vertex, VarKey};
use crate::error::{Error, Result};
use crate::graph::TypeGraph;
use crate::nf::NormalForm;
use crate::solver::{constraint_holds_ext, Count, Solver};
use crate::types::{BinaryType, CompiledNf, Configuration, UnaryType};

/// A good subgraph plus one solution per directed edge.
#[derive(Debug, Clone)]
pub struct Witness {
    pub graph: TypeGraph,
    pub solutions: BTreeMap<Configuration, BTreeMap<VarKey, Count>>,
}

/// Solve every edge system of a good subgraph. An infeasible edge is an
/// internal error: the elimination fixpoint guarantees goodness.
pub fn make_witness(h: &TypeGraph, nf: &NormalForm, solver: &mut Solver) -> Result<Witness> {
    if h.is_empty() {
        return Err(Error::EmptyWitness);
    }
    let mut solutions = BTreeMap::new();
    for e in h.edges() {
        let z = build_z(h, e, nf)?;
        let sol = solver.solve(&z)?.ok_or_else(|| {
            Error::Internal(format!("edge {e:?} of a good subgraph has an infeasible system"))
        })?;
        solutions.insert(e, sol);
    }
    Ok(Witness { graph: h.clone(), solutions })
}

/// Independent recheck of a witness: symmetry, vertex and edge
/// compatibility, every stored solution against its rebuilt system row by
/// row, and the zero check on edge-free vertices. Violations are data.
pub fn verify_witness(w: &Witness, nf: &NormalForm) -> Vec<String> {
    let mut out = Vec::new();
    if !w.graph.is_symmetric() {
        out.push("subgraph is not symmetric".to_string());
    }
    let compiled = match CompiledNf::new(nf) {
        Ok(c) => c,
        Err(e) => {
            out.push(format!("cannot compile constraints: {e}"));
            return out;
        }
    };
    let sig = &nf.sig;
    for pi in w.graph.vertices() {
        if !compiled.compatible_unary(sig, pi) {
            out.push(format!("vertex {:?} is not compatible", pi.atom_names(sig)));
        }
    }
    for e in w.graph.edges() {
        if !compiled.compatible_config(sig, e.src, e.eta, e.dst) {
            out.push(format!(
                "edge {:?} | {:?} | {:?} is not compatible",
                e.src.atom_names(sig),
                e.eta.atom_names(sig),
                e.dst.atom_names(sig)
            ));
        }
        match w.solutions.get(&e) {
            None => out.push(format!("edge {:?} has no stored solution", e)),
            Some(sol) => match build_z(&w.graph, e, nf) {
                Err(err) => out.push(format!("cannot rebuild the system of {e:?}: {err}")),
                Ok(z) => {
                    for (i, row) in z.rows.iter().enumerate() {
                        if !constraint_holds_ext(row, sol) {
                            out.push(format!("edge {e:?}: stored solution violates row {i}"));
                        }
                    }
                }
            },
        }
    }
    for pi in w.graph.vertices() {
        if let Some(clause) = is_bad_vertex(&w.graph, pi, nf) {
            out.push(format!(
                "edge-free vertex {:?} fails the zero check of obligation {clause}",
                pi.atom_names(sig)
            ));
        }
    }
    out
}

/// A finite truncation of the unfolded model.
#[derive(Debug, Clone)]
pub struct ModelPrefix {
    pub graph: TypeGraph,
    pub types: Vec<UnaryType>,
    /// Elements 0..processed have completed their iteration.
    pub processed: usize,
    /// Non-null pair types, keyed by (i, j) with i < j; absent pairs are
    /// null.
    pub pairs: BTreeMap<(usize, usize), BinaryType>,
    pub back_link: Vec<Option<usize>>,
    /// Frontier after each iteration: the number of elements whose pairs
    /// with the processed region are defined.
    pub frontiers: Vec<usize>,
    /// Per element: allocated slots whose solution value was ∞, materialized
    /// only up to the sample size.
    pub inf_slots: Vec<Vec<VarKey>>,
    pub inf_sample: usize,
}

impl ModelPrefix {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn pair_type(&self, a: usize, b: usize) -> BinaryType {
        if a == b {
            return BinaryType::NULL;
        }
        if a < b {
            self.pairs.get(&(a, b)).copied().unwrap_or(BinaryType::NULL)
        } else {
            self.pairs.get(&(b, a)).copied().unwrap_or(BinaryType::NULL).reverse()
        }
    }
}

/// Run `iterations` steps of the unfolding. Element j with a non-null back
/// link reuses that edge's stored solution, allocating one fewer neighbour
/// for the back link's slot; an element without one draws an arbitrary
/// outgoing edge of its type (seeded), or nothing when its type has no
/// outgoing edges, in which case the zero check of goodness covers it.
pub fn expand_prefix(
    w: &Witness,
    iterations: usize,
    seed: u64,
    prefix_cap: usize,
    inf_sample: usize,
) -> Result<ModelPrefix> {
    if w.graph.is_empty() {
        return Err(Error::EmptyWitness);
    }
    let vertices: Vec<UnaryType> = w.graph.vertices().collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut p = ModelPrefix {
        graph: w.graph.clone(),
        types: Vec::new(),
        processed: 0,
        pairs: BTreeMap::new(),
        back_link: Vec::new(),
        frontiers: Vec::new(),
        inf_slots: Vec::new(),
        inf_sample,
    };
    for j in 0..iterations {
        if j >= p.types.len() {
            let ty = vertices[rng.gen_range(0..vertices.len())];
            p.types.push(ty);
            p.back_link.push(None);
            p.inf_slots.push(Vec::new());
        }
        let pi1 = p.types[j];
        let (edge, minus_slot) = match p.back_link[j] {
            Some(h) => {
                let eta = p.pair_type(j, h);
                debug_assert!(!eta.is_null());
                let e = Configuration { src: pi1, eta, dst: p.types[h] };
                (Some(e), Some(VarKey { eta, pi: p.types[h] }))
            }
            None => {
                let outs: Vec<(BinaryType, UnaryType)> =
                    w.graph.neighbors(pi1).iter().copied().collect();
                if outs.is_empty() {
                    (None, None)
                } else {
                    let (eta, pi2) = outs[rng.gen_range(0..outs.len())];
                    (Some(Configuration { src: pi1, eta, dst: pi2 }), None)
                }
            }
        };
        if let Some(e) = edge {
            let sol = w
                .solutions
                .get(&e)
                .ok_or_else(|| Error::Internal(format!("no stored solution for {e:?}")))?;
            for (vk, count) in sol {
                let fresh = match count {
                    Count::Fin(c) => {
                        let mut n = c
                            .to_usize()
                            .ok_or(Error::PrefixCapExceeded { cap: prefix_cap })?;
                        if Some(*vk) == minus_slot {
                            n -= 1;
                        }
                        n
                    }
                    Count::Inf => {
                        p.inf_slots[j].push(*vk);
                        inf_sample
                    }
                };
                for _ in 0..fresh {
                    if p.types.len() >= prefix_cap {
                        return Err(Error::PrefixCapExceeded { cap: prefix_cap });
                    }
                    let idx = p.types.len();
                    p.types.push(vk.pi);
                    p.back_link.push(Some(j));
                    p.inf_slots.push(Vec::new());
                    p.pairs.insert((j, idx), vk.eta);
                }
            }
        }
        p.processed = j + 1;
        p.frontiers.push(p.types.len());
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct PrefixReport {
    pub ok: bool,
    pub violations: Vec<String>,
    /// Elements whose obligations are not yet guaranteed: allocated but not
    /// processed.
    pub pending: Vec<usize>,
}

/// Check a prefix: conformance of all realized types and configurations to
/// the witness subgraph, the back-link discipline for unprocessed elements,
/// and exact satisfaction of every counting obligation at every processed
/// element (∞ slots are checked against the sample size and evaluated as ∞).
pub fn check_prefix(p: &ModelPrefix, nf: &NormalForm) -> PrefixReport {
    let mut violations = Vec::new();
    let sig = &nf.sig;
    let compiled = CompiledNf::new(nf).ok();

    for (i, ty) in p.types.iter().enumerate() {
        if !p.graph.contains_vertex(*ty) {
            violations.push(format!("element {i} realizes a type outside the subgraph"));
        }
        if let Some(c) = &compiled {
            if !c.compatible_unary(sig, *ty) {
                violations.push(format!("element {i} violates the unary constraint"));
            }
        }
    }
    for (&(i, j), &eta) in &p.pairs {
        if eta.is_null() {
            violations.push(format!("pair ({i},{j}) records a null type"));
            continue;
        }
        let cfg = Configuration { src: p.types[i], eta, dst: p.types[j] };
        if !p.graph.contains_edge(cfg) {
            violations.push(format!("pair ({i},{j}) realizes a configuration outside the subgraph"));
        }
        if i.min(j) >= p.processed {
            violations.push(format!("pair ({i},{j}) defined between unprocessed elements"));
        }
    }
    // Back-link discipline: an unprocessed element touches at most one
    // processed element.
    for u in p.processed..p.types.len() {
        let links = (0..p.processed).filter(|&v| !p.pair_type(u, v).is_null()).count();
        if links > 1 {
            violations.push(format!("unprocessed element {u} has {links} non-null back links"));
        }
    }
    if p.frontiers.windows(2).any(|w| w[0] > w[1]) {
        violations.push("frontier is not monotone".to_string());
    }

    // Exact counting at processed elements.
    for a in 0..p.processed {
        let mut realized: BTreeMap<VarKey, u64> = BTreeMap::new();
        for b in 0..p.types.len() {
            if a == b {
                continue;
            }
            let eta = p.pair_type(a, b);
            if !eta.is_null() {
                *realized.entry(VarKey { eta, pi: p.types[b] }).or_insert(0) += 1;
            }
        }
        let mut vals: BTreeMap<VarKey, Count> =
            realized.iter().map(|(k, n)| (*k, Count::Fin((*n).into()))).collect();
        for vk in &p.inf_slots[a] {
            let have = realized.get(vk).copied().unwrap_or(0);
            if (have as usize) < p.inf_sample {
                violations.push(format!(
                    "element {a}: ∞ slot materialized only {have} of {} samples",
                    p.inf_sample
                ));
            }
            vals.insert(*vk, Count::Inf);
        }
        for (ci, clause) in nf.clauses.iter().enumerate() {
            if !p.types[a].has_unary(clause.trigger) {
                continue;
            }
            let row = obligation_row(&clause.lp, &vals);
            if !constraint_holds_ext(&row, &vals) {
                violations.push(format!("element {a} violates obligation {ci}"));
            }
        }
    }

    PrefixReport {
        ok: violations.is_empty(),
        violations,
        pending: (p.processed..p.types.len()).collect(),
    }
}

/// The obligation as a linear row over the element's realized slots.
fn obligation_row(
    lp: &crate::nf::BasicLpq,
    vals: &BTreeMap<VarKey, Count>,
) -> crate::constraints::LinearConstraint {
    let mut coeffs: BTreeMap<VarKey, num_bigint::BigInt> = BTreeMap::new();
    for key in vals.keys() {
        let mut c = num_bigint::BigInt::from(0);
        for (coeff, r) in &lp.terms {
            if key.eta.has_fwd(*r) {
                c += coeff;
            }
        }
        if c != num_bigint::BigInt::from(0) {
            coeffs.insert(*key, c);
        }
    }
    crate::constraints::LinearConstraint { coeffs, rel: lp.rel.clone(), rhs: lp.rhs.clone() }
}
