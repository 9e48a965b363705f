use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::nf::NormalForm;
use crate::sig::Signature;
use crate::types::{all_nonnull_binary_types, all_unary_types, BinaryType, CompiledNf, Configuration, UnaryType};

/// The edge-labelled directed graph of compatible unary types and
/// configurations. Symmetric by construction and under every mutation:
/// (π, η, π′) is an edge exactly when (π′, η̄, π) is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeGraph {
    sig: Signature,
    vertices: BTreeSet<UnaryType>,
    adj: BTreeMap<UnaryType, BTreeSet<(BinaryType, UnaryType)>>,
    /// Bumped whenever the outgoing set of a vertex changes; lets callers
    /// memoize per-neighbourhood computations.
    versions: BTreeMap<UnaryType, u64>,
}

impl TypeGraph {
    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn vertices(&self) -> impl Iterator<Item = UnaryType> + '_ {
        self.vertices.iter().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn contains_vertex(&self, pi: UnaryType) -> bool {
        self.vertices.contains(&pi)
    }

    /// Outgoing edges of π as (label, target) pairs.
    pub fn neighbors(&self, pi: UnaryType) -> &BTreeSet<(BinaryType, UnaryType)> {
        static EMPTY: std::sync::OnceLock<BTreeSet<(BinaryType, UnaryType)>> =
            std::sync::OnceLock::new();
        self.adj.get(&pi).unwrap_or_else(|| EMPTY.get_or_init(BTreeSet::new))
    }

    pub fn neighborhood_version(&self, pi: UnaryType) -> u64 {
        self.versions.get(&pi).copied().unwrap_or(0)
    }

    /// Directed edge count (an edge and its inverse count separately unless
    /// they coincide).
    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|s| s.len()).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = Configuration> + '_ {
        self.adj.iter().flat_map(|(src, outs)| {
            outs.iter().map(|(eta, dst)| Configuration { src: *src, eta: *eta, dst: *dst })
        })
    }

    pub fn contains_edge(&self, e: Configuration) -> bool {
        self.adj.get(&e.src).is_some_and(|s| s.contains(&(e.eta, e.dst)))
    }

    fn bump(&mut self, pi: UnaryType) {
        *self.versions.entry(pi).or_insert(0) += 1;
    }

    fn insert_edge(&mut self, e: Configuration) {
        debug_assert!(!e.eta.is_null());
        let fresh = self.adj.entry(e.src).or_default().insert((e.eta, e.dst));
        if fresh {
            self.bump(e.src);
        }
        let r = e.reverse();
        let fresh = self.adj.entry(r.src).or_default().insert((r.eta, r.dst));
        if fresh {
            self.bump(r.src);
        }
    }

    /// Delete an edge and its inverse. When the edge is its own inverse a
    /// single deletion covers both.
    pub fn remove_edge(&mut self, e: Configuration) -> Result<()> {
        if !self.contains_edge(e) {
            return Err(Error::AbsentEdge);
        }
        self.adj.get_mut(&e.src).unwrap().remove(&(e.eta, e.dst));
        self.bump(e.src);
        let r = e.reverse();
        if r != e {
            let removed = self
                .adj
                .get_mut(&r.src)
                .map(|s| s.remove(&(r.eta, r.dst)))
                .unwrap_or(false);
            if !removed {
                return Err(Error::Internal("symmetry invariant broken: inverse edge missing".into()));
            }
            self.bump(r.src);
        }
        debug_assert!(self.is_symmetric());
        Ok(())
    }

    /// Delete a vertex together with every incident edge (in either role).
    pub fn remove_vertex(&mut self, pi: UnaryType) -> Result<()> {
        if !self.vertices.remove(&pi) {
            return Err(Error::AbsentVertex);
        }
        let outs: Vec<(BinaryType, UnaryType)> =
            self.adj.remove(&pi).map(|s| s.into_iter().collect()).unwrap_or_default();
        self.bump(pi);
        for (eta, dst) in outs {
            if dst != pi {
                if let Some(s) = self.adj.get_mut(&dst) {
                    s.remove(&(eta.reverse(), pi));
                    self.bump(dst);
                }
            }
        }
        debug_assert!(self.is_symmetric());
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|e| self.contains_edge(e.reverse()))
    }

    /// In a symmetric graph a vertex with no outgoing edges has no incoming
    /// edges either.
    pub fn isolated_has_no_incoming(&self, pi: UnaryType) -> bool {
        !self.neighbors(pi).is_empty()
            || self.edges().all(|e| e.dst != pi)
    }

    /// Canonical dump: one `V` line per vertex and one `E` line per directed
    /// edge, in bit-pattern order. Equal graphs dump to identical bytes.
    pub fn dump(&self) -> String {
        fn atoms(v: Vec<String>) -> String {
            if v.is_empty() {
                "-".into()
            } else {
                v.join(" ")
            }
        }
        let mut out = String::new();
        for pi in &self.vertices {
            out.push_str(&format!("V {}\n", atoms(pi.atom_names(&self.sig))));
        }
        for e in self.edges() {
            out.push_str(&format!(
                "E {} | {} | {}\n",
                atoms(e.src.atom_names(&self.sig)),
                atoms(e.eta.atom_names(&self.sig)),
                atoms(e.dst.atom_names(&self.sig)),
            ));
        }
        out
    }
}

/// Build the full graph of a rewritten sentence: vertices are the unary
/// types satisfying γ, edges the configurations consistent with every pair
/// constraint in both orientations.
pub fn build_graph(nf: &NormalForm, type_cap: usize) -> Result<TypeGraph> {
    let sig = nf.sig.clone();
    let compiled = CompiledNf::new(nf)?;
    let vertices: Vec<UnaryType> = all_unary_types(&sig, type_cap)?
        .into_iter()
        .filter(|pi| compiled.compatible_unary(&sig, *pi))
        .collect();
    let labels = all_nonnull_binary_types(&sig, type_cap)?;
    let mut g = TypeGraph {
        sig: sig.clone(),
        vertices: vertices.iter().copied().collect(),
        adj: BTreeMap::new(),
        versions: BTreeMap::new(),
    };
    for (i, &pi) in vertices.iter().enumerate() {
        for &pi2 in &vertices[i..] {
            for &eta in &labels {
                // Compatibility is orientation-symmetric, so scanning labels
                // from the smaller endpoint covers every directed edge.
                if pi == pi2 && eta.reverse() < eta {
                    continue;
                }
                if compiled.compatible_config(&sig, pi, eta, pi2) {
                    g.insert_edge(Configuration { src: pi, eta, dst: pi2 });
                }
            }
        }
    }
    // Directed edges are bounded by |Π|²·|K| = 2^(2n+4m).
    let exp = 2 * sig.n() + 4 * sig.m();
    if exp < usize::BITS as usize {
        assert!(g.edge_count() <= 1usize << exp);
    }
    debug_assert!(g.is_symmetric());
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Formula;
    use crate::nf::{Alpha, NormalForm};

    fn nf_free(sig: Signature) -> NormalForm {
        NormalForm {
            orig_sig: sig.clone(),
            sig,
            gamma: Formula::True,
            alphas: vec![],
            clauses: vec![],
            extensions: vec![],
        }
    }

    #[test]
    fn unconstrained_graph_has_all_configurations() {
        let sig = Signature::new(vec!["U"], vec!["R"]).unwrap();
        let g = build_graph(&nf_free(sig), 24).unwrap();
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edge_count(), 4 * 3 * 4);
    }

    #[test]
    fn false_gamma_gives_the_empty_graph() {
        let sig = Signature::new(vec!["U"], vec!["R"]).unwrap();
        let mut nf = nf_free(sig);
        nf.gamma = Formula::False;
        let g = build_graph(&nf, 24).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn removing_an_edge_removes_its_inverse() {
        let sig = Signature::new(vec![], vec!["R"]).unwrap();
        let mut g = build_graph(&nf_free(sig), 24).unwrap();
        let e = Configuration {
            src: UnaryType(0),
            eta: BinaryType(0b01),
            dst: UnaryType(1),
        };
        assert!(g.contains_edge(e));
        assert!(g.contains_edge(e.reverse()));
        g.remove_edge(e).unwrap();
        assert!(!g.contains_edge(e));
        assert!(!g.contains_edge(e.reverse()));
        assert!(g.is_symmetric());
        assert!(matches!(g.remove_edge(e), Err(Error::AbsentEdge)));
    }

    #[test]
    fn self_inverse_edge_is_removed_once() {
        let sig = Signature::new(vec![], vec!["R"]).unwrap();
        let mut g = build_graph(&nf_free(sig), 24).unwrap();
        let e = Configuration {
            src: UnaryType(0),
            eta: BinaryType(0b11), // symmetric label
            dst: UnaryType(0),
        };
        assert_eq!(e.reverse(), e);
        let before = g.edge_count();
        g.remove_edge(e).unwrap();
        assert_eq!(g.edge_count(), before - 1);
    }

    #[test]
    fn removing_a_vertex_drops_incident_edges_both_ways() {
        let sig = Signature::new(vec![], vec!["R"]).unwrap();
        let mut g = build_graph(&nf_free(sig), 24).unwrap();
        let pi = UnaryType(0);
        g.remove_vertex(pi).unwrap();
        assert!(!g.contains_vertex(pi));
        assert!(g.edges().all(|e| e.src != pi && e.dst != pi));
        assert!(g.is_symmetric());
        // Removing the last vertex empties the graph.
        g.remove_vertex(UnaryType(1)).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.edge_count(), 0);
        assert!(matches!(g.remove_vertex(UnaryType(1)), Err(Error::AbsentVertex)));
    }

    #[test]
    fn removing_last_outgoing_edge_leaves_isolated_vertex_without_incoming() {
        let sig = Signature::new(vec!["U"], vec![]).unwrap();
        // No binary predicates: every vertex is isolated from the start.
        let g = build_graph(&nf_free(sig), 24).unwrap();
        assert_eq!(g.edge_count(), 0);
        for pi in g.vertices() {
            assert!(g.isolated_has_no_incoming(pi));
        }
    }

    #[test]
    fn edges_whose_guard_matches_must_satisfy_beta() {
        // Pair constraint: (R(x,y) ∧ x≠y) → false forbids every R-labelled
        // configuration in either orientation.
        let sig = Signature::new(vec![], vec!["R"]).unwrap();
        let mut nf = nf_free(sig);
        nf.alphas.push(Alpha { guard: 0, beta: Formula::False });
        let g = build_graph(&nf, 24).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.vertex_count(), 2);
    }
}
