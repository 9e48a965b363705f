use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::formula::Relation;
use crate::graph::TypeGraph;
use crate::nf::{BasicLpq, NormalForm};
use crate::solver::Solver;
use crate::types::{BinaryType, Configuration, UnaryType};

/// One unknown of an edge system: the number of neighbours reached through a
/// given label and target type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarKey {
    pub eta: BinaryType,
    pub pi: UnaryType,
}

/// A single linear constraint over neighbourhood-count variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub coeffs: BTreeMap<VarKey, BigInt>,
    pub rel: Relation,
    pub rhs: BigInt,
}

/// The feasibility system attached to an edge (π₁, η, π₂): the anchor count
/// must be at least one, and every counting obligation triggered by π₁ must
/// hold. Variables range over the outgoing neighbourhood of π₁; variables
/// appearing in no sum are dropped, since they are unconstrained and can be
/// set to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystem {
    pub anchor: Configuration,
    pub anchor_var: VarKey,
    /// rows[0] is the anchor constraint `z_{η,π₂} ≥ 1`.
    pub rows: Vec<LinearConstraint>,
    pub vars: Vec<VarKey>,
}

impl LinearSystem {
    /// Assemble a system from its anchor edge and rows; the variable set is
    /// the anchor variable plus every variable appearing in some sum.
    pub fn new(anchor: Configuration, rows: Vec<LinearConstraint>) -> LinearSystem {
        let anchor_var = VarKey { eta: anchor.eta, pi: anchor.dst };
        let mut vars: std::collections::BTreeSet<VarKey> = [anchor_var].into();
        for r in &rows {
            vars.extend(r.coeffs.keys().copied());
        }
        LinearSystem { anchor, anchor_var, rows, vars: vars.into_iter().collect() }
    }
}

/// The constraint a counting obligation induces at vertex π: each count term
/// becomes the sum of the neighbourhood variables whose label contains the
/// term's predicate in the outgoing direction, so the coefficient of
/// z_{η′,π′} is the sum of the coefficients of the matching terms.
pub fn build_q(g: &TypeGraph, pi: UnaryType, lp: &BasicLpq) -> LinearConstraint {
    let mut coeffs: BTreeMap<VarKey, BigInt> = BTreeMap::new();
    for &(eta, pi2) in g.neighbors(pi) {
        let mut c = BigInt::zero();
        for (coeff, r) in &lp.terms {
            if eta.has_fwd(*r) {
                c += coeff;
            }
        }
        if !c.is_zero() {
            coeffs.insert(VarKey { eta, pi: pi2 }, c);
        }
    }
    LinearConstraint { coeffs, rel: lp.rel.clone(), rhs: lp.rhs.clone() }
}

/// The edge system for e = (π₁, η, π₂) in g.
pub fn build_z(g: &TypeGraph, e: Configuration, nf: &NormalForm) -> Result<LinearSystem> {
    if !g.contains_edge(e) {
        return Err(Error::AbsentEdge);
    }
    let anchor_var = VarKey { eta: e.eta, pi: e.dst };
    let mut rows = vec![LinearConstraint {
        coeffs: [(anchor_var, BigInt::from(1))].into(),
        rel: Relation::Ge,
        rhs: BigInt::from(1),
    }];
    for c in &nf.clauses {
        if e.src.has_unary(c.trigger) {
            rows.push(build_q(g, e.src, &c.lp));
        }
    }
    Ok(LinearSystem::new(e, rows))
}

/// An edge is bad when its system has no solution under the active
/// semantics.
pub fn is_bad_edge(
    g: &TypeGraph,
    e: Configuration,
    nf: &NormalForm,
    solver: &mut Solver,
) -> Result<bool> {
    let z = build_z(g, e, nf)?;
    Ok(!solver.decide(&z)?)
}

/// A vertex is bad when it has no outgoing edge and some triggered
/// obligation rejects the all-zero count. Returns the index of the first
/// violated obligation. The zero check is a direct comparison `0 ⊛ δ`,
/// never a solver call.
pub fn is_bad_vertex(g: &TypeGraph, pi: UnaryType, nf: &NormalForm) -> Option<usize> {
    if !g.neighbors(pi).is_empty() {
        return None;
    }
    nf.clauses
        .iter()
        .position(|c| pi.has_unary(c.trigger) && !c.lp.zero_holds())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Formula;
    use crate::nf::LpClause;
    use crate::sig::Signature;

    fn nf_with(sig: Signature, clauses: Vec<LpClause>) -> NormalForm {
        NormalForm {
            orig_sig: sig.clone(),
            sig,
            gamma: Formula::True,
            alphas: vec![],
            clauses,
            extensions: vec![],
        }
    }

    fn lp(terms: Vec<(i64, usize)>, rel: Relation, rhs: i64) -> BasicLpq {
        BasicLpq {
            terms: terms.into_iter().map(|(c, r)| (BigInt::from(c), r)).collect(),
            rel,
            rhs: BigInt::from(rhs),
        }
    }

    #[test]
    fn coefficients_sum_over_matching_terms() {
        // 2·#R − 1·#S with a label carrying both R(x,y) and S(x,y): the
        // variable gets coefficient 2 − 1 = 1.
        let sig = Signature::new(vec![], vec!["R", "S"]).unwrap();
        let nf = nf_with(sig, vec![]);
        let g = crate::graph::build_graph(&nf, 24).unwrap();
        let pi = UnaryType(0);
        let q = build_q(&g, pi, &lp(vec![(2, 0), (-1, 1)], Relation::Eq, 0));
        let both = VarKey { eta: BinaryType(0b0101), pi: UnaryType(0) };
        assert_eq!(q.coeffs.get(&both), Some(&BigInt::from(1)));
        // A label with only S(x,y) gets −1; only R(y,x) drops out entirely.
        let only_s = VarKey { eta: BinaryType(0b0100), pi: UnaryType(0) };
        assert_eq!(q.coeffs.get(&only_s), Some(&BigInt::from(-1)));
        let only_r_in = VarKey { eta: BinaryType(0b0010), pi: UnaryType(0) };
        assert!(!q.coeffs.contains_key(&only_r_in));
    }

    #[test]
    fn empty_neighborhood_gives_the_empty_sum() {
        let sig = Signature::new(vec!["U"], vec![]).unwrap();
        let nf = nf_with(sig, vec![]);
        let g = crate::graph::build_graph(&nf, 24).unwrap();
        let q = build_q(&g, UnaryType(0), &lp(vec![], Relation::Ge, 1));
        assert!(q.coeffs.is_empty());
    }

    #[test]
    fn system_without_obligations_is_only_the_anchor_row() {
        let sig = Signature::new(vec![], vec!["R"]).unwrap();
        let nf = nf_with(sig, vec![]);
        let g = crate::graph::build_graph(&nf, 24).unwrap();
        let e = g.edges().next().unwrap();
        let z = build_z(&g, e, &nf).unwrap();
        assert_eq!(z.rows.len(), 1);
        assert_eq!(z.vars, vec![z.anchor_var]);
        assert!(matches!(
            build_z(&g, Configuration { src: UnaryType(9), ..e }, &nf),
            Err(Error::AbsentEdge)
        ));
    }

    #[test]
    fn bad_vertex_requires_no_outgoing_edges_and_a_violated_zero_check() {
        let sig = Signature::new(vec!["U"], vec!["R"]).unwrap();
        // Obligation: U demands at least one outgoing R-edge.
        let nf = nf_with(sig.clone(), vec![LpClause { trigger: 0, lp: lp(vec![(1, 0)], Relation::Ge, 1) }]);
        // A graph over a signature with no compatible configurations: forbid
        // every pair, leaving isolated vertices.
        let mut nf2 = nf.clone();
        nf2.alphas.push(crate::nf::Alpha { guard: 0, beta: Formula::False });
        let g = crate::graph::build_graph(&nf2, 24).unwrap();
        let with_u = UnaryType(0b01);
        let sans_u = UnaryType(0b00);
        assert_eq!(is_bad_vertex(&g, with_u, &nf2), Some(0));
        assert_eq!(is_bad_vertex(&g, sans_u, &nf2), None);
        // #R = 0 is satisfied by the zero count: not bad.
        let nf3 = {
            let mut n = nf2.clone();
            n.clauses = vec![LpClause { trigger: 0, lp: lp(vec![(1, 0)], Relation::Eq, 0) }];
            n
        };
        assert_eq!(is_bad_vertex(&g, with_u, &nf3), None);
        // A vertex with outgoing edges is never bad.
        let free = nf_with(Signature::new(vec!["U"], vec!["R"]).unwrap(), nf.clauses.clone());
        let g_free = crate::graph::build_graph(&free, 24).unwrap();
        assert_eq!(is_bad_vertex(&g_free, with_u, &free), None);
    }
}
