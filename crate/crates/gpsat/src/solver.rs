//! Feasibility of conjunctions of linear constraints over the naturals and
//! over ℕ∪{∞}.
//!
//! Relational systems are rewritten into disjunctions of equational systems
//! `Ax = b` over nonnegative integers. Feasibility of an equational system is
//! decided by a depth-first search that is complete within two exact bounds:
//! whenever a solution exists there is one with at most `2d·log₂(4dM)`
//! non-zero entries whose entries are all at most `t(dM)^(2d+1)`, for a d×t
//! system with maximal absolute entry M. Both bounds are computed in exact
//! integer arithmetic.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::constraints::{LinearConstraint, LinearSystem, VarKey};
use crate::error::{Error, Result};
use crate::formula::Relation;

/// A value in ℕ∪{∞}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Count {
    Fin(BigUint),
    Inf,
}

impl Count {
    pub fn zero() -> Count {
        Count::Fin(BigUint::zero())
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, Count::Inf)
    }
}

impl std::fmt::Display for Count {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Count::Fin(v) => write!(f, "{v}"),
            Count::Inf => write!(f, "inf"),
        }
    }
}

/// A signed value in ℤ∪{∞}; the evaluation domain for constraint sides under
/// the extended semantics. Sides are sign-split so −∞ never arises.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtVal {
    Fin(BigInt),
    Inf,
}

/// ∞ + a = a + ∞ = ∞ + ∞ = ∞.
pub fn ext_add(a: ExtVal, b: ExtVal) -> ExtVal {
    match (a, b) {
        (ExtVal::Fin(x), ExtVal::Fin(y)) => ExtVal::Fin(x + y),
        _ => ExtVal::Inf,
    }
}

/// Coefficient times count: 0·∞ = 0 and a·∞ = ∞ for a ≥ 1. The zero case
/// completes the arithmetic for terms whose coefficient cancels.
pub fn ext_mul(coeff: &BigUint, v: &Count) -> ExtVal {
    if coeff.is_zero() {
        return ExtVal::Fin(BigInt::zero());
    }
    match v {
        Count::Fin(c) => ExtVal::Fin(BigInt::from(coeff.clone()) * BigInt::from(c.clone())),
        Count::Inf => ExtVal::Inf,
    }
}

/// The comparison table over ℕ∪{∞}: a ≤ ∞ for every a, ∞ ≡_d ∞, and
/// ∞ ≢_d a for every finite a.
pub fn ext_holds(rel: &Relation, lhs: &ExtVal, rhs: &ExtVal) -> bool {
    match (lhs, rhs) {
        (ExtVal::Fin(a), ExtVal::Fin(b)) => rel.holds(a, b),
        (ExtVal::Inf, ExtVal::Inf) => matches!(
            rel,
            Relation::Eq | Relation::Le | Relation::Ge | Relation::EqMod(_)
        ),
        (ExtVal::Inf, ExtVal::Fin(_)) => matches!(
            rel,
            Relation::Ne | Relation::Ge | Relation::Gt | Relation::NeMod(_)
        ),
        (ExtVal::Fin(_), ExtVal::Inf) => matches!(
            rel,
            Relation::Ne | Relation::Le | Relation::Lt | Relation::NeMod(_)
        ),
    }
}

/// Identifier of an equational-system column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarName {
    Key(VarKey),
    Slack(usize),
    Quot(usize),
}

/// An equational system `Ax = b` over nonnegative integer variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqSystem {
    /// Row-major d×t matrix.
    pub a: Vec<Vec<BigInt>>,
    pub b: Vec<BigInt>,
    pub names: Vec<VarName>,
}

impl EqSystem {
    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    /// Maximal absolute entry of A and b, floored at 1.
    pub fn max_entry(&self) -> BigUint {
        let mut m = BigUint::one();
        for row in &self.a {
            for c in row {
                m = m.max(c.magnitude().clone());
            }
        }
        for c in &self.b {
            m = m.max(c.magnitude().clone());
        }
        m
    }
}

/// floor(2d·log₂(4dM)) = bitlength((4dM)^(2d)) − 1, computed exactly.
pub fn sparsity_bound(d: u64, m: &BigUint) -> u64 {
    let m = if m.is_zero() { BigUint::one() } else { m.clone() };
    let k = BigUint::from(4u64) * BigUint::from(d) * m;
    let pow = k.pow(2 * d as u32);
    pow.bits() - 1
}

/// t·(dM)^(2d+1), exact.
pub fn magnitude_bound(t: u64, d: u64, m: &BigUint) -> BigUint {
    let m = if m.is_zero() { BigUint::one() } else { m.clone() };
    BigUint::from(t) * (BigUint::from(d) * m).pow(2 * d as u32 + 1)
}

/// One alternative rewriting of a relational row into an equation. Extra
/// columns (slack or quotient) are appended per row at assembly time.
#[derive(Debug, Clone)]
struct RowAlt {
    coeffs: BTreeMap<VarKey, BigInt>,
    extras: Vec<(BigInt, bool)>, // (coefficient, is_quotient)
    rhs: BigInt,
}

fn row_alternatives(row: &LinearConstraint, mod_cap: u64) -> Result<Vec<RowAlt>> {
    let base = |rhs: BigInt, extras: Vec<(BigInt, bool)>| RowAlt {
        coeffs: row.coeffs.clone(),
        extras,
        rhs,
    };
    let all_nonneg = row.coeffs.values().all(|c| !c.is_negative());
    let one = BigInt::one();
    Ok(match &row.rel {
        Relation::Eq => vec![base(row.rhs.clone(), vec![])],
        Relation::Le => vec![base(row.rhs.clone(), vec![(one, false)])],
        Relation::Ge => vec![base(row.rhs.clone(), vec![(-one, false)])],
        Relation::Lt => vec![base(&row.rhs - 1, vec![(one, false)])],
        Relation::Gt => vec![base(&row.rhs + 1, vec![(-one, false)])],
        Relation::Ne => {
            let mut alts = Vec::new();
            // Σ ≤ δ−1 is impossible when δ ≤ 0 and the sum cannot go negative.
            if !(all_nonneg && row.rhs <= BigInt::zero()) {
                alts.push(base(&row.rhs - 1, vec![(one.clone(), false)]));
            }
            alts.push(base(&row.rhs + 1, vec![(-one, false)]));
            alts
        }
        Relation::EqMod(d) => {
            if d.is_zero() {
                return Err(Error::ZeroModulus);
            }
            congruence_alts(row, d, &row.rhs, all_nonneg)
        }
        Relation::NeMod(d) => {
            if d.is_zero() {
                return Err(Error::ZeroModulus);
            }
            if d.to_u64().is_none_or(|v| v > mod_cap) {
                return Err(Error::ModulusCapExceeded { d: d.to_string(), cap: mod_cap });
            }
            let d_int = BigInt::from(d.clone());
            let skip = row.rhs.mod_floor(&d_int);
            let mut alts = Vec::new();
            let mut r = BigInt::zero();
            while r < d_int {
                if r != skip {
                    alts.extend(congruence_alts(row, d, &r, all_nonneg));
                }
                r += 1;
            }
            alts
        }
    })
}

/// Σ ≡_d target with residue r = target mod d splits by the sign of the
/// quotient: Σ − d·q = r covers Σ ≥ r and, when the sum can go negative,
/// Σ + d·q = r − d covers Σ ≤ r − d. One quotient variable per branch, so
/// propagation pins it as soon as the sum is known.
fn congruence_alts(
    row: &LinearConstraint,
    d: &BigUint,
    target: &BigInt,
    all_nonneg: bool,
) -> Vec<RowAlt> {
    let d_int = BigInt::from(d.clone());
    let rhs = target.mod_floor(&d_int);
    let mut alts = vec![RowAlt {
        coeffs: row.coeffs.clone(),
        extras: vec![(-&d_int, true)],
        rhs: rhs.clone(),
    }];
    if !all_nonneg {
        alts.push(RowAlt {
            coeffs: row.coeffs.clone(),
            extras: vec![(d_int.clone(), true)],
            rhs: rhs - d_int,
        });
    }
    alts
}

fn assemble(vars: &[VarKey], alts: &[&RowAlt]) -> EqSystem {
    let mut names: Vec<VarName> = vars.iter().map(|v| VarName::Key(*v)).collect();
    let mut extra_cols = 0usize;
    for alt in alts {
        for (_, is_q) in &alt.extras {
            names.push(if *is_q { VarName::Quot(extra_cols) } else { VarName::Slack(extra_cols) });
            extra_cols += 1;
        }
    }
    let t = names.len();
    let mut a = Vec::with_capacity(alts.len());
    let mut b = Vec::with_capacity(alts.len());
    let mut extra_base = vars.len();
    for alt in alts {
        let mut row = vec![BigInt::zero(); t];
        for (i, v) in vars.iter().enumerate() {
            if let Some(c) = alt.coeffs.get(v) {
                row[i] = c.clone();
            }
        }
        for (j, (c, _)) in alt.extras.iter().enumerate() {
            row[extra_base + j] = c.clone();
        }
        extra_base += alt.extras.len();
        a.push(row);
        b.push(alt.rhs.clone());
    }
    EqSystem { a, b, names }
}

/// Rewrite a relational system into the disjunction of its equational
/// branches. The branches are equisatisfiable with the system over ℕ.
pub fn to_equational(sys: &LinearSystem, mod_cap: u64) -> Result<Vec<EqSystem>> {
    let mut out = Vec::new();
    for_each_branch(&sys.vars, &sys.rows, mod_cap, &mut |eq| {
        out.push(eq.clone());
        Ok(true)
    })?;
    Ok(out)
}

fn for_each_branch(
    vars: &[VarKey],
    rows: &[LinearConstraint],
    mod_cap: u64,
    f: &mut dyn FnMut(&EqSystem) -> Result<bool>,
) -> Result<()> {
    let alt_rows: Vec<Vec<RowAlt>> =
        rows.iter().map(|r| row_alternatives(r, mod_cap)).collect::<Result<_>>()?;
    if alt_rows.iter().any(|alts| alts.is_empty()) {
        return Ok(()); // some row has no satisfiable form (e.g. ≢ modulo 1)
    }
    let mut idx = vec![0usize; alt_rows.len()];
    loop {
        let picked: Vec<&RowAlt> = idx.iter().zip(&alt_rows).map(|(i, alts)| &alts[*i]).collect();
        let eq = assemble(vars, &picked);
        if !f(&eq)? {
            return Ok(());
        }
        // Odometer step over the branch product.
        let mut carry = true;
        for (i, alts) in idx.iter_mut().zip(&alt_rows) {
            if !carry {
                break;
            }
            *i += 1;
            if *i < alts.len() {
                carry = false;
            } else {
                *i = 0;
            }
        }
        if carry {
            return Ok(());
        }
    }
}

/// Decide `Ax = b` over ℕ. Returns a witness assignment (respecting both
/// solution bounds) or None. The search assigns variables depth-first in
/// order of decreasing coefficient magnitude, with per-row interval
/// propagation, and is complete within the sparsity and magnitude bounds.
pub fn feasible(eq: &EqSystem, budget: &mut u64) -> Result<Option<Vec<BigUint>>> {
    // Rows with no variables decide themselves.
    for (row, rhs) in eq.a.iter().zip(&eq.b) {
        if row.iter().all(|c| c.is_zero()) && !rhs.is_zero() {
            return Ok(None);
        }
    }
    // Static row divisibility check: gcd of a row's coefficients must divide
    // its right-hand side.
    for (row, rhs) in eq.a.iter().zip(&eq.b) {
        let g = row.iter().fold(BigUint::zero(), |g, c| g.gcd(c.magnitude()));
        if !g.is_zero() && !(rhs.magnitude() % &g).is_zero() {
            return Ok(None);
        }
    }

    // Collapse identical columns: variables with the same coefficient vector
    // are interchangeable, so one representative per class suffices and the
    // others take zero.
    let t_full = eq.cols();
    let mut class_of: Vec<usize> = Vec::with_capacity(t_full);
    let mut reps: Vec<usize> = Vec::new();
    let mut seen: BTreeMap<Vec<BigInt>, usize> = BTreeMap::new();
    let mut zero_cols: Vec<usize> = Vec::new();
    for j in 0..t_full {
        let col: Vec<BigInt> = eq.a.iter().map(|r| r[j].clone()).collect();
        if col.iter().all(|c| c.is_zero()) {
            zero_cols.push(j);
            class_of.push(usize::MAX);
            continue;
        }
        let class = *seen.entry(col).or_insert_with(|| {
            reps.push(j);
            reps.len() - 1
        });
        class_of.push(class);
    }

    let d = eq.rows() as u64;
    let t = reps.len() as u64;
    if t == 0 {
        // All columns vanished; feasible iff b is all zero (checked above).
        return Ok(Some(vec![BigUint::zero(); t_full]));
    }
    let a_reduced: Vec<Vec<BigInt>> =
        eq.a.iter().map(|row| reps.iter().map(|&j| row[j].clone()).collect()).collect();
    // Sound pruning, never used to conclude feasibility: infeasibility over
    // the nonnegative rationals or over the integer lattice both imply
    // infeasibility over ℕ.
    if rational_infeasible(&a_reduced, &eq.b) || lattice_infeasible(&a_reduced, &eq.b) {
        return Ok(None);
    }
    let m = eq.max_entry();
    let b_sparse = sparsity_bound(d.max(1), &m);
    let b_mag = BigInt::from(magnitude_bound(t, d.max(1), &m));

    let a = a_reduced;

    // Depth-first order: decreasing maximal absolute coefficient.
    let mut order: Vec<usize> = (0..reps.len()).collect();
    let weight = |j: usize| -> BigUint {
        a.iter().map(|r| r[j].magnitude().clone()).max().unwrap_or_default()
    };
    order.sort_by(|&p, &q| weight(q).cmp(&weight(p)).then(p.cmp(&q)));

    let mut search = Search {
        a: &a,
        b: &eq.b,
        order,
        b_mag,
        b_sparse,
        budget,
        values: vec![None; reps.len()],
    };
    let found = search.run(0, 0)?;
    if !found {
        return Ok(None);
    }
    let reduced: Vec<BigUint> =
        search.values.into_iter().map(|v| v.expect("search left a variable unassigned")).collect();

    // Expand back to the original columns.
    let mut full = vec![BigUint::zero(); t_full];
    let mut used = vec![false; reps.len()];
    for j in 0..t_full {
        let c = class_of[j];
        if c != usize::MAX && !used[c] {
            full[j] = reduced[c].clone();
            used[c] = true;
        }
    }
    debug_assert!(check_eq_solution(eq, &full));
    Ok(Some(full))
}

/// Fourier–Motzkin elimination over exact integers, deciding whether
/// `Ax = b, x ≥ 0` has a solution in the nonnegative rationals. Returns true
/// only on certified rational infeasibility; gives up (false) when the
/// intermediate inequality count exceeds a fixed cap.
fn rational_infeasible(a: &[Vec<BigInt>], b: &[BigInt]) -> bool {
    const ROW_CAP: usize = 4096;
    let t = a.first().map(|r| r.len()).unwrap_or(0);
    if t == 0 {
        return b.iter().any(|v| !v.is_zero());
    }
    // Inequalities Σ c·x ≤ d: each equation contributes both directions and
    // each variable its nonnegativity.
    let mut rows: Vec<(Vec<BigInt>, BigInt)> = Vec::new();
    for (row, rhs) in a.iter().zip(b) {
        rows.push((row.clone(), rhs.clone()));
        rows.push((row.iter().map(|c| -c).collect(), -rhs));
    }
    for j in 0..t {
        let mut e = vec![BigInt::zero(); t];
        e[j] = BigInt::from(-1);
        rows.push((e, BigInt::zero()));
    }
    for j in 0..t {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut rest = Vec::new();
        for (c, d) in rows.drain(..) {
            if c[j].is_positive() {
                pos.push((c, d));
            } else if c[j].is_negative() {
                neg.push((c, d));
            } else {
                rest.push((c, d));
            }
        }
        if rest.len() + pos.len() * neg.len() > ROW_CAP {
            return false;
        }
        for (pc, pd) in &pos {
            for (nc, nd) in &neg {
                let scale_p = nc[j].magnitude().clone();
                let scale_n = pc[j].magnitude().clone();
                let (sp, sn) = (BigInt::from(scale_p), BigInt::from(scale_n));
                let mut c: Vec<BigInt> =
                    (0..t).map(|k| &pc[k] * &sp + &nc[k] * &sn).collect();
                let mut d = pd * &sp + nd * &sn;
                debug_assert!(c[j].is_zero());
                let g = c.iter().fold(d.magnitude().clone(), |g, v| g.gcd(v.magnitude()));
                if g > BigUint::one() {
                    let g = BigInt::from(g);
                    for v in &mut c {
                        *v /= &g;
                    }
                    d /= &g;
                }
                rest.push((c, d));
            }
        }
        rows = rest;
    }
    rows.iter().any(|(_, d)| d.is_negative())
}

/// Diagonalize `Ax = b` by unimodular row and column operations and check
/// solvability over ℤ: infeasible over the integers implies infeasible over
/// ℕ. Row operations are mirrored on b; column operations only relabel
/// variables. Catches conflicting congruence rows that the rational
/// relaxation cannot certify.
fn lattice_infeasible(a: &[Vec<BigInt>], b: &[BigInt]) -> bool {
    let rows = a.len();
    let cols = a.first().map(|r| r.len()).unwrap_or(0);
    if rows == 0 {
        return false;
    }
    let mut m: Vec<Vec<BigInt>> = a.to_vec();
    let mut v: Vec<BigInt> = b.to_vec();
    let mut k = 0usize;
    while k < rows.min(cols) {
        // Smallest nonzero entry of the trailing submatrix becomes the pivot.
        let mut best: Option<(usize, usize)> = None;
        for i in k..rows {
            for j in k..cols {
                if !m[i][j].is_zero()
                    && best
                        .map(|(bi, bj)| m[i][j].magnitude() < m[bi][bj].magnitude())
                        .unwrap_or(true)
                {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        m.swap(k, pi);
        v.swap(k, pi);
        for row in &mut m {
            row.swap(k, pj);
        }
        let mut clean = true;
        for i in k + 1..rows {
            if !m[i][k].is_zero() {
                let q = m[i][k].div_floor(&m[k][k]);
                for j in k..cols {
                    let delta = &q * &m[k][j];
                    m[i][j] -= delta;
                }
                let dv = &q * &v[k];
                v[i] -= dv;
                if !m[i][k].is_zero() {
                    clean = false;
                }
            }
        }
        for j in k + 1..cols {
            if !m[k][j].is_zero() {
                let q = m[k][j].div_floor(&m[k][k]);
                for row in m.iter_mut() {
                    let delta = &q * &row[k];
                    row[j] -= delta;
                }
                if !m[k][j].is_zero() {
                    clean = false;
                }
            }
        }
        if clean {
            k += 1;
        }
        // Otherwise a strictly smaller remainder entered the submatrix;
        // repeat with the same k. Termination: the minimal absolute value of
        // the submatrix strictly decreases.
    }
    for i in 0..rows {
        if i < cols && i < k {
            if !(&v[i] % &m[i][i]).is_zero() {
                return true;
            }
        } else if !v[i].is_zero() {
            return true;
        }
    }
    false
}

/// Exact re-evaluation of an equational solution.
pub fn check_eq_solution(eq: &EqSystem, xs: &[BigUint]) -> bool {
    eq.a.iter().zip(&eq.b).all(|(row, rhs)| {
        let sum: BigInt =
            row.iter().zip(xs).map(|(c, x)| c * BigInt::from(x.clone())).sum();
        &sum == rhs
    })
}

struct Search<'a> {
    a: &'a [Vec<BigInt>],
    b: &'a [BigInt],
    order: Vec<usize>,
    b_mag: BigInt,
    b_sparse: u64,
    budget: &'a mut u64,
    values: Vec<Option<BigUint>>,
}

impl Search<'_> {
    fn run(&mut self, depth: usize, nonzeros: u64) -> Result<bool> {
        let intervals = match self.propagate()? {
            Some(iv) => iv,
            None => return Ok(false),
        };
        if depth == self.order.len() {
            // Propagation in a fully assigned state already verified rows.
            return Ok(true);
        }
        // Assign any variable propagation has pinned before branching.
        for &j in &self.order[depth..] {
            if self.values[j].is_none() && intervals[j].0 == intervals[j].1 {
                let v = intervals[j].0.clone();
                let nz = nonzeros + u64::from(!v.is_zero());
                if nz > self.b_sparse {
                    return Ok(false);
                }
                self.values[j] = Some(v.magnitude().clone());
                let r = self.run(depth, nz)?;
                if !r {
                    self.values[j] = None;
                }
                return Ok(r);
            }
        }
        let var = self.order[depth];
        if self.values[var].is_some() {
            return self.run(depth + 1, nonzeros);
        }
        let (lo, hi) = intervals[var].clone();
        let mut v = lo;
        while v <= hi {
            if *self.budget == 0 {
                return Err(Error::NodeBudgetExceeded { budget: 0 });
            }
            *self.budget -= 1;
            let nz = nonzeros + u64::from(!v.is_zero());
            if nz > self.b_sparse {
                // Larger values stay nonzero; no point continuing upward.
                return Ok(false);
            }
            self.values[var] = Some(v.magnitude().clone());
            if self.run(depth + 1, nz)? {
                return Ok(true);
            }
            self.values[var] = None;
            v += 1;
        }
        Ok(false)
    }

    /// Interval propagation to a bounded fixpoint. Returns None on an empty
    /// interval (dead branch); otherwise per-variable [lo, hi] bounds.
    fn propagate(&self) -> Result<Option<Vec<(BigInt, BigInt)>>> {
        let t = self.values.len();
        let mut iv: Vec<(BigInt, BigInt)> = (0..t)
            .map(|j| match &self.values[j] {
                Some(v) => (BigInt::from(v.clone()), BigInt::from(v.clone())),
                None => (BigInt::zero(), self.b_mag.clone()),
            })
            .collect();
        for _pass in 0..8 {
            let mut changed = false;
            for (row, rhs) in self.a.iter().zip(self.b) {
                // Range of the whole row sum.
                let mut lo_sum = BigInt::zero();
                let mut hi_sum = BigInt::zero();
                for (c, (lo, hi)) in row.iter().zip(&iv) {
                    if c.is_positive() {
                        lo_sum += c * lo;
                        hi_sum += c * hi;
                    } else if c.is_negative() {
                        lo_sum += c * hi;
                        hi_sum += c * lo;
                    }
                }
                if &lo_sum > rhs || &hi_sum < rhs {
                    return Ok(None);
                }
                for j in 0..t {
                    let c = &row[j];
                    if c.is_zero() || iv[j].0 == iv[j].1 {
                        continue;
                    }
                    let (lo_j, hi_j) = iv[j].clone();
                    // Contribution range of variable j inside this row.
                    let (cl, ch) = if c.is_positive() {
                        (c * &lo_j, c * &hi_j)
                    } else {
                        (c * &hi_j, c * &lo_j)
                    };
                    let other_lo = &lo_sum - &cl;
                    let other_hi = &hi_sum - &ch;
                    // c·x_j must land in [rhs − other_hi, rhs − other_lo].
                    let tgt_lo = rhs - &other_hi;
                    let tgt_hi = rhs - &other_lo;
                    let (mut new_lo, mut new_hi) = if c.is_positive() {
                        (tgt_lo.div_ceil(c), tgt_hi.div_floor(c))
                    } else {
                        (tgt_hi.div_ceil(c), tgt_lo.div_floor(c))
                    };
                    if new_lo < lo_j {
                        new_lo = lo_j.clone();
                    }
                    if new_hi > hi_j {
                        new_hi = hi_j.clone();
                    }
                    if new_lo > new_hi {
                        return Ok(None);
                    }
                    if new_lo != lo_j || new_hi != hi_j {
                        iv[j] = (new_lo, new_hi);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Ok(Some(iv))
    }
}

/// Decide a relational system over ℕ; on success the assignment is
/// restricted to the system's neighbourhood variables.
pub fn feasible_system(
    sys: &LinearSystem,
    node_budget: u64,
    mod_cap: u64,
) -> Result<Option<BTreeMap<VarKey, BigUint>>> {
    feasible_rows(&sys.vars, &sys.rows, node_budget, mod_cap)
}

fn feasible_rows(
    vars: &[VarKey],
    rows: &[LinearConstraint],
    node_budget: u64,
    mod_cap: u64,
) -> Result<Option<BTreeMap<VarKey, BigUint>>> {
    let mut budget = node_budget;
    let mut found: Option<BTreeMap<VarKey, BigUint>> = None;
    let res = for_each_branch(vars, rows, mod_cap, &mut |eq| {
        match feasible(eq, &mut budget) {
            Ok(Some(xs)) => {
                let mut map = BTreeMap::new();
                for (name, v) in eq.names.iter().zip(&xs) {
                    if let VarName::Key(k) = name {
                        map.insert(*k, v.clone());
                    }
                }
                for v in vars {
                    map.entry(*v).or_insert_with(BigUint::zero);
                }
                found = Some(map);
                Ok(false)
            }
            Ok(None) => Ok(true),
            Err(e) => Err(e),
        }
    });
    match res {
        Ok(()) => {}
        Err(Error::NodeBudgetExceeded { .. }) => {
            return Err(Error::NodeBudgetExceeded { budget: node_budget })
        }
        Err(e) => return Err(e),
    }
    if let Some(map) = &found {
        debug_assert!(rows.iter().all(|r| row_satisfied(r, map)));
    }
    Ok(found)
}

fn row_satisfied(row: &LinearConstraint, vals: &BTreeMap<VarKey, BigUint>) -> bool {
    let sum: BigInt = row
        .coeffs
        .iter()
        .map(|(k, c)| c * BigInt::from(vals.get(k).cloned().unwrap_or_default()))
        .sum();
    row.rel.holds(&sum, &row.rhs)
}

/// One side of a sign-split row: a nonnegative constant plus nonnegative
/// coefficients.
#[derive(Debug, Clone)]
struct Side {
    constant: BigUint,
    coeffs: BTreeMap<VarKey, BigUint>,
}

fn split_row(row: &LinearConstraint) -> (Side, Side) {
    let mut lhs = Side { constant: BigUint::zero(), coeffs: BTreeMap::new() };
    let mut rhs = Side { constant: BigUint::zero(), coeffs: BTreeMap::new() };
    for (k, c) in &row.coeffs {
        if c.is_positive() {
            lhs.coeffs.insert(*k, c.magnitude().clone());
        } else if c.is_negative() {
            rhs.coeffs.insert(*k, c.magnitude().clone());
        }
    }
    if row.rhs.is_negative() {
        lhs.constant = row.rhs.magnitude().clone();
    } else {
        rhs.constant = row.rhs.magnitude().clone();
    }
    (lhs, rhs)
}

impl Side {
    fn forced_infinite(&self, inf: &dyn Fn(&VarKey) -> bool) -> bool {
        self.coeffs.iter().any(|(k, c)| !c.is_zero() && inf(k))
    }

    fn eval(&self, vals: &BTreeMap<VarKey, Count>) -> ExtVal {
        let mut acc = ExtVal::Fin(BigInt::from(self.constant.clone()));
        for (k, c) in &self.coeffs {
            let v = vals.get(k).cloned().unwrap_or_else(Count::zero);
            acc = ext_add(acc, ext_mul(c, &v));
        }
        acc
    }
}

/// Evaluate one relational row against an assignment over ℕ∪{∞}. The row is
/// sign-split so both sides are nonnegative combinations; absent variables
/// count as zero.
pub fn constraint_holds_ext(row: &LinearConstraint, vals: &BTreeMap<VarKey, Count>) -> bool {
    let (lhs, rhs) = split_row(row);
    ext_holds(&row.rel, &lhs.eval(vals), &rhs.eval(vals))
}

/// Decide a relational system over ℕ∪{∞} by the guess-and-reduce scheme:
/// guess which variables take ∞, discharge rows the extended comparison
/// table settles, and solve the remaining ∞-free rows over ℕ. Each row is
/// sign-split so both sides are nonnegative combinations; the split is what
/// makes the extended evaluation well defined.
pub fn feasible_infinity(
    sys: &LinearSystem,
    node_budget: u64,
    mod_cap: u64,
) -> Result<Option<BTreeMap<VarKey, Count>>> {
    let mut decider = |vars: &[VarKey], rows: &[LinearConstraint]| -> Result<Option<BTreeMap<VarKey, BigUint>>> {
        feasible_rows(vars, rows, node_budget, mod_cap)
    };
    infinity_search(sys, &mut decider)
}

/// The core ∞-guess loop, parameterized by the ℕ-decider used on residual
/// systems (the built-in search, or an external command).
pub fn infinity_search(
    sys: &LinearSystem,
    decide_nat: &mut dyn FnMut(&[VarKey], &[LinearConstraint]) -> Result<Option<BTreeMap<VarKey, BigUint>>>,
) -> Result<Option<BTreeMap<VarKey, Count>>> {
    let split: Vec<(Side, Side, Relation)> =
        sys.rows.iter().map(|r| {
            let (l, rgt) = split_row(r);
            (l, rgt, r.rel.clone())
        }).collect();

    // Group variables by where they occur with a positive coefficient; one
    // ∞-guess per class suffices, and a chosen class takes ∞ on all members.
    let mut class_sig: BTreeMap<Vec<bool>, Vec<VarKey>> = BTreeMap::new();
    for v in &sys.vars {
        let mut sig = Vec::with_capacity(2 * split.len());
        for (l, r, _) in &split {
            sig.push(l.coeffs.get(v).is_some_and(|c| !c.is_zero()));
            sig.push(r.coeffs.get(v).is_some_and(|c| !c.is_zero()));
        }
        class_sig.entry(sig).or_default().push(*v);
    }
    let classes: Vec<Vec<VarKey>> = class_sig.into_values().collect();
    let nclasses = classes.len().min(20);

    // Finite-first subset order: the all-finite guess comes first, so a
    // finite witness is preferred when one exists.
    for mask in 0u64..1u64 << nclasses {
        let inf_set: std::collections::BTreeSet<VarKey> = classes
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .flat_map(|(_, vs)| vs.iter().copied())
            .collect();
        let is_inf = |k: &VarKey| inf_set.contains(k);

        let mut residual: Vec<LinearConstraint> = Vec::new();
        let mut ok = true;
        for (idx, (l, r, rel)) in split.iter().enumerate() {
            let l_inf = l.forced_infinite(&is_inf);
            let r_inf = r.forced_infinite(&is_inf);
            match (l_inf, r_inf) {
                (true, true) => {
                    if !ext_holds(rel, &ExtVal::Inf, &ExtVal::Inf) {
                        ok = false;
                        break;
                    }
                }
                (true, false) => {
                    // The right side is finite whatever the remaining
                    // variables take; the row holds only if ∞ ⊛ finite does.
                    if !ext_holds(rel, &ExtVal::Inf, &ExtVal::Fin(BigInt::zero())) {
                        ok = false;
                        break;
                    }
                }
                (false, true) => {
                    if !ext_holds(rel, &ExtVal::Fin(BigInt::zero()), &ExtVal::Inf) {
                        ok = false;
                        break;
                    }
                }
                (false, false) => {
                    residual.push(sys.rows[idx].clone());
                }
            }
        }
        if !ok {
            continue;
        }
        let residual_vars: Vec<VarKey> =
            sys.vars.iter().filter(|v| !inf_set.contains(v)).copied().collect();
        if let Some(fin) = decide_nat(&residual_vars, &residual)? {
            let mut out: BTreeMap<VarKey, Count> = BTreeMap::new();
            for v in &sys.vars {
                if inf_set.contains(v) {
                    out.insert(*v, Count::Inf);
                } else {
                    out.insert(*v, Count::Fin(fin.get(v).cloned().unwrap_or_default()));
                }
            }
            debug_assert!(sys.rows.iter().all(|r| {
                let (l, rgt) = split_row(r);
                ext_holds(&r.rel, &l.eval(&out), &rgt.eval(&out))
            }));
            return Ok(Some(out));
        }
    }
    Ok(None)
}

/// How feasibility is decided: over ℕ, or over ℕ∪{∞}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantics {
    Nat,
    NatInfinity,
}

/// The decision backend for edge systems: the built-in search, or an
/// external command speaking the dump protocol (system on stdin, first
/// stdout line `sat` or `unsat`).
#[derive(Debug, Clone)]
pub enum Backend {
    Builtin,
    External(String),
}

/// A configured feasibility oracle with call accounting.
#[derive(Debug)]
pub struct Solver {
    pub semantics: Semantics,
    pub backend: Backend,
    pub node_budget: u64,
    pub mod_cap: u64,
    /// Edge-system decisions requested so far.
    pub calls: u64,
    /// External process invocations (at most one per dumped system).
    pub backend_invocations: u64,
}

impl Solver {
    pub fn new(semantics: Semantics, backend: Backend, node_budget: u64, mod_cap: u64) -> Solver {
        Solver { semantics, backend, node_budget, mod_cap, calls: 0, backend_invocations: 0 }
    }

    /// Is the edge system satisfiable under the active semantics?
    pub fn decide(&mut self, sys: &LinearSystem) -> Result<bool> {
        self.calls += 1;
        match (&self.semantics, self.backend.clone()) {
            (Semantics::Nat, Backend::Builtin) => {
                Ok(feasible_system(sys, self.node_budget, self.mod_cap)?.is_some())
            }
            (Semantics::Nat, Backend::External(cmd)) => {
                let dump = dump_system(sys);
                self.run_external(&cmd, &dump)
            }
            (Semantics::NatInfinity, Backend::Builtin) => {
                Ok(feasible_infinity(sys, self.node_budget, self.mod_cap)?.is_some())
            }
            (Semantics::NatInfinity, Backend::External(cmd)) => {
                let (budget, cap) = (self.node_budget, self.mod_cap);
                let mut decide = |vars: &[VarKey], rows: &[LinearConstraint]| {
                    let dump = dump_rows(vars, rows);
                    let sat = self.run_external(&cmd, &dump)?;
                    Ok(if sat {
                        // The external protocol yields no values; residual
                        // rows only need the verdict here, so witness values
                        // come from the built-in search when requested.
                        Some(
                            feasible_rows(vars, rows, budget, cap)?
                                .ok_or_else(|| Error::SolverFailure(
                                    "external solver answered sat on a system the built-in search finds infeasible".into(),
                                ))?,
                        )
                    } else {
                        None
                    })
                };
                Ok(infinity_search(sys, &mut decide)?.is_some())
            }
        }
    }

    /// Solve for witness values. Always the built-in search: the external
    /// protocol only carries verdicts.
    pub fn solve(&mut self, sys: &LinearSystem) -> Result<Option<BTreeMap<VarKey, Count>>> {
        self.calls += 1;
        match self.semantics {
            Semantics::Nat => Ok(feasible_system(sys, self.node_budget, self.mod_cap)?.map(|m| {
                m.into_iter().map(|(k, v)| (k, Count::Fin(v))).collect()
            })),
            Semantics::NatInfinity => feasible_infinity(sys, self.node_budget, self.mod_cap),
        }
    }

    fn run_external(&mut self, cmd: &str, dump: &str) -> Result<bool> {
        self.backend_invocations += 1;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::SolverFailure(format!("cannot spawn `{cmd}`: {e}")))?;
        child
            .stdin
            .take()
            .ok_or_else(|| Error::SolverFailure("no stdin handle".into()))?
            .write_all(dump.as_bytes())
            .map_err(|e| Error::SolverFailure(format!("cannot write to `{cmd}`: {e}")))?;
        let out = child
            .wait_with_output()
            .map_err(|e| Error::SolverFailure(format!("cannot collect `{cmd}`: {e}")))?;
        let text = String::from_utf8_lossy(&out.stdout);
        match text.lines().next().map(str::trim) {
            Some("sat") => Ok(true),
            Some("unsat") => Ok(false),
            other => Err(Error::SolverFailure(format!(
                "external solver returned {:?} instead of sat/unsat",
                other.unwrap_or("")
            ))),
        }
    }
}

fn var_token(k: &VarKey) -> String {
    format!("z@{:x}.{:x}", k.eta.0, k.pi.0)
}

/// The textual system format: `vars k id…` on the first line, then one line
/// per constraint with k coefficients, a relation token, and the constant.
pub fn dump_rows(vars: &[VarKey], rows: &[LinearConstraint]) -> String {
    let mut out = format!("vars {}", vars.len());
    for v in vars {
        out.push(' ');
        out.push_str(&var_token(v));
    }
    out.push('\n');
    for r in rows {
        let mut line = String::new();
        for v in vars {
            let c = r.coeffs.get(v).cloned().unwrap_or_default();
            line.push_str(&c.to_string());
            line.push(' ');
        }
        let rel = match &r.rel {
            Relation::EqMod(d) => format!("=mod:{d}"),
            Relation::NeMod(d) => format!("!=mod:{d}"),
            other => other.token(),
        };
        line.push_str(&rel);
        line.push(' ');
        line.push_str(&r.rhs.to_string());
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn dump_system(sys: &LinearSystem) -> String {
    dump_rows(&sys.vars, &sys.rows)
}

/// Parse the dump format back into rows; the inverse of `dump_rows`, used by
/// the reference backend mode.
pub fn parse_dump(text: &str) -> Result<(Vec<VarKey>, Vec<LinearConstraint>)> {
    let bad = |msg: &str| Error::SolverFailure(format!("malformed system dump: {msg}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("vars") {
        return Err(bad("missing vars header"));
    }
    let k: usize = toks.next().ok_or_else(|| bad("missing count"))?.parse().map_err(|_| bad("bad count"))?;
    let mut vars = Vec::with_capacity(k);
    for i in 0..k {
        let tok = toks.next().ok_or_else(|| bad("missing identifier"))?;
        let body = tok.strip_prefix("z@");
        let parsed = body.and_then(|b| {
            let (e, p) = b.split_once('.')?;
            Some(VarKey {
                eta: crate::types::BinaryType(u64::from_str_radix(e, 16).ok()?),
                pi: crate::types::UnaryType(u64::from_str_radix(p, 16).ok()?),
            })
        });
        vars.push(parsed.unwrap_or(VarKey {
            // Foreign identifiers still need distinct keys.
            eta: crate::types::BinaryType(1),
            pi: crate::types::UnaryType(i as u64),
        }));
    }
    let mut rows = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != k + 2 {
            return Err(bad("wrong token count in a constraint line"));
        }
        let mut coeffs = BTreeMap::new();
        for (v, t) in vars.iter().zip(&toks[..k]) {
            let c: BigInt = t.parse().map_err(|_| bad("bad coefficient"))?;
            if !c.is_zero() {
                coeffs.insert(*v, c);
            }
        }
        let rel = match toks[k] {
            "=" => Relation::Eq,
            "!=" => Relation::Ne,
            "<=" => Relation::Le,
            ">=" => Relation::Ge,
            "<" => Relation::Lt,
            ">" => Relation::Gt,
            t => {
                let (kind, d) = t.split_once(':').ok_or_else(|| bad("bad relation token"))?;
                let d: BigUint = d.parse().map_err(|_| bad("bad modulus"))?;
                match kind {
                    "=mod" => Relation::EqMod(d),
                    "!=mod" => Relation::NeMod(d),
                    _ => return Err(bad("bad relation token")),
                }
            }
        };
        let rhs: BigInt = toks[k + 1].parse().map_err(|_| bad("bad constant"))?;
        rows.push(LinearConstraint { coeffs, rel, rhs });
    }
    Ok((vars, rows))
}
