//! Rewriting of an arbitrary guarded sentence into the normal form: one
//! quantifier-free universal constraint γ(x), guarded pair constraints
//! (R(x,y) ∧ x≠y) → β(x,y), and counting obligations q(x) → P(x) with P in
//! basic form, over a signature extended with fresh predicates.
//!
//! The pass renames one-free-variable subformulas bottom-up, tracking the
//! polarity of each occurrence so every definitional conjunct can stay
//! one-sided:
//!
//! * a universal subformula ψ(x) = ∀y (r → φ) occurring positively is
//!   replaced by a fresh q(x) with the conjunct ∀x (q → ψ), which splits
//!   into a self-loop part folded into γ and a guarded pair constraint;
//! * occurring negatively, the converse ∀x (ψ → q) is needed instead, and
//!   its contrapositive ¬q → ∃y (r ∧ ¬φ) is expressed by counting: a fresh
//!   witness relation W bridged to r ∧ ¬φ plus the obligation that ¬q forces
//!   at least one W-neighbour (or a self-loop witness);
//! * counting constraints are converted to basic form by bridging each
//!   non-trivial term to a fresh relation in both directions, then renamed
//!   to a fresh trigger predicate (with the comparison negated for negative
//!   occurrences — the relation set is closed under negation);
//! * existential subformulas are rewritten through their universal duals.
//!
//! Occurrences inside counting terms are non-monotone, so both one-sided
//! conjuncts are emitted there (the polarity "both").
//!
//! Sentence-level boolean structure is handled separately: universal blocks
//! fold into γ, existential blocks become counting witnesses, and a
//! disjunction splits the model into marker classes kept apart by
//! marker-agreement pair constraints on every relation.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::One;

use crate::error::{Error, Result};
use crate::formula::{CountExpr, CountTerm, Formula, GuardAtom, Relation, Sentence, Var};
use crate::nf::{Alpha, BasicLpq, Extension, LpClause, NormalForm};
use crate::sig::Signature;
use crate::validate::validate_guarded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Pol {
    Pos,
    Neg,
    Both,
}

impl Pol {
    fn flip(self) -> Pol {
        match self {
            Pol::Pos => Pol::Neg,
            Pol::Neg => Pol::Pos,
            Pol::Both => Pol::Both,
        }
    }
}

#[derive(Debug)]
enum BlockTree {
    TrueLeaf,
    FalseLeaf,
    /// ∀x χ(x) with χ quantifier-free.
    All(Formula),
    /// ∃x χ(x) with χ quantifier-free.
    Ex(Formula),
    And(Box<BlockTree>, Box<BlockTree>),
    Or(Box<BlockTree>, Box<BlockTree>),
}

fn block_formula(t: &BlockTree) -> Formula {
    match t {
        BlockTree::TrueLeaf => Formula::True,
        BlockTree::FalseLeaf => Formula::False,
        BlockTree::All(chi) => {
            Formula::Forall { var: Var::X, guard: None, body: Box::new(chi.clone()) }
        }
        BlockTree::Ex(chi) => Formula::not(Formula::Forall {
            var: Var::X,
            guard: None,
            body: Box::new(Formula::not_s(chi.clone())),
        }),
        BlockTree::And(a, b) => Formula::and(block_formula(a), block_formula(b)),
        BlockTree::Or(a, b) => Formula::or(block_formula(a), block_formula(b)),
    }
}

struct Builder {
    sig: Signature,
    orig_sig: Signature,
    gamma: Vec<Formula>,
    alphas: Vec<Alpha>,
    clauses: Vec<LpClause>,
    extensions: Vec<Extension>,
    /// Unary indices of disjunction markers; agreement constraints for them
    /// are emitted over the final signature.
    markers: Vec<usize>,
    fresh_unary: usize,
    fresh_binary: usize,
    rename_cache: HashMap<(Formula, Pol), Formula>,
    term_cache: HashMap<(String, bool, Formula), usize>,
}

impl Builder {
    fn new(sig: &Signature) -> Builder {
        Builder {
            sig: sig.clone(),
            orig_sig: sig.clone(),
            gamma: Vec::new(),
            alphas: Vec::new(),
            clauses: Vec::new(),
            extensions: Vec::new(),
            markers: Vec::new(),
            fresh_unary: 0,
            fresh_binary: 0,
            rename_cache: HashMap::new(),
            term_cache: HashMap::new(),
        }
    }

    /// Fresh names use `#`, which cannot appear in input identifiers except
    /// in this generated form; existing names are skipped regardless.
    fn fresh_unary(&mut self, def: Formula, arity: usize) -> Result<(String, usize)> {
        loop {
            self.fresh_unary += 1;
            let name = format!("q#{}", self.fresh_unary);
            if !self.sig.contains(&name) {
                let idx = self.sig.add_unary(name.clone())?;
                self.extensions.push(Extension { name: name.clone(), arity, def });
                return Ok((name, idx));
            }
        }
    }

    fn fresh_binary(&mut self, def: Formula) -> Result<(String, usize)> {
        loop {
            self.fresh_binary += 1;
            let name = format!("R#{}", self.fresh_binary);
            if !self.sig.contains(&name) {
                let idx = self.sig.add_binary(name.clone())?;
                self.extensions.push(Extension { name: name.clone(), arity: 2, def });
                return Ok((name, idx));
            }
        }
    }

    fn push_gamma(&mut self, f: Formula) {
        if f != Formula::True {
            self.gamma.push(f);
        }
    }

    fn push_alpha(&mut self, guard: usize, beta: Formula) {
        if beta != Formula::True {
            self.alphas.push(Alpha { guard, beta });
        }
    }

    fn binary_idx(&self, name: &str) -> Result<usize> {
        self.sig
            .binary_index(name)
            .ok_or_else(|| Error::Internal(format!("unresolved binary predicate `{name}`")))
    }

    /// Replace every quantified or counting subformula below `f` by fresh
    /// atoms, emitting the definitional conjuncts. The result is
    /// quantifier-free.
    fn transform(&mut self, f: &Formula, pol: Pol) -> Result<Formula> {
        match f {
            Formula::True
            | Formula::False
            | Formula::Unary { .. }
            | Formula::Binary { .. }
            | Formula::Eq { .. } => Ok(f.clone()),
            Formula::Not(a) => Ok(Formula::not_s(self.transform(a, pol.flip())?)),
            Formula::And(a, b) => {
                Ok(Formula::and_s(self.transform(a, pol)?, self.transform(b, pol)?))
            }
            Formula::Or(a, b) => {
                Ok(Formula::or_s(self.transform(a, pol)?, self.transform(b, pol)?))
            }
            Formula::Implies(a, b) => Ok(Formula::implies_s(
                self.transform(a, pol.flip())?,
                self.transform(b, pol)?,
            )),
            Formula::Count(c) => self.rename_count(c, pol),
            Formula::Forall { var, guard, body } => {
                let guard = guard.clone().ok_or_else(|| {
                    Error::Internal("unguarded universal below the sentence level".into())
                })?;
                let body_qf = self.transform(body, pol)?;
                self.rename_forall(*var, &guard, body_qf, pol)
            }
            Formula::Exists { var, guard, body } => {
                // ∃y (g ∧ φ) is ¬∀y (g → ¬φ); the body stays positive under
                // the double negation, the universal flips.
                let body_qf = self.transform(body, pol)?;
                let occ =
                    self.rename_forall(*var, guard, Formula::not_s(body_qf), pol.flip())?;
                Ok(Formula::not_s(occ))
            }
        }
    }

    /// Rename the universal subformula ψ(v̄) = ∀var (guard → body) with body
    /// quantifier-free and exactly one free variable. Returns the
    /// replacement atom over that variable.
    fn rename_forall(
        &mut self,
        var: Var,
        guard: &GuardAtom,
        body: Formula,
        pol: Pol,
    ) -> Result<Formula> {
        let node = Formula::Forall {
            var,
            guard: Some(guard.clone()),
            body: Box::new(body.clone()),
        };
        let free = node.free_vars();
        if free.len() != 1 {
            return Err(Error::Internal(format!(
                "renaming expects one free variable, found {}",
                free.len()
            )));
        }
        let anchor = *free.iter().next().unwrap();
        if anchor == Var::Y {
            // Work on the x-anchored mirror image; mirror the atom back.
            let swapped_guard = GuardAtom {
                pred: guard.pred.clone(),
                first: guard.first.other(),
                second: guard.second.map(Var::other),
            };
            let occ =
                self.rename_forall(var.other(), &swapped_guard, body.swap_vars(), pol)?;
            return Ok(occ.swap_vars());
        }
        debug_assert_eq!(var, Var::Y);
        if let Some(hit) = self.rename_cache.get(&(node.clone(), pol)) {
            return Ok(hit.clone());
        }

        let (qname, qidx) = self.fresh_unary(node.clone(), 1)?;
        let _ = qidx;
        let q_at_x = Formula::Unary { pred: qname.clone(), var: Var::X };

        if matches!(pol, Pol::Pos | Pol::Both) {
            // q → ∀y (g → body): the self-loop case folds into γ, the
            // distinct-pair case is a guarded constraint.
            let guard_f = guard.to_formula();
            let diag = Formula::implies_s(
                q_at_x.clone(),
                Formula::implies_s(guard_f.substitute_y_with_x(), body.substitute_y_with_x()),
            );
            self.push_gamma(diag);
            let ridx = self.binary_idx(&guard.pred)?;
            match (guard.first, guard.second) {
                (Var::X, Some(Var::Y)) => {
                    self.push_alpha(ridx, Formula::implies_s(q_at_x.clone(), body.clone()));
                }
                (Var::Y, Some(Var::X)) => {
                    // (R(y,x) ∧ x≠y) → (q(x) → body) reads, with the pair
                    // reversed, as (R(x,y) ∧ x≠y) → (q(y) → body[x↔y]).
                    self.push_alpha(
                        ridx,
                        Formula::implies_s(q_at_x.swap_vars(), body.swap_vars()),
                    );
                }
                _ => {
                    return Err(Error::Internal(
                        "closed universal reached the renaming stage".into(),
                    ))
                }
            }
        }

        if matches!(pol, Pol::Neg | Pol::Both) {
            // ψ → q, i.e. ¬q → ∃y (g ∧ ¬body): a self-loop witness in γ, or
            // at least one witness neighbour in a fresh relation bridged to
            // g ∧ ¬body.
            let witness = Formula::and_s(guard.to_formula(), Formula::not_s(body.clone()));
            self.emit_existential_witness(Formula::not_s(q_at_x.clone()), witness)?;
        }

        self.rename_cache.insert((node, pol), q_at_x.clone());
        Ok(q_at_x)
    }

    /// Emit conjuncts forcing: trigger(x) → ∃y (witness(x,y)) where witness
    /// is quantifier-free over {x,y}. The existential is split into the
    /// self-loop disjunct witness(x,x), folded into γ, and a count of
    /// distinct witness neighbours through a fresh relation.
    fn emit_existential_witness(&mut self, trigger: Formula, witness: Formula) -> Result<()> {
        let (wname, widx) = self.fresh_binary(witness.clone())?;
        let w_atom = Formula::Binary { pred: wname.clone(), left: Var::X, right: Var::Y };
        let _ = w_atom;
        let (qcname, qcidx) = self.fresh_unary(
            Formula::Count(CountExpr {
                terms: vec![CountTerm {
                    coeff: BigInt::one(),
                    pred: wname.clone(),
                    incoming: false,
                    inner: Box::new(Formula::not(Formula::Eq { left: Var::X, right: Var::Y })),
                }],
                rel: Relation::Ge,
                rhs: BigInt::one(),
            }),
            1,
        )?;
        self.push_alpha(widx, witness.clone());
        self.clauses.push(LpClause {
            trigger: qcidx,
            lp: BasicLpq { terms: vec![(BigInt::one(), widx)], rel: Relation::Ge, rhs: BigInt::one() },
        });
        let diag = witness.substitute_y_with_x();
        self.push_gamma(Formula::implies_s(
            trigger,
            Formula::or_s(diag, Formula::Unary { pred: qcname, var: Var::X }),
        ));
        Ok(())
    }

    /// Convert a counting constraint to basic form and rename it to a fresh
    /// trigger. Inner formulas sit in a non-monotone position, so they are
    /// transformed at polarity Both; each non-trivial term is bridged to a
    /// fresh relation agreeing with it on all distinct pairs.
    fn rename_count(&mut self, c: &CountExpr, pol: Pol) -> Result<Formula> {
        let mut basic_terms: Vec<(BigInt, usize)> = Vec::new();
        let mut rebuilt_terms: Vec<CountTerm> = Vec::new();
        for t in &c.terms {
            let inner = self.transform(&t.inner, Pol::Both)?;
            let trivial = inner == Formula::True
                || inner == Formula::not(Formula::Eq { left: Var::X, right: Var::Y })
                || inner == Formula::not(Formula::Eq { left: Var::Y, right: Var::X });
            let ridx = if trivial && !t.incoming {
                self.binary_idx(&t.pred)?
            } else {
                self.basicize_term(&t.pred, t.incoming, inner)?
            };
            basic_terms.push((t.coeff.clone(), ridx));
            rebuilt_terms.push(CountTerm {
                coeff: t.coeff.clone(),
                pred: self.sig.binary_name(ridx).to_string(),
                incoming: false,
                inner: Box::new(Formula::not(Formula::Eq { left: Var::X, right: Var::Y })),
            });
        }
        let basic = BasicLpq { terms: basic_terms, rel: c.rel.clone(), rhs: c.rhs.clone() };
        let count_key = Formula::Count(CountExpr {
            terms: rebuilt_terms.clone(),
            rel: c.rel.clone(),
            rhs: c.rhs.clone(),
        });
        if let Some(hit) = self.rename_cache.get(&(count_key.clone(), pol)) {
            return Ok(hit.clone());
        }
        let occ = match pol {
            Pol::Pos => {
                let (qname, qidx) = self.fresh_unary(count_key.clone(), 1)?;
                let _ = qname;
                self.clauses.push(LpClause { trigger: qidx, lp: basic });
                Formula::Unary { pred: self.sig.unary_name(qidx).to_string(), var: Var::X }
            }
            Pol::Neg => {
                // The occurrence becomes ¬q with q → ¬P; negating the
                // comparison keeps the constraint basic.
                let negated = BasicLpq {
                    terms: basic.terms.clone(),
                    rel: basic.rel.negate(),
                    rhs: basic.rhs.clone(),
                };
                let def = Formula::Count(CountExpr {
                    terms: rebuilt_terms,
                    rel: c.rel.negate(),
                    rhs: c.rhs.clone(),
                });
                let (qname, qidx) = self.fresh_unary(def, 1)?;
                self.clauses.push(LpClause { trigger: qidx, lp: negated });
                Formula::not(Formula::Unary { pred: qname, var: Var::X })
            }
            Pol::Both => {
                let (qname, qidx) = self.fresh_unary(count_key.clone(), 1)?;
                let negated = BasicLpq {
                    terms: basic.terms.clone(),
                    rel: basic.rel.negate(),
                    rhs: basic.rhs.clone(),
                };
                let neg_def = Formula::Count(CountExpr {
                    terms: rebuilt_terms,
                    rel: c.rel.negate(),
                    rhs: c.rhs.clone(),
                });
                let (qbar_name, qbar_idx) = self.fresh_unary(neg_def, 1)?;
                self.clauses.push(LpClause { trigger: qidx, lp: basic });
                self.clauses.push(LpClause { trigger: qbar_idx, lp: negated });
                self.push_gamma(Formula::or(
                    Formula::Unary { pred: qname.clone(), var: Var::X },
                    Formula::Unary { pred: qbar_name, var: Var::X },
                ));
                Formula::Unary { pred: qname, var: Var::X }
            }
        };
        self.rename_cache.insert((count_key, pol), occ.clone());
        Ok(occ)
    }

    /// Bridge one count term to a fresh relation B: on distinct pairs,
    /// B(x,y) holds exactly when the term's direction atom and inner formula
    /// do, so counting B outgoing reproduces the term's count.
    fn basicize_term(&mut self, pred: &str, incoming: bool, inner: Formula) -> Result<usize> {
        let key = (pred.to_string(), incoming, inner.clone());
        if let Some(idx) = self.term_cache.get(&key) {
            return Ok(*idx);
        }
        let dir = if incoming {
            Formula::Binary { pred: pred.to_string(), left: Var::Y, right: Var::X }
        } else {
            Formula::Binary { pred: pred.to_string(), left: Var::X, right: Var::Y }
        };
        let def = Formula::and_s(dir.clone(), inner.clone());
        let (bname, bidx) = self.fresh_binary(def.clone())?;
        let b_atom = Formula::Binary { pred: bname, left: Var::X, right: Var::Y };
        // (B(x,y) ∧ x≠y) → (dir ∧ inner)
        self.push_alpha(bidx, def);
        // (dir ∧ x≠y) → (inner → B(x,y)), guard-oriented.
        let ridx = self.binary_idx(pred)?;
        if incoming {
            // Guard R(y,x): reverse the pair so the guard reads R(x,y).
            self.push_alpha(
                ridx,
                Formula::implies_s(inner.swap_vars(), b_atom.swap_vars()),
            );
        } else {
            self.push_alpha(ridx, Formula::implies_s(inner, b_atom));
        }
        self.term_cache.insert(key, bidx);
        Ok(bidx)
    }

    // --- sentence level ---------------------------------------------------

    /// Fast paths for conjuncts that already have the target shape, so a
    /// sentence in normal form comes back identical up to fresh-name
    /// bookkeeping.
    fn try_fast_conjunct(&mut self, c: &Formula) -> Result<bool> {
        let Formula::Forall { var, guard: None, body } = c else {
            return Ok(false);
        };
        let body = if *var == Var::Y { body.swap_vars() } else { (**body).clone() };
        // ∀x qf(x): straight into γ.
        if body.is_quantifier_free() {
            self.push_gamma(body);
            return Ok(true);
        }
        // ∀x ∀y : R(v,w) . qf(x,y): a guarded pair constraint plus its
        // self-loop part.
        if let Formula::Forall { var: inner_var, guard: Some(g), body: inner } = &body {
            if *inner_var == Var::Y
                && inner.is_quantifier_free()
                && matches!(
                    (g.first, g.second),
                    (Var::X, Some(Var::Y)) | (Var::Y, Some(Var::X))
                )
            {
                let ridx = self.binary_idx(&g.pred)?;
                let (beta, diag) = match (g.first, g.second) {
                    (Var::X, Some(Var::Y)) => ((**inner).clone(), (**inner).substitute_y_with_x()),
                    _ => (inner.swap_vars(), (**inner).substitute_y_with_x()),
                };
                self.push_gamma(Formula::implies_s(
                    Formula::Binary { pred: g.pred.clone(), left: Var::X, right: Var::X },
                    diag,
                ));
                self.push_alpha(ridx, beta);
                return Ok(true);
            }
        }
        // ∀x (u(x) → P(x)) or ∀x P(x) with P basic up to incoming-direction
        // proxies: a counting obligation without a fresh trigger.
        let (trigger, count) = match &body {
            Formula::Implies(lhs, rhs) => match (lhs.as_ref(), rhs.as_ref()) {
                (Formula::Unary { pred, var: Var::X }, Formula::Count(c)) => {
                    (Some(pred.clone()), c)
                }
                _ => return Ok(false),
            },
            Formula::Count(c) => (None, c),
            _ => return Ok(false),
        };
        let all_trivial = count.terms.iter().all(|t| {
            *t.inner == Formula::True
                || *t.inner == Formula::not(Formula::Eq { left: Var::X, right: Var::Y })
                || *t.inner == Formula::not(Formula::Eq { left: Var::Y, right: Var::X })
        });
        if !all_trivial {
            return Ok(false);
        }
        let mut terms = Vec::new();
        for t in &count.terms {
            let ridx = if t.incoming {
                self.basicize_term(&t.pred, true, Formula::not(Formula::Eq { left: Var::X, right: Var::Y }))?
            } else {
                self.binary_idx(&t.pred)?
            };
            terms.push((t.coeff.clone(), ridx));
        }
        let lp = BasicLpq { terms, rel: count.rel.clone(), rhs: count.rhs.clone() };
        let trigger_idx = match trigger {
            Some(name) => self
                .sig
                .unary_index(&name)
                .ok_or_else(|| Error::Internal(format!("unresolved predicate `{name}`")))?,
            None => {
                let (_, idx) = self.fresh_unary(Formula::True, 1)?;
                self.push_gamma(Formula::Unary {
                    pred: self.sig.unary_name(idx).to_string(),
                    var: Var::X,
                });
                idx
            }
        };
        self.clauses.push(LpClause { trigger: trigger_idx, lp });
        Ok(true)
    }

    fn to_blocks(&mut self, f: &Formula, positive: bool) -> Result<BlockTree> {
        Ok(match f {
            Formula::True => {
                if positive {
                    BlockTree::TrueLeaf
                } else {
                    BlockTree::FalseLeaf
                }
            }
            Formula::False => {
                if positive {
                    BlockTree::FalseLeaf
                } else {
                    BlockTree::TrueLeaf
                }
            }
            Formula::Not(a) => self.to_blocks(a, !positive)?,
            Formula::And(a, b) => {
                let (ta, tb) = (self.to_blocks(a, positive)?, self.to_blocks(b, positive)?);
                if positive {
                    BlockTree::And(Box::new(ta), Box::new(tb))
                } else {
                    BlockTree::Or(Box::new(ta), Box::new(tb))
                }
            }
            Formula::Or(a, b) => {
                let (ta, tb) = (self.to_blocks(a, positive)?, self.to_blocks(b, positive)?);
                if positive {
                    BlockTree::Or(Box::new(ta), Box::new(tb))
                } else {
                    BlockTree::And(Box::new(ta), Box::new(tb))
                }
            }
            Formula::Implies(a, b) => {
                let (ta, tb) = (self.to_blocks(a, !positive)?, self.to_blocks(b, positive)?);
                if positive {
                    BlockTree::Or(Box::new(ta), Box::new(tb))
                } else {
                    BlockTree::And(Box::new(ta), Box::new(tb))
                }
            }
            Formula::Forall { var, guard, body } => {
                let body_qf = self.transform(body, if positive { Pol::Pos } else { Pol::Neg })?;
                let guard_f = guard.as_ref().map(GuardAtom::to_formula);
                let mk = |chi: Formula, var: Var| if var == Var::Y { chi.swap_vars() } else { chi };
                if positive {
                    let chi = match guard_f {
                        Some(g) => Formula::implies_s(g, body_qf),
                        None => body_qf,
                    };
                    BlockTree::All(mk(chi, *var))
                } else {
                    let chi = match guard_f {
                        Some(g) => Formula::and_s(g, Formula::not_s(body_qf)),
                        None => Formula::not_s(body_qf),
                    };
                    BlockTree::Ex(mk(chi, *var))
                }
            }
            Formula::Exists { var, guard, body } => {
                let body_qf = self.transform(body, if positive { Pol::Pos } else { Pol::Neg })?;
                let guard_f = guard.to_formula();
                let mk = |chi: Formula, var: Var| if var == Var::Y { chi.swap_vars() } else { chi };
                if positive {
                    BlockTree::Ex(mk(Formula::and_s(guard_f, body_qf), *var))
                } else {
                    BlockTree::All(mk(Formula::implies_s(guard_f, Formula::not_s(body_qf)), *var))
                }
            }
            Formula::Count(_) | Formula::Unary { .. } | Formula::Binary { .. } | Formula::Eq { .. } => {
                return Err(Error::Internal(
                    "open formula at the sentence level; the input is not closed".into(),
                ))
            }
        })
    }

    fn encode(&mut self, t: BlockTree, ctx: &[String]) -> Result<()> {
        let guard_ctx = |ctx: &[String], f: Formula| -> Formula {
            let mut out = f;
            for c in ctx.iter().rev() {
                out = Formula::implies_s(
                    Formula::Unary { pred: c.clone(), var: Var::X },
                    out,
                );
            }
            out
        };
        match t {
            BlockTree::TrueLeaf => {}
            BlockTree::FalseLeaf => {
                let f = guard_ctx(ctx, Formula::False);
                self.push_gamma(f);
            }
            BlockTree::All(chi) => {
                let f = guard_ctx(ctx, chi);
                self.push_gamma(f);
            }
            BlockTree::Ex(chi) => {
                // Every element of this marker class either witnesses χ
                // itself or counts at least one distinct χ-witness.
                let trigger = if ctx.is_empty() {
                    Formula::True
                } else {
                    let mut acc = Formula::True;
                    for c in ctx {
                        acc = Formula::and_s(
                            acc,
                            Formula::Unary { pred: c.clone(), var: Var::X },
                        );
                    }
                    acc
                };
                // trigger → (χ(x) ∨ has-witness); reuse the existential
                // witness machinery with the witness formula χ(y).
                let witness = chi.swap_vars();
                let chi_or = chi;
                let (wname, widx) = self.fresh_binary(witness.clone())?;
                let _ = wname;
                let (qcname, qcidx) = self.fresh_unary(
                    Formula::Count(CountExpr {
                        terms: vec![CountTerm {
                            coeff: BigInt::one(),
                            pred: self.sig.binary_name(widx).to_string(),
                            incoming: false,
                            inner: Box::new(Formula::not(Formula::Eq {
                                left: Var::X,
                                right: Var::Y,
                            })),
                        }],
                        rel: Relation::Ge,
                        rhs: BigInt::one(),
                    }),
                    1,
                )?;
                self.push_alpha(widx, witness);
                self.clauses.push(LpClause {
                    trigger: qcidx,
                    lp: BasicLpq {
                        terms: vec![(BigInt::one(), widx)],
                        rel: Relation::Ge,
                        rhs: BigInt::one(),
                    },
                });
                let f = Formula::implies_s(
                    trigger,
                    Formula::or_s(chi_or, Formula::Unary { pred: qcname, var: Var::X }),
                );
                self.push_gamma(f);
            }
            BlockTree::And(a, b) => {
                self.encode(*a, ctx)?;
                self.encode(*b, ctx)?;
            }
            BlockTree::Or(a, b) => {
                let (c1, i1) = self.fresh_unary(block_formula(&a), 0)?;
                let (c2, i2) = self.fresh_unary(block_formula(&b), 0)?;
                self.markers.push(i1);
                self.markers.push(i2);
                let f = guard_ctx(
                    ctx,
                    Formula::or(
                        Formula::Unary { pred: c1.clone(), var: Var::X },
                        Formula::Unary { pred: c2.clone(), var: Var::X },
                    ),
                );
                self.push_gamma(f);
                let mut ctx1 = ctx.to_vec();
                ctx1.push(c1);
                self.encode(*a, &ctx1)?;
                let mut ctx2 = ctx.to_vec();
                ctx2.push(c2);
                self.encode(*b, &ctx2)?;
            }
        }
        Ok(())
    }

    /// Neighbouring elements agree on every disjunction marker, so marker
    /// classes are only related through null pairs and each class is a model
    /// of its own disjunct.
    fn emit_marker_agreement(&mut self) {
        for &marker in &self.markers.clone() {
            let name = self.sig.unary_name(marker).to_string();
            let cx = Formula::Unary { pred: name.clone(), var: Var::X };
            let cy = Formula::Unary { pred: name, var: Var::Y };
            let agree = Formula::and(
                Formula::implies(cx.clone(), cy.clone()),
                Formula::implies(cy, cx),
            );
            for ridx in 0..self.sig.m() {
                self.push_alpha(ridx, agree.clone());
            }
        }
    }

    fn finish(mut self) -> Result<NormalForm> {
        self.emit_marker_agreement();
        let gamma = self
            .gamma
            .into_iter()
            .fold(Formula::True, Formula::and_s);
        let nf = NormalForm {
            sig: self.sig,
            orig_sig: self.orig_sig,
            gamma,
            alphas: self.alphas,
            clauses: self.clauses,
            extensions: self.extensions,
        };
        nf.recognize()?;
        Ok(nf)
    }
}

/// Pull closed quantified subformulas out from under binders by case
/// splitting on their truth, so the renaming stage only ever sees
/// subformulas with exactly one free variable.
fn hoist_closed(f: &Formula) -> Result<Formula> {
    let mut cur = f.clone();
    for _ in 0..64 {
        match find_closed_under_binder(&cur, false) {
            None => return Ok(cur),
            Some(sigma) => {
                let on = substitute(&cur, &sigma, &Formula::True);
                let off = substitute(&cur, &sigma, &Formula::False);
                cur = Formula::or(
                    Formula::and(sigma.clone(), on),
                    Formula::and(Formula::not(sigma), off),
                );
            }
        }
    }
    Err(Error::Internal("too many nested closed subformulas".into()))
}

fn find_closed_under_binder(f: &Formula, under: bool) -> Option<Formula> {
    match f {
        Formula::True
        | Formula::False
        | Formula::Unary { .. }
        | Formula::Binary { .. }
        | Formula::Eq { .. } => None,
        Formula::Not(a) => find_closed_under_binder(a, under),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            find_closed_under_binder(a, under).or_else(|| find_closed_under_binder(b, under))
        }
        Formula::Forall { body, .. } | Formula::Exists { body, .. } => {
            if under && f.free_vars().is_empty() {
                return Some(f.clone());
            }
            find_closed_under_binder(body, true)
        }
        Formula::Count(c) => c
            .terms
            .iter()
            .find_map(|t| find_closed_under_binder(&t.inner, true)),
    }
}

fn substitute(f: &Formula, target: &Formula, with: &Formula) -> Formula {
    if f == target {
        return with.clone();
    }
    match f {
        Formula::True
        | Formula::False
        | Formula::Unary { .. }
        | Formula::Binary { .. }
        | Formula::Eq { .. } => f.clone(),
        Formula::Not(a) => Formula::not_s(substitute(a, target, with)),
        Formula::And(a, b) => {
            Formula::and_s(substitute(a, target, with), substitute(b, target, with))
        }
        Formula::Or(a, b) => {
            Formula::or_s(substitute(a, target, with), substitute(b, target, with))
        }
        Formula::Implies(a, b) => {
            Formula::implies_s(substitute(a, target, with), substitute(b, target, with))
        }
        Formula::Forall { var, guard, body } => Formula::Forall {
            var: *var,
            guard: guard.clone(),
            body: Box::new(substitute(body, target, with)),
        },
        Formula::Exists { var, guard, body } => Formula::Exists {
            var: *var,
            guard: guard.clone(),
            body: Box::new(substitute(body, target, with)),
        },
        Formula::Count(c) => Formula::Count(CountExpr {
            terms: c
                .terms
                .iter()
                .map(|t| CountTerm {
                    coeff: t.coeff.clone(),
                    pred: t.pred.clone(),
                    incoming: t.incoming,
                    inner: Box::new(substitute(&t.inner, target, with)),
                })
                .collect(),
            rel: c.rel.clone(),
            rhs: c.rhs.clone(),
        }),
    }
}

/// Rewrite a validated sentence into normal form over an extended signature.
/// The output is equisatisfiable with the input and linear in its size for
/// sentences without nested sentence-level disjunctions.
pub fn normalize(s: &Sentence, sig: &Signature) -> Result<NormalForm> {
    let violations = validate_guarded(s);
    if !violations.is_empty() {
        return Err(Error::NotGuarded(violations));
    }
    let hoisted = hoist_closed(s)?;
    let mut b = Builder::new(sig);
    let mut stack = vec![hoisted];
    let mut plain = Vec::new();
    while let Some(c) = stack.pop() {
        if let Formula::And(l, r) = c {
            stack.push(*r);
            stack.push(*l);
            continue;
        }
        if !b.try_fast_conjunct(&c)? {
            plain.push(c);
        }
    }
    for c in plain {
        let tree = b.to_blocks(&c, true)?;
        b.encode(tree, &[])?;
    }
    b.finish()
}

/// The structural rewriting cases, exposed for direct inspection: convert a
/// counting constraint to basic form, or rename a one-free-variable
/// quantified subformula occurring positively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenameCase {
    /// A counting constraint with quantifier-free inner formulas.
    CountToBasic,
    /// ∀y (r → φ) with φ quantifier-free.
    UniversalBody,
    /// ∃y (r ∧ φ) with φ quantifier-free, routed through its universal dual.
    ExistentialBody,
}

#[derive(Debug)]
pub struct RenameOutcome {
    pub replacement: Formula,
    pub sig: Signature,
    pub gamma: Vec<Formula>,
    pub alphas: Vec<Alpha>,
    pub clauses: Vec<LpClause>,
}

pub fn rename_subformula(
    kind: RenameCase,
    node: &Formula,
    sig: &Signature,
) -> Result<RenameOutcome> {
    let shape_ok = match (kind, node) {
        (RenameCase::CountToBasic, Formula::Count(c)) => {
            c.terms.iter().all(|t| t.inner.is_quantifier_free())
        }
        (RenameCase::UniversalBody, Formula::Forall { guard: Some(_), body, .. }) => {
            body.is_quantifier_free()
        }
        (RenameCase::ExistentialBody, Formula::Exists { body, .. }) => body.is_quantifier_free(),
        _ => false,
    };
    if !shape_ok {
        return Err(Error::ShapeMismatch(format!("{kind:?} does not apply here")));
    }
    let mut b = Builder::new(sig);
    let replacement = b.transform(node, Pol::Pos)?;
    Ok(RenameOutcome {
        replacement,
        sig: b.sig,
        gamma: b.gamma,
        alphas: b.alphas,
        clauses: b.clauses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn sig_ur() -> Signature {
        Signature::new(vec!["U"], vec!["R"]).unwrap()
    }

    fn phi() -> (Sentence, Signature) {
        let sig = sig_ur();
        let s = parse(
            "(forall x . U(x)) & (forall x . (U(x) -> 1*#[R(x, y)]{true} = 2)) \
             & (forall x . (U(x) -> 1*#[R(y, x)]{true} <= 1)) ;",
            &sig,
        )
        .unwrap();
        (s, sig)
    }

    #[test]
    fn phi_normalizes_to_two_clauses_with_a_reverse_proxy() {
        let (s, sig) = phi();
        let nf = normalize(&s, &sig).unwrap();
        nf.recognize().unwrap();
        assert_eq!(nf.gamma, Formula::Unary { pred: "U".into(), var: Var::X });
        assert_eq!(nf.clauses.len(), 2);
        // Outgoing count stays on R itself; the incoming count goes through
        // one fresh proxy relation bridged by two pair constraints.
        assert_eq!(nf.clauses[0].lp.terms, vec![(BigInt::from(1), 0)]);
        assert_eq!(nf.clauses[0].lp.rel, Relation::Eq);
        assert_eq!(nf.clauses[0].lp.rhs, BigInt::from(2));
        assert_eq!(nf.clauses[1].lp.rel, Relation::Le);
        assert_eq!(nf.sig.m(), 2);
        assert_eq!(nf.alphas.len(), 2);
        assert_eq!(nf.clauses[1].lp.terms[0].1, 1);
        // Both triggers are U itself: no fresh unary predicates needed.
        assert_eq!(nf.sig.n(), 1);
    }

    #[test]
    fn normal_form_input_is_a_fixpoint_modulo_fresh_names() {
        let (s, sig) = phi();
        let nf = normalize(&s, &sig).unwrap();
        let text = nf.to_sentence_text();
        let reparsed = parse(&text, &nf.sig).unwrap();
        let nf2 = normalize(&reparsed, &nf.sig).unwrap();
        assert_eq!(nf2.gamma, nf.gamma);
        assert_eq!(nf2.alphas.len(), nf.alphas.len());
        assert_eq!(nf2.clauses.len(), nf.clauses.len());
        assert_eq!(nf2.sig.n(), nf.sig.n());
        assert_eq!(nf2.sig.m(), nf.sig.m());
    }

    #[test]
    fn case_trace_basic_form_conversion() {
        // 1·#[R(x,y)]{U(y)} ≥ 1 gains a fresh relation with two bridges.
        let sig = sig_ur();
        let s = parse("forall x . 1*#[R(x, y)]{U(y)} >= 1 ;", &sig).unwrap();
        let node = match &s {
            Formula::Forall { body, .. } => (**body).clone(),
            _ => unreachable!(),
        };
        let out = rename_subformula(RenameCase::CountToBasic, &node, &sig).unwrap();
        assert_eq!(out.sig.m(), 2);
        let fresh = out.sig.binary_name(1).to_string();
        assert!(fresh.starts_with("R#"));
        assert_eq!(out.clauses.len(), 1);
        assert_eq!(out.clauses[0].lp.terms, vec![(BigInt::from(1), 1)]);
        // Bridge 1: (R#1(x,y) ∧ x≠y) → (R(x,y) ∧ U(y)).
        assert_eq!(out.alphas[0].guard, 1);
        assert_eq!(
            out.alphas[0].beta,
            Formula::and(
                Formula::Binary { pred: "R".into(), left: Var::X, right: Var::Y },
                Formula::Unary { pred: "U".into(), var: Var::Y },
            )
        );
        // Bridge 2: (R(x,y) ∧ x≠y) → (U(y) → R#1(x,y)).
        assert_eq!(out.alphas[1].guard, 0);
        assert_eq!(
            out.alphas[1].beta,
            Formula::implies(
                Formula::Unary { pred: "U".into(), var: Var::Y },
                Formula::Binary { pred: fresh, left: Var::X, right: Var::Y },
            )
        );
    }

    #[test]
    fn case_trace_universal_with_trivial_body() {
        let sig = sig_ur();
        let node = Formula::Forall {
            var: Var::Y,
            guard: Some(GuardAtom { pred: "R".into(), first: Var::X, second: Some(Var::Y) }),
            body: Box::new(Formula::True),
        };
        let out = rename_subformula(RenameCase::UniversalBody, &node, &sig).unwrap();
        // Trivially true obligations: a fresh trigger and no constraints.
        assert!(out.gamma.is_empty());
        assert!(out.alphas.is_empty());
        assert!(out.clauses.is_empty());
        assert!(matches!(out.replacement, Formula::Unary { .. }));
    }

    #[test]
    fn case_trace_existential_routes_through_the_universal_dual() {
        let sig = sig_ur();
        // ∃y (R(x,y) ∧ x≠y) rewrites as ¬∀y (R(x,y) → x=y).
        let node = Formula::Exists {
            var: Var::Y,
            guard: GuardAtom { pred: "R".into(), first: Var::X, second: Some(Var::Y) },
            body: Box::new(Formula::not(Formula::Eq { left: Var::X, right: Var::Y })),
        };
        let out = rename_subformula(RenameCase::ExistentialBody, &node, &sig).unwrap();
        match &out.replacement {
            Formula::Not(inner) => assert!(matches!(**inner, Formula::Unary { .. })),
            other => panic!("expected a negated fresh atom, got {other:?}"),
        }
        // The universal dual occurs negatively, so the witness-counting
        // encoding fires: one bridge constraint and one ≥1 obligation.
        assert_eq!(out.clauses.len(), 1);
        assert_eq!(out.clauses[0].lp.rel, Relation::Ge);
        assert!(!out.alphas.is_empty());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let sig = sig_ur();
        let node = Formula::True;
        assert!(matches!(
            rename_subformula(RenameCase::CountToBasic, &node, &sig),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn blowup_is_linear_on_guarded_sentences() {
        let sig = Signature::new(vec!["U", "V"], vec!["R", "S"]).unwrap();
        let texts = [
            "forall x . (U(x) -> exists y : R(x, y) . V(y)) ;",
            "forall x . forall y : R(x, y) . (V(y) | (x != y & U(x))) ;",
            "forall x . (2*#[R(x, y)]{V(y)} - 1*#[S(y, x)]{U(y)} <= 3) ;",
            "(forall x . U(x)) & (exists x : U(x) . 1*#[R(x, y)]{true} =mod 2 1) ;",
        ];
        for t in texts {
            let s = parse(t, &sig).unwrap();
            let input_size = crate::nf::node_count(&s);
            let nf = normalize(&s, &sig).unwrap();
            assert!(
                nf.size() <= 10 * input_size,
                "blowup {} -> {} on {t}",
                input_size,
                nf.size()
            );
        }
    }
}
