use num_bigint::BigInt;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::formula::{pretty, Formula, Relation, Var};
use crate::sig::Signature;

/// A counting constraint in basic form: a weighted sum of outgoing-edge
/// counts per binary predicate, compared against a constant. The inner
/// formula of every term is implicitly `x != y` and is not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicLpq {
    /// (coefficient, binary predicate index); direction is always outgoing.
    pub terms: Vec<(BigInt, usize)>,
    pub rel: Relation,
    pub rhs: BigInt,
}

impl BasicLpq {
    /// Whether the all-zero count satisfies the constraint, i.e. `0 ⊛ δ`.
    /// A direct comparison, never a solver call. For congruences, `0 ≡_d δ`
    /// holds exactly when d divides δ.
    pub fn zero_holds(&self) -> bool {
        self.rel.holds(&BigInt::zero(), &self.rhs)
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        if self.terms.is_empty() {
            out.push('0');
        }
        for (i, (coeff, _)) in self.terms.iter().enumerate() {
            if i == 0 {
                out.push_str(&coeff.to_string());
            } else if coeff.sign() == num_bigint::Sign::Minus {
                out.push_str(&format!(" - {}", -coeff));
            } else {
                out.push_str(&format!(" + {coeff}"));
            }
            out.push_str("*#[?]");
        }
        out.push_str(&format!(" {} {}", self.rel.token(), self.rhs));
        out
    }
}

/// One universally quantified pair constraint: `(R(x,y) ∧ x≠y) → β(x,y)`
/// with β quantifier-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alpha {
    /// Index of the guarding binary predicate.
    pub guard: usize,
    pub beta: Formula,
}

/// One counting obligation: `q(x) → P(x)` with q a unary predicate and P in
/// basic form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpClause {
    /// Index of the triggering unary predicate.
    pub trigger: usize,
    pub lp: BasicLpq,
}

/// A fresh predicate introduced during rewriting, together with a defining
/// formula over previously known predicates. Definitions are ordered: each
/// may reference earlier fresh names, so a model of the original sentence
/// extends to the rewritten signature by evaluating them in sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub name: String,
    pub arity: usize,
    /// Unary definitions use x; binary definitions use (x, y) off the
    /// diagonal; arity 0 marks a globally-constant case marker defined by a
    /// closed formula.
    pub def: Formula,
}

/// The rewritten sentence: one universal unary constraint γ, a family of
/// guarded pair constraints α_i, and counting obligations q_i → P_i, all over
/// a signature extended with fresh predicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalForm {
    pub sig: Signature,
    pub orig_sig: Signature,
    pub gamma: Formula,
    pub alphas: Vec<Alpha>,
    pub clauses: Vec<LpClause>,
    pub extensions: Vec<Extension>,
}

impl NormalForm {
    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn l(&self) -> usize {
        self.clauses.len()
    }

    /// Structural size: AST nodes of γ and every β, plus one node per basic
    /// term and per clause. Used by the blowup measurements.
    pub fn size(&self) -> usize {
        let mut s = node_count(&self.gamma);
        for a in &self.alphas {
            s += 1 + node_count(&a.beta);
        }
        for c in &self.clauses {
            s += 2 + c.lp.terms.len();
        }
        s.max(1)
    }

    /// Syntactic shape check: γ quantifier-free over x only, every β
    /// quantifier-free over {x, y}, every clause triggered by a unary
    /// predicate with a basic-form constraint over known binary predicates.
    pub fn recognize(&self) -> Result<()> {
        if !self.gamma.is_quantifier_free() {
            return Err(Error::Internal("gamma is not quantifier-free".into()));
        }
        if self.gamma.free_vars().contains(&Var::Y) {
            return Err(Error::Internal("gamma mentions y".into()));
        }
        check_preds_resolve(&self.gamma, &self.sig)?;
        for a in &self.alphas {
            if a.guard >= self.sig.m() {
                return Err(Error::Internal("alpha guard out of range".into()));
            }
            if !a.beta.is_quantifier_free() {
                return Err(Error::Internal("alpha body is not quantifier-free".into()));
            }
            check_preds_resolve(&a.beta, &self.sig)?;
        }
        for c in &self.clauses {
            if c.trigger >= self.sig.n() {
                return Err(Error::Internal("clause trigger out of range".into()));
            }
            for (_, r) in &c.lp.terms {
                if *r >= self.sig.m() {
                    return Err(Error::Internal("basic term predicate out of range".into()));
                }
            }
            if let Relation::EqMod(d) | Relation::NeMod(d) = &c.lp.rel {
                if d.is_zero() {
                    return Err(Error::ZeroModulus);
                }
            }
        }
        Ok(())
    }

    /// Render back into the input grammar. The result reparses and validates.
    pub fn to_sentence_text(&self) -> String {
        let mut parts = Vec::new();
        parts.push(format!("(forall x . ({}))", pretty(&self.gamma)));
        for a in &self.alphas {
            parts.push(format!(
                "(forall x . forall y : {}(x, y) . (x != y -> ({})))",
                self.sig.binary_name(a.guard),
                pretty(&a.beta)
            ));
        }
        for c in &self.clauses {
            parts.push(format!(
                "(forall x . ({}(x) -> {}))",
                self.sig.unary_name(c.trigger),
                self.clause_lp_text(&c.lp)
            ));
        }
        format!("{} ;", parts.join(" & "))
    }

    fn clause_lp_text(&self, lp: &BasicLpq) -> String {
        if lp.terms.is_empty() {
            // An empty sum is not writable in the grammar; a zero-weighted
            // count of the first binary predicate (or a vacuous truth when
            // the signature has none) denotes it.
            if self.sig.m() == 0 {
                return "true".into();
            }
            return format!(
                "0*#[{}(x, y)]{{x != y}} {} {}",
                self.sig.binary_name(0),
                lp.rel.token(),
                lp.rhs
            );
        }
        let mut out = String::new();
        for (i, (coeff, r)) in lp.terms.iter().enumerate() {
            if i == 0 {
                out.push_str(&coeff.to_string());
            } else if coeff.sign() == num_bigint::Sign::Minus {
                out.push_str(&format!(" - {}", -coeff));
            } else {
                out.push_str(&format!(" + {coeff}"));
            }
            out.push_str(&format!("*#[{}(x, y)]{{x != y}}", self.sig.binary_name(*r)));
        }
        out.push_str(&format!(" {} {}", lp.rel.token(), lp.rhs));
        out
    }

    /// The `--normalize-only` extension table, one mapping per line.
    pub fn extension_table(&self) -> String {
        let mut out = String::new();
        for e in &self.extensions {
            let args = match e.arity {
                0 => "",
                1 => "(x)",
                _ => "(x, y)",
            };
            out.push_str(&format!("{}{} := {}\n", e.name, args, pretty(&e.def)));
        }
        out
    }
}

pub fn node_count(f: &Formula) -> usize {
    match f {
        Formula::True | Formula::False | Formula::Unary { .. } | Formula::Binary { .. } | Formula::Eq { .. } => 1,
        Formula::Not(a) => 1 + node_count(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            1 + node_count(a) + node_count(b)
        }
        Formula::Forall { body, .. } | Formula::Exists { body, .. } => 1 + node_count(body),
        Formula::Count(c) => {
            1 + c.terms.iter().map(|t| 1 + node_count(&t.inner)).sum::<usize>()
        }
    }
}

fn check_preds_resolve(f: &Formula, sig: &Signature) -> Result<()> {
    match f {
        Formula::Unary { pred, .. } => {
            if sig.unary_index(pred).is_none() {
                return Err(Error::Internal(format!("unresolved unary predicate `{pred}`")));
            }
            Ok(())
        }
        Formula::Binary { pred, .. } => {
            if sig.binary_index(pred).is_none() {
                return Err(Error::Internal(format!("unresolved binary predicate `{pred}`")));
            }
            Ok(())
        }
        Formula::True | Formula::False | Formula::Eq { .. } => Ok(()),
        Formula::Not(a) => check_preds_resolve(a, sig),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            check_preds_resolve(a, sig)?;
            check_preds_resolve(b, sig)
        }
        _ => Err(Error::Internal("quantifier in a quantifier-free position".into())),
    }
}
