use std::collections::BTreeSet;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::Zero;

/// The two object variables. No other variable ever appears.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
}

impl Var {
    pub fn other(self) -> Var {
        match self {
            Var::X => Var::Y,
            Var::Y => Var::X,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X => write!(f, "x"),
            Var::Y => write!(f, "y"),
        }
    }
}

/// An atomic predicate usable as a quantifier guard: `U(v)` or `R(v, w)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GuardAtom {
    pub pred: String,
    pub first: Var,
    pub second: Option<Var>,
}

impl GuardAtom {
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        s.insert(self.first);
        if let Some(v) = self.second {
            s.insert(v);
        }
        s
    }

    pub fn to_formula(&self) -> Formula {
        match self.second {
            None => Formula::Unary { pred: self.pred.clone(), var: self.first },
            Some(w) => Formula::Binary { pred: self.pred.clone(), left: self.first, right: w },
        }
    }
}

impl fmt::Display for GuardAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.second {
            None => write!(f, "{}({})", self.pred, self.first),
            Some(w) => write!(f, "{}({}, {})", self.pred, self.first, w),
        }
    }
}

/// Comparison relation of a counting constraint. Closed under negation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
    /// Congruent modulo d (d >= 1).
    EqMod(BigUint),
    /// Not congruent modulo d (d >= 1).
    NeMod(BigUint),
}

impl Relation {
    pub fn negate(&self) -> Relation {
        match self {
            Relation::Eq => Relation::Ne,
            Relation::Ne => Relation::Eq,
            Relation::Le => Relation::Gt,
            Relation::Gt => Relation::Le,
            Relation::Ge => Relation::Lt,
            Relation::Lt => Relation::Ge,
            Relation::EqMod(d) => Relation::NeMod(d.clone()),
            Relation::NeMod(d) => Relation::EqMod(d.clone()),
        }
    }

    /// Whether `lhs ⊛ rhs` holds over the integers.
    pub fn holds(&self, lhs: &BigInt, rhs: &BigInt) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Ne => lhs != rhs,
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Lt => lhs < rhs,
            Relation::Gt => lhs > rhs,
            Relation::EqMod(d) => (lhs - rhs).mod_floor(&BigInt::from(d.clone())).is_zero(),
            Relation::NeMod(d) => !(lhs - rhs).mod_floor(&BigInt::from(d.clone())).is_zero(),
        }
    }

    pub fn token(&self) -> String {
        match self {
            Relation::Eq => "=".into(),
            Relation::Ne => "!=".into(),
            Relation::Le => "<=".into(),
            Relation::Ge => ">=".into(),
            Relation::Lt => "<".into(),
            Relation::Gt => ">".into(),
            Relation::EqMod(d) => format!("=mod {d}"),
            Relation::NeMod(d) => format!("!=mod {d}"),
        }
    }
}

/// One summand of a counting constraint: `coeff * #[R(x,y)]{inner}` where the
/// direction atom is `R(x,y)` (outgoing, `incoming = false`) or `R(y,x)`
/// (incoming, `incoming = true`). The count ranges over elements `y`
/// distinct from the anchor `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountTerm {
    pub coeff: BigInt,
    pub pred: String,
    pub incoming: bool,
    pub inner: Box<Formula>,
}

impl CountTerm {
    pub fn direction_text(&self) -> String {
        if self.incoming {
            format!("{}(y, x)", self.pred)
        } else {
            format!("{}(x, y)", self.pred)
        }
    }
}

/// A local counting constraint anchored at `x`, summing weighted counts of
/// labelled edges to distinct neighbours `y` and comparing against a constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountExpr {
    pub terms: Vec<CountTerm>,
    pub rel: Relation,
    pub rhs: BigInt,
}

/// Two-variable formulas. Quantifiers carry an optional atomic-predicate
/// guard; only a sentence-level universal may omit it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Unary { pred: String, var: Var },
    Binary { pred: String, left: Var, right: Var },
    Eq { left: Var, right: Var },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall { var: Var, guard: Option<GuardAtom>, body: Box<Formula> },
    Exists { var: Var, guard: GuardAtom, body: Box<Formula> },
    Count(CountExpr),
}

/// A sentence is a closed formula; `parse` guarantees closedness.
pub type Sentence = Formula;

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// Simplifying connective constructors; used by the rewriting passes to
    /// keep emitted conjuncts free of constant clutter.
    pub fn and_s(a: Formula, b: Formula) -> Formula {
        match (a, b) {
            (Formula::True, g) | (g, Formula::True) => g,
            (Formula::False, _) | (_, Formula::False) => Formula::False,
            (a, b) => Formula::and(a, b),
        }
    }

    pub fn or_s(a: Formula, b: Formula) -> Formula {
        match (a, b) {
            (Formula::False, g) | (g, Formula::False) => g,
            (Formula::True, _) | (_, Formula::True) => Formula::True,
            (a, b) => Formula::or(a, b),
        }
    }

    pub fn implies_s(a: Formula, b: Formula) -> Formula {
        match (a, b) {
            (Formula::True, g) => g,
            (Formula::False, _) => Formula::True,
            (_, Formula::True) => Formula::True,
            (a, Formula::False) => Formula::not_s(a),
            (a, b) => Formula::implies(a, b),
        }
    }

    pub fn not_s(a: Formula) -> Formula {
        match a {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            a => Formula::not(a),
        }
    }

    /// Free variables of the formula. A counting constraint is always
    /// anchored at `x`: its counted variable `y` is bound by the count.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        match self {
            Formula::True | Formula::False => BTreeSet::new(),
            Formula::Unary { var, .. } => [*var].into_iter().collect(),
            Formula::Binary { left, right, .. } => [*left, *right].into_iter().collect(),
            Formula::Eq { left, right } => [*left, *right].into_iter().collect(),
            Formula::Not(f) => f.free_vars(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                let mut s = a.free_vars();
                s.extend(b.free_vars());
                s
            }
            Formula::Forall { var, guard, body } => {
                let mut s = body.free_vars();
                if let Some(g) = guard {
                    s.extend(g.vars());
                }
                s.remove(var);
                s
            }
            Formula::Exists { var, guard, body } => {
                let mut s = body.free_vars();
                s.extend(g_vars(guard));
                s.remove(var);
                s
            }
            Formula::Count(_) => [Var::X].into_iter().collect(),
        }
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Unary { .. } | Formula::Binary { .. } | Formula::Eq { .. } => true,
            Formula::Not(f) => f.is_quantifier_free(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.is_quantifier_free() && b.is_quantifier_free()
            }
            Formula::Forall { .. } | Formula::Exists { .. } | Formula::Count(_) => false,
        }
    }

    /// Swap the roles of x and y everywhere, including under binders and in
    /// counting terms. Purely syntactic; an involution.
    pub fn swap_vars(&self) -> Formula {
        fn sv(v: Var) -> Var {
            v.other()
        }
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Unary { pred, var } => Formula::Unary { pred: pred.clone(), var: sv(*var) },
            Formula::Binary { pred, left, right } => {
                Formula::Binary { pred: pred.clone(), left: sv(*left), right: sv(*right) }
            }
            Formula::Eq { left, right } => Formula::Eq { left: sv(*left), right: sv(*right) },
            Formula::Not(f) => Formula::not(f.swap_vars()),
            Formula::And(a, b) => Formula::and(a.swap_vars(), b.swap_vars()),
            Formula::Or(a, b) => Formula::or(a.swap_vars(), b.swap_vars()),
            Formula::Implies(a, b) => Formula::implies(a.swap_vars(), b.swap_vars()),
            Formula::Forall { var, guard, body } => Formula::Forall {
                var: sv(*var),
                guard: guard.as_ref().map(swap_guard),
                body: Box::new(body.swap_vars()),
            },
            Formula::Exists { var, guard, body } => Formula::Exists {
                var: sv(*var),
                guard: swap_guard(guard),
                body: Box::new(body.swap_vars()),
            },
            // A counting constraint is anchored at x by construction; the
            // rewriting passes only ever swap quantifier-free material, so a
            // swap reaching one is a pipeline bug.
            Formula::Count(_) => panic!("variable swap on a counting constraint"),
        }
    }

    /// Substitute `y := x` in a quantifier-free formula, turning binary atoms
    /// into self-loop atoms. Used for the diagonal parts of the rewriting.
    pub fn substitute_y_with_x(&self) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Unary { pred, var: _ } => Formula::Unary { pred: pred.clone(), var: Var::X },
            Formula::Binary { pred, .. } => {
                Formula::Binary { pred: pred.clone(), left: Var::X, right: Var::X }
            }
            Formula::Eq { .. } => Formula::True,
            Formula::Not(f) => Formula::not_s(f.substitute_y_with_x()),
            Formula::And(a, b) => Formula::and_s(a.substitute_y_with_x(), b.substitute_y_with_x()),
            Formula::Or(a, b) => Formula::or_s(a.substitute_y_with_x(), b.substitute_y_with_x()),
            Formula::Implies(a, b) => {
                Formula::implies_s(a.substitute_y_with_x(), b.substitute_y_with_x())
            }
            _ => panic!("substitute_y_with_x on a quantified formula"),
        }
    }
}

fn g_vars(g: &GuardAtom) -> BTreeSet<Var> {
    g.vars()
}

fn swap_guard(g: &GuardAtom) -> GuardAtom {
    GuardAtom {
        pred: g.pred.clone(),
        first: g.first.other(),
        second: g.second.map(Var::other),
    }
}

/// Canonical text rendering. `parse(pretty(f))` reproduces `f` structurally:
/// every connective is parenthesized and `!(v = w)` prints as `v != w`.
pub fn pretty(f: &Formula) -> String {
    let mut out = String::new();
    render(f, &mut out);
    out
}

fn render(f: &Formula, out: &mut String) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Unary { pred, var } => {
            out.push_str(&format!("{pred}({var})"));
        }
        Formula::Binary { pred, left, right } => {
            out.push_str(&format!("{pred}({left}, {right})"));
        }
        Formula::Eq { left, right } => {
            out.push_str(&format!("{left} = {right}"));
        }
        Formula::Not(inner) => {
            if let Formula::Eq { left, right } = inner.as_ref() {
                out.push_str(&format!("{left} != {right}"));
            } else {
                out.push('!');
                out.push('(');
                render(inner, out);
                out.push(')');
            }
        }
        Formula::And(a, b) => {
            out.push('(');
            render(a, out);
            out.push_str(" & ");
            render(b, out);
            out.push(')');
        }
        Formula::Or(a, b) => {
            out.push('(');
            render(a, out);
            out.push_str(" | ");
            render(b, out);
            out.push(')');
        }
        Formula::Implies(a, b) => {
            out.push('(');
            render(a, out);
            out.push_str(" -> ");
            render(b, out);
            out.push(')');
        }
        // Quantifiers wrap themselves in parentheses: their body extends
        // maximally to the right, so an unparenthesized quantifier inside a
        // connective would capture the rest of the line on reparse.
        Formula::Forall { var, guard, body } => {
            out.push('(');
            match guard {
                None => out.push_str(&format!("forall {var} . ")),
                Some(g) => out.push_str(&format!("forall {var} : {g} . ")),
            }
            out.push('(');
            render(body, out);
            out.push(')');
            out.push(')');
        }
        Formula::Exists { var, guard, body } => {
            out.push('(');
            out.push_str(&format!("exists {var} : {guard} . "));
            out.push('(');
            render(body, out);
            out.push(')');
            out.push(')');
        }
        Formula::Count(c) => {
            for (i, t) in c.terms.iter().enumerate() {
                if i == 0 {
                    out.push_str(&t.coeff.to_string());
                } else if t.coeff.sign() == num_bigint::Sign::Minus {
                    out.push_str(&format!(" - {}", -&t.coeff));
                } else {
                    out.push_str(&format!(" + {}", t.coeff));
                }
                out.push_str(&format!("*#[{}]{{", t.direction_text()));
                render(&t.inner, out);
                out.push('}');
            }
            out.push_str(&format!(" {} {}", c.rel.token(), c.rhs));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_is_an_involution() {
        let f = Formula::implies(
            Formula::Binary { pred: "R".into(), left: Var::X, right: Var::Y },
            Formula::Unary { pred: "U".into(), var: Var::Y },
        );
        assert_eq!(f.swap_vars().swap_vars(), f);
    }

    #[test]
    fn diagonal_substitution_folds_equalities() {
        let f = Formula::implies(
            Formula::Eq { left: Var::X, right: Var::Y },
            Formula::Binary { pred: "R".into(), left: Var::Y, right: Var::X },
        );
        assert_eq!(
            f.substitute_y_with_x(),
            Formula::Binary { pred: "R".into(), left: Var::X, right: Var::X }
        );
    }

    #[test]
    fn relation_negation_is_an_involution_and_complements() {
        use Relation::*;
        let rels = [
            Eq,
            Ne,
            Le,
            Ge,
            Lt,
            Gt,
            EqMod(3u32.into()),
            NeMod(3u32.into()),
        ];
        for r in &rels {
            assert_eq!(&r.negate().negate(), r);
            for lhs in -4i32..=4 {
                for rhs in -4i32..=4 {
                    let l = BigInt::from(lhs);
                    let h = BigInt::from(rhs);
                    assert_ne!(r.holds(&l, &h), r.negate().holds(&l, &h));
                }
            }
        }
    }

    #[test]
    fn congruence_uses_floored_remainders() {
        let r = Relation::EqMod(3u32.into());
        assert!(r.holds(&BigInt::from(-1), &BigInt::from(2)));
        assert!(!r.holds(&BigInt::from(-1), &BigInt::from(1)));
    }
}
