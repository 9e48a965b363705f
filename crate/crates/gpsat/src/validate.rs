use crate::error::Violation;
use crate::formula::{pretty, Formula, Sentence};

/// Check the guard discipline: every quantifier below the sentence level
/// carries an atomic-predicate guard whose variables cover the bound variable
/// and the free variables of the body, and counting constraints contain only
/// well-guarded inner formulas. An unguarded universal is permitted only at
/// the sentence level, i.e. reachable from the root through boolean
/// connectives alone.
pub fn validate_guarded(s: &Sentence) -> Vec<Violation> {
    let mut out = Vec::new();
    walk(s, true, &mut out);
    out
}

fn walk(f: &Formula, sentence_level: bool, out: &mut Vec<Violation>) {
    match f {
        Formula::True
        | Formula::False
        | Formula::Unary { .. }
        | Formula::Binary { .. }
        | Formula::Eq { .. } => {}
        Formula::Not(inner) => walk(inner, sentence_level, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            walk(a, sentence_level, out);
            walk(b, sentence_level, out);
        }
        Formula::Forall { var, guard, body } => {
            match guard {
                None => {
                    if !sentence_level {
                        out.push(Violation {
                            at: pretty(f),
                            reason: "unguarded universal below the sentence level".into(),
                        });
                    }
                }
                Some(g) => {
                    let mut needed = body.free_vars();
                    needed.insert(*var);
                    if !needed.is_subset(&g.vars()) {
                        out.push(Violation {
                            at: pretty(f),
                            reason: format!(
                                "guard {g} does not cover the bound and free variables"
                            ),
                        });
                    }
                }
            }
            walk(body, false, out);
        }
        Formula::Exists { var, guard, body } => {
            let mut needed = body.free_vars();
            needed.insert(*var);
            if !needed.is_subset(&guard.vars()) {
                out.push(Violation {
                    at: pretty(f),
                    reason: format!("guard {guard} does not cover the bound and free variables"),
                });
            }
            walk(body, false, out);
        }
        Formula::Count(c) => {
            for t in &c.terms {
                walk(&t.inner, false, out);
            }
        }
    }
}
