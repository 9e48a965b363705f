//! Sentence-level boolean structure: disjunctions of universal blocks,
//! negated blocks, existential blocks, and closed subformulas nested under
//! binders. Each verdict is cross-validated against the finite-structure
//! oracle where a finite model is in range, and every satisfiable case must
//! produce a verified witness and checkable prefix.

use gpsat::eliminate::{decide, PipelineOpts};
use gpsat::oracle::{expand_structure, find_model_sentence, model_check};
use gpsat::parse::{infer_signature, parse};
use gpsat::witness::{check_prefix, expand_prefix, verify_witness};

fn run(text: &str) -> (bool, gpsat::eliminate::DecideOutcome, gpsat::Signature) {
    let sig = infer_signature(text).unwrap();
    let s = parse(text, &sig).unwrap();
    let out = decide(&s, &sig, &PipelineOpts::default()).unwrap();
    (out.sat, out, sig)
}

/// Decide, check witness machinery on sat, and cross-check against bounded
/// model search on the original sentence.
fn verify(text: &str, expect_sat: bool) {
    let (sat, out, sig) = run(text);
    assert_eq!(sat, expect_sat, "verdict mismatch on: {text}");
    if sat {
        let w = out.witness.as_ref().unwrap();
        let violations = verify_witness(w, &out.nf);
        assert!(violations.is_empty(), "witness violations on {text}: {violations:?}");
        let p = expand_prefix(w, 10, 7, 100_000, 3).unwrap();
        let report = check_prefix(&p, &out.nf);
        assert!(report.ok, "prefix violations on {text}: {:?}", report.violations);
    }
    // Oracle bridge on the original sentence: a finite model implies sat and
    // extends to the rewritten signature; unsat implies no finite model.
    let s = parse(text, &sig).unwrap();
    match find_model_sentence(&s, &sig, 3, 28) {
        Ok(Some(model)) => {
            assert!(sat, "finite model exists but verdict is unsat on: {text}");
            let big = expand_structure(&model, &out.nf);
            assert!(
                model_check(&out.nf, &big),
                "model of the original does not extend on: {text}"
            );
        }
        Ok(None) => {
            // No finite model up to 3; nothing to conclude.
        }
        Err(e) => panic!("oracle search failed on {text}: {e}"),
    }
}

#[test]
fn disjunction_of_universal_blocks() {
    verify("(forall x . U(x)) | (forall x . !(U(x))) ;", true);
}

#[test]
fn disjunction_with_both_branches_contradicted() {
    // Either everything is U or nothing is; witnesses for a non-U element
    // and a U element kill both branches.
    verify(
        "((forall x . U(x)) | (forall x . !(U(x)))) \
         & (exists x : U(x) . true) \
         & (exists x : V(x) . !(U(x))) ;",
        false,
    );
}

#[test]
fn disjunction_with_one_live_branch() {
    verify(
        "((forall x . U(x)) | (forall x . !(U(x)))) \
         & (exists x : U(x) . true) ;",
        true,
    );
}

#[test]
fn negated_universal_block_is_an_existential_demand() {
    verify("!(forall x . U(x)) ;", true);
    verify("!(forall x . U(x)) & (forall x . U(x)) ;", false);
}

#[test]
fn existential_block_against_a_universal_ban() {
    verify("(exists x : U(x) . true) & (forall x . !(U(x))) ;", false);
    verify("(exists x : U(x) . true) ;", true);
}

#[test]
fn implication_between_blocks() {
    // (∀x U) → (∃x V): satisfiable by failing the antecedent.
    verify("(forall x . U(x)) -> (exists x : V(x) . true) ;", true);
    // Forcing the antecedent while banning V is unsatisfiable.
    verify(
        "((forall x . U(x)) -> (exists x : V(x) . true)) \
         & (forall x . U(x)) & (forall x . !(V(x))) ;",
        false,
    );
}

#[test]
fn closed_subformula_under_a_binder_is_hoisted() {
    // ∀x (U(x) ∨ σ) with σ = ∀y (V(y) → W(y)): breaking σ with a V-but-not-W
    // witness forces everything into U, so a non-U V-element contradicts.
    verify(
        "(forall x . (U(x) | (forall y : V(y) . W(y)))) \
         & (exists x : V(x) . !(W(x))) \
         & (exists x : V(x) . !(U(x))) ;",
        false,
    );
    // Without the σ-breaking witness the sentence is satisfiable.
    verify("(forall x . (U(x) | (forall y : V(y) . W(y)))) ;", true);
}

#[test]
fn counting_under_a_disjunction_branch() {
    // One branch demands two outgoing R-edges per element, the other forbids
    // any; both are satisfiable on their own.
    verify(
        "((forall x . 1*#[R(x, y)]{true} = 2) | (forall x . 1*#[R(x, y)]{true} = 0)) ;",
        true,
    );
    // Adding an element with exactly one outgoing edge kills both branches:
    // marker agreement keeps the classes apart, so no mixed model sneaks in.
    verify(
        "((forall x . 1*#[R(x, y)]{true} = 2) | (forall x . 1*#[R(x, y)]{true} = 0)) \
         & (exists x : U(x) . 1*#[R(x, y)]{true} = 1) ;",
        false,
    );
}

#[test]
fn negated_counting_block() {
    // ¬∀x(#R = 0): some element has an outgoing R-edge.
    verify("!(forall x . 1*#[R(x, y)]{true} = 0) ;", true);
    verify(
        "!(forall x . 1*#[R(x, y)]{true} = 0) & (forall x . forall y : R(x, y) . false) ;",
        false,
    );
}
