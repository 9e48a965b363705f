//! Satisfiability of two-variable guarded sentences with local counting
//! constraints, decided by type elimination.
//!
//! The pipeline: parse a sentence, rewrite it into a normal form of unary,
//! guarded-pair, and counting obligations over an extended signature, build
//! the graph of compatible types and configurations, repeatedly delete edges
//! whose neighbourhood count systems are infeasible over ℕ (or ℕ∪{∞}) and
//! vertices with violated zero obligations, and accept exactly when the
//! fixpoint is non-empty. Acceptance comes with a checkable witness: the
//! surviving subgraph plus one solution per edge, from which finite prefixes
//! of an infinite model can be unfolded and verified.

pub mod cli;
pub mod constraints;
pub mod eliminate;
pub mod error;
pub mod formula;
pub mod graph;
pub mod nf;
pub mod normalize;
pub mod oracle;
pub mod parse;
pub mod sig;
pub mod solver;
pub mod types;
pub mod validate;
pub mod witness;

pub use crate::eliminate::{decide, decide_normal, DecideOutcome, PipelineOpts, Strategy};
pub use crate::error::{Error, Result, Violation};
pub use crate::formula::{pretty, Formula, Relation, Sentence, Var};
pub use crate::nf::NormalForm;
pub use crate::normalize::normalize;
pub use crate::parse::{infer_signature, parse};
pub use crate::sig::Signature;
pub use crate::solver::{Backend, Count, Semantics};
pub use crate::validate::validate_guarded;
