use thiserror::Error;

/// A guardedness or well-formedness violation. Violations are data, not
/// errors: validation returns the full list so a caller can report them all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Pretty-printed offending subformula.
    pub at: String,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (in `{}`)", self.reason, self.at)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("sentence is not guarded: {}", format_violations(.0))]
    NotGuarded(Vec<Violation>),

    #[error("type space too large: {atoms} atoms exceeds the cap of {cap} (raise --type-cap to override)")]
    TypeCapExceeded { atoms: usize, cap: usize },

    #[error("modulus {d} exceeds the cap of {cap} (raise --mod-cap to override)")]
    ModulusCapExceeded { d: String, cap: u64 },

    #[error("congruence with modulus 0")]
    ZeroModulus,

    #[error("feasibility search exceeded the node budget of {budget}")]
    NodeBudgetExceeded { budget: u64 },

    #[error("model search space of {leaves} assignments exceeds the cap of {cap}")]
    SearchCapExceeded { leaves: String, cap: String },

    #[error("prefix expansion needs more than {cap} elements (raise --prefix-cap)")]
    PrefixCapExceeded { cap: usize },

    #[error("external solver failure: {0}")]
    SolverFailure(String),

    #[error("edge not present in graph")]
    AbsentEdge,

    #[error("vertex not present in graph")]
    AbsentVertex,

    #[error("subformula does not match the expected rewriting shape: {0}")]
    ShapeMismatch(String),

    #[error("witness construction on an empty graph")]
    EmptyWitness,

    #[error("internal invariant broken: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
