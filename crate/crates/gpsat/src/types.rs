use crate::error::{Error, Result};
use crate::formula::{Formula, Var};
use crate::nf::NormalForm;
use crate::sig::Signature;

/// A complete truth assignment to all atoms at a single element: each unary
/// predicate, and each self-loop `R(x,x)` viewed as a unary atom. Bit `i`
/// (i < n) is the i-th unary predicate; bit `n + j` is the self-loop of the
/// j-th binary predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnaryType(pub u64);

/// A complete truth assignment to all directed atoms between two distinct
/// elements: bit `2j` is `R_j(x,y)`, bit `2j+1` is `R_j(y,x)`. The atom
/// `x != y` is implicit. The all-negative assignment is the null type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryType(pub u64);

/// An ordered pair of distinct elements by type: source, edge label, target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub src: UnaryType,
    pub eta: BinaryType,
    pub dst: UnaryType,
}

impl UnaryType {
    pub fn has_unary(self, idx: usize) -> bool {
        self.0 >> idx & 1 == 1
    }

    pub fn has_self_loop(self, sig: &Signature, binary_idx: usize) -> bool {
        self.0 >> (sig.n() + binary_idx) & 1 == 1
    }

    pub fn atom_names(self, sig: &Signature) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..sig.n() {
            if self.has_unary(i) {
                out.push(sig.unary_name(i).to_string());
            }
        }
        for j in 0..sig.m() {
            if self.has_self_loop(sig, j) {
                out.push(format!("{}(x,x)", sig.binary_name(j)));
            }
        }
        out
    }
}

impl BinaryType {
    pub const NULL: BinaryType = BinaryType(0);

    pub fn is_null(self) -> bool {
        self.0 == 0
    }

    pub fn has_fwd(self, binary_idx: usize) -> bool {
        self.0 >> (2 * binary_idx) & 1 == 1
    }

    pub fn has_bwd(self, binary_idx: usize) -> bool {
        self.0 >> (2 * binary_idx + 1) & 1 == 1
    }

    /// The type obtained by swapping the two variables: forward and backward
    /// bits trade places for every predicate. An involution; O(1).
    pub fn reverse(self) -> BinaryType {
        const EVEN: u64 = 0x5555_5555_5555_5555;
        const ODD: u64 = 0xAAAA_AAAA_AAAA_AAAA;
        BinaryType(((self.0 & EVEN) << 1) | ((self.0 & ODD) >> 1))
    }

    pub fn atom_names(self, sig: &Signature) -> Vec<String> {
        let mut out = Vec::new();
        for j in 0..sig.m() {
            if self.has_fwd(j) {
                out.push(format!("{}(x,y)", sig.binary_name(j)));
            }
            if self.has_bwd(j) {
                out.push(format!("{}(y,x)", sig.binary_name(j)));
            }
        }
        out
    }
}

impl Configuration {
    pub fn reverse(self) -> Configuration {
        Configuration { src: self.dst, eta: self.eta.reverse(), dst: self.src }
    }
}

/// All unary types over the signature: 2^(n+m) total assignments. Refuses
/// signatures beyond the cap so an oversized space fails loudly.
pub fn all_unary_types(sig: &Signature, cap: usize) -> Result<Vec<UnaryType>> {
    let atoms = sig.n() + sig.m();
    if atoms > cap {
        return Err(Error::TypeCapExceeded { atoms, cap });
    }
    Ok((0..1u64 << atoms).map(UnaryType).collect())
}

/// All binary types, null included: 2^(2m) assignments.
pub fn all_binary_types(sig: &Signature, cap: usize) -> Result<Vec<BinaryType>> {
    let atoms = 2 * sig.m();
    if atoms > 2 * cap {
        return Err(Error::TypeCapExceeded { atoms, cap: 2 * cap });
    }
    Ok((0..1u64 << atoms).map(BinaryType).collect())
}

/// All non-null binary types.
pub fn all_nonnull_binary_types(sig: &Signature, cap: usize) -> Result<Vec<BinaryType>> {
    Ok(all_binary_types(sig, cap)?.into_iter().filter(|e| !e.is_null()).collect())
}

/// A quantifier-free formula compiled to indexed atom lookups, so graph
/// construction can evaluate it over many configurations without touching
/// names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Qf {
    True,
    False,
    UnaryAt(Var, usize),
    SelfLoopAt(Var, usize),
    EdgeFwd(usize),
    EdgeBwd(usize),
    /// x = y; evaluates to false on a configuration of distinct elements.
    EqXY,
    Not(Box<Qf>),
    And(Box<Qf>, Box<Qf>),
    Or(Box<Qf>, Box<Qf>),
    Implies(Box<Qf>, Box<Qf>),
}

pub fn compile_qf(f: &Formula, sig: &Signature) -> Result<Qf> {
    match f {
        Formula::True => Ok(Qf::True),
        Formula::False => Ok(Qf::False),
        Formula::Unary { pred, var } => {
            let idx = sig
                .unary_index(pred)
                .ok_or_else(|| Error::Internal(format!("unresolved predicate `{pred}`")))?;
            Ok(Qf::UnaryAt(*var, idx))
        }
        Formula::Binary { pred, left, right } => {
            let idx = sig
                .binary_index(pred)
                .ok_or_else(|| Error::Internal(format!("unresolved predicate `{pred}`")))?;
            match (left, right) {
                (Var::X, Var::X) => Ok(Qf::SelfLoopAt(Var::X, idx)),
                (Var::Y, Var::Y) => Ok(Qf::SelfLoopAt(Var::Y, idx)),
                (Var::X, Var::Y) => Ok(Qf::EdgeFwd(idx)),
                (Var::Y, Var::X) => Ok(Qf::EdgeBwd(idx)),
            }
        }
        Formula::Eq { left, right } => {
            if left == right {
                Ok(Qf::True)
            } else {
                Ok(Qf::EqXY)
            }
        }
        Formula::Not(a) => Ok(Qf::Not(Box::new(compile_qf(a, sig)?))),
        Formula::And(a, b) => Ok(Qf::And(
            Box::new(compile_qf(a, sig)?),
            Box::new(compile_qf(b, sig)?),
        )),
        Formula::Or(a, b) => Ok(Qf::Or(
            Box::new(compile_qf(a, sig)?),
            Box::new(compile_qf(b, sig)?),
        )),
        Formula::Implies(a, b) => Ok(Qf::Implies(
            Box::new(compile_qf(a, sig)?),
            Box::new(compile_qf(b, sig)?),
        )),
        Formula::Forall { .. } | Formula::Exists { .. } | Formula::Count(_) => Err(
            Error::Internal("quantifier in a quantifier-free evaluation".into()),
        ),
    }
}

impl Qf {
    pub fn eval(&self, sig: &Signature, src: UnaryType, eta: BinaryType, dst: UnaryType) -> bool {
        match self {
            Qf::True => true,
            Qf::False => false,
            Qf::UnaryAt(Var::X, i) => src.has_unary(*i),
            Qf::UnaryAt(Var::Y, i) => dst.has_unary(*i),
            Qf::SelfLoopAt(Var::X, j) => src.has_self_loop(sig, *j),
            Qf::SelfLoopAt(Var::Y, j) => dst.has_self_loop(sig, *j),
            Qf::EdgeFwd(j) => eta.has_fwd(*j),
            Qf::EdgeBwd(j) => eta.has_bwd(*j),
            Qf::EqXY => false,
            Qf::Not(a) => !a.eval(sig, src, eta, dst),
            Qf::And(a, b) => a.eval(sig, src, eta, dst) && b.eval(sig, src, eta, dst),
            Qf::Or(a, b) => a.eval(sig, src, eta, dst) || b.eval(sig, src, eta, dst),
            Qf::Implies(a, b) => !a.eval(sig, src, eta, dst) || b.eval(sig, src, eta, dst),
        }
    }
}

/// Truth of a quantifier-free formula under the assignment induced by a
/// configuration: `U(x) ↦ π`, `U(y) ↦ π′`, `R(x,x) ↦ π`, `R(y,y) ↦ π′`,
/// `R(x,y)/R(y,x) ↦ η`, and `x = y ↦ false`.
pub fn eval_qf(
    f: &Formula,
    sig: &Signature,
    src: UnaryType,
    eta: BinaryType,
    dst: UnaryType,
) -> Result<bool> {
    Ok(compile_qf(f, sig)?.eval(sig, src, eta, dst))
}

/// The normal form with γ and every α compiled for configuration evaluation.
#[derive(Debug, Clone)]
pub struct CompiledNf {
    pub gamma: Qf,
    pub alphas: Vec<(usize, Qf)>,
}

impl CompiledNf {
    pub fn new(nf: &NormalForm) -> Result<CompiledNf> {
        let gamma = compile_qf(&nf.gamma, &nf.sig)?;
        let alphas = nf
            .alphas
            .iter()
            .map(|a| Ok((a.guard, compile_qf(&a.beta, &nf.sig)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledNf { gamma, alphas })
    }

    /// Does π satisfy γ?
    pub fn compatible_unary(&self, sig: &Signature, pi: UnaryType) -> bool {
        self.gamma.eval(sig, pi, BinaryType::NULL, pi)
    }

    /// Is the configuration (π, η, π′) consistent with every pair constraint,
    /// read in both orientations?
    pub fn compatible_config(
        &self,
        sig: &Signature,
        pi: UnaryType,
        eta: BinaryType,
        pi2: UnaryType,
    ) -> bool {
        if !self.compatible_unary(sig, pi) || !self.compatible_unary(sig, pi2) {
            return false;
        }
        let rev = eta.reverse();
        self.alphas.iter().all(|(guard, beta)| {
            let fwd = !eta.has_fwd(*guard) || beta.eval(sig, pi, eta, pi2);
            let bwd = !rev.has_fwd(*guard) || beta.eval(sig, pi2, rev, pi);
            fwd && bwd
        })
    }
}
