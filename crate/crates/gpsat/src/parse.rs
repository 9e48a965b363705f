use num_bigint::BigInt;
use num_traits::One;

use crate::error::{Error, Result};
use crate::formula::{CountExpr, CountTerm, Formula, GuardAtom, Relation, Sentence, Var};
use crate::sig::Signature;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    VarX,
    VarY,
    Int(BigInt),
    Forall,
    Exists,
    True,
    False,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Colon,
    Semi,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Plus,
    Minus,
    Star,
    Hash,
    EqSym,
    NeSym,
    Le,
    Ge,
    Lt,
    Gt,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tok::Ident(n) => return write!(f, "identifier `{n}`"),
            Tok::VarX => "x",
            Tok::VarY => "y",
            Tok::Int(i) => return write!(f, "integer {i}"),
            Tok::Forall => "forall",
            Tok::Exists => "exists",
            Tok::True => "true",
            Tok::False => "false",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Bang => "!",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Arrow => "->",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Hash => "#",
            Tok::EqSym => "=",
            Tok::NeSym => "!=",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Eof => "end of input",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0;
    macro_rules! push {
        ($t:expr, $l:expr, $c:expr) => {
            out.push(Spanned { tok: $t, line: $l, col: $c })
        };
    }
    while i < bytes.len() {
        let c = bytes[i];
        let (l0, c0) = (line, col);
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '(' => push!(Tok::LParen, l0, c0),
            ')' => push!(Tok::RParen, l0, c0),
            '[' => push!(Tok::LBracket, l0, c0),
            ']' => push!(Tok::RBracket, l0, c0),
            '{' => push!(Tok::LBrace, l0, c0),
            '}' => push!(Tok::RBrace, l0, c0),
            ',' => push!(Tok::Comma, l0, c0),
            '.' => push!(Tok::Dot, l0, c0),
            ':' => push!(Tok::Colon, l0, c0),
            ';' => push!(Tok::Semi, l0, c0),
            '&' => push!(Tok::Amp, l0, c0),
            '|' => push!(Tok::Pipe, l0, c0),
            '+' => push!(Tok::Plus, l0, c0),
            '*' => push!(Tok::Star, l0, c0),
            '#' => push!(Tok::Hash, l0, c0),
            '-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '>' {
                    i += 1;
                    col += 1;
                    push!(Tok::Arrow, l0, c0);
                } else {
                    push!(Tok::Minus, l0, c0);
                }
            }
            '!' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    i += 1;
                    col += 1;
                    push!(Tok::NeSym, l0, c0);
                } else {
                    push!(Tok::Bang, l0, c0);
                }
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    i += 1;
                    col += 1;
                    push!(Tok::Le, l0, c0);
                } else {
                    push!(Tok::Lt, l0, c0);
                }
            }
            '>' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    i += 1;
                    col += 1;
                    push!(Tok::Ge, l0, c0);
                } else {
                    push!(Tok::Gt, l0, c0);
                }
            }
            '=' => push!(Tok::EqSym, l0, c0),
            d if d.is_ascii_digit() => {
                let mut s = String::new();
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    s.push(bytes[i]);
                    i += 1;
                    col += 1;
                }
                push!(Tok::Int(s.parse::<BigInt>().unwrap()), l0, c0);
                continue;
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                let mut s = String::new();
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_' || bytes[i] == '#')
                {
                    // '#' inside an identifier only continues a fresh-name form
                    // like q#3; a '#' that starts a count term is preceded by
                    // '*' or whitespace, never by an identifier character.
                    if bytes[i] == '#'
                        && !(i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
                    {
                        break;
                    }
                    s.push(bytes[i]);
                    i += 1;
                    col += 1;
                }
                let tok = match s.as_str() {
                    "forall" => Tok::Forall,
                    "exists" => Tok::Exists,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "x" => Tok::VarX,
                    "y" => Tok::VarY,
                    _ => Tok::Ident(s),
                };
                push!(tok, l0, c0);
                continue;
            }
            other => {
                return Err(Error::Parse {
                    line: l0,
                    col: c0,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    sig: &'a Signature,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        (self.toks[self.pos].line, self.toks[self.pos].col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.here();
        Err(Error::Parse { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if self.peek() == &t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {t}, found {}", self.peek()))
        }
    }

    fn parse_var(&mut self) -> Result<Var> {
        match self.peek().clone() {
            Tok::VarX => {
                self.bump();
                Ok(Var::X)
            }
            Tok::VarY => {
                self.bump();
                Ok(Var::Y)
            }
            Tok::Ident(n) => self.err(format!("variable other than x/y: `{n}`")),
            other => self.err(format!("expected a variable, found {other}")),
        }
    }

    fn parse_int(&mut self) -> Result<BigInt> {
        let negative = if self.peek() == &Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(if negative { -i } else { i })
            }
            other => self.err(format!("expected an integer constant, found {other}")),
        }
    }

    fn check_pred(&self, name: &str, arity: usize) -> Result<()> {
        let known = match arity {
            1 => self.sig.unary_index(name).is_some(),
            _ => self.sig.binary_index(name).is_some(),
        };
        if known {
            return Ok(());
        }
        if self.sig.contains(name) {
            let actual = if self.sig.unary_index(name).is_some() { 1 } else { 2 };
            self.err(format!("arity mismatch: `{name}` takes {actual} argument(s), used with {arity}"))
        } else {
            self.err(format!("unknown predicate `{name}`"))
        }
    }

    /// formula := implication (right-associative, lowest precedence)
    fn parse_formula(&mut self) -> Result<Formula> {
        let lhs = self.parse_or()?;
        if self.peek() == &Tok::Arrow {
            self.bump();
            let rhs = self.parse_formula()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_or(&mut self) -> Result<Formula> {
        let mut f = self.parse_and()?;
        while self.peek() == &Tok::Pipe {
            self.bump();
            let rhs = self.parse_and()?;
            f = Formula::or(f, rhs);
        }
        Ok(f)
    }

    fn parse_and(&mut self) -> Result<Formula> {
        let mut f = self.parse_prefix()?;
        while self.peek() == &Tok::Amp {
            self.bump();
            let rhs = self.parse_prefix()?;
            f = Formula::and(f, rhs);
        }
        Ok(f)
    }

    fn parse_prefix(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                let inner = self.parse_prefix()?;
                Ok(Formula::not(inner))
            }
            Tok::Forall => {
                self.bump();
                let var = self.parse_var()?;
                let guard = if self.peek() == &Tok::Colon {
                    self.bump();
                    Some(self.parse_guard(var)?)
                } else {
                    None
                };
                self.expect(Tok::Dot)?;
                let body = self.parse_formula()?;
                Ok(Formula::Forall { var, guard, body: Box::new(body) })
            }
            Tok::Exists => {
                self.bump();
                let var = self.parse_var()?;
                if self.peek() != &Tok::Colon {
                    return self.err("existential quantifiers must be guarded: expected `:`");
                }
                self.bump();
                let guard = self.parse_guard(var)?;
                self.expect(Tok::Dot)?;
                let body = self.parse_formula()?;
                Ok(Formula::Exists { var, guard, body: Box::new(body) })
            }
            _ => self.parse_primary(),
        }
    }

    /// Guard after `forall v :` / `exists v :`. A bare predicate name is
    /// shorthand for the predicate applied to the bound variable (twice, for
    /// a binary predicate).
    fn parse_guard(&mut self, bound: Var) -> Result<GuardAtom> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                if self.peek() == &Tok::LParen {
                    self.bump();
                    let first = self.parse_var()?;
                    let second = if self.peek() == &Tok::Comma {
                        self.bump();
                        Some(self.parse_var()?)
                    } else {
                        None
                    };
                    self.expect(Tok::RParen)?;
                    self.check_pred(&name, if second.is_some() { 2 } else { 1 })?;
                    Ok(GuardAtom { pred: name, first, second })
                } else if self.sig.unary_index(&name).is_some() {
                    Ok(GuardAtom { pred: name, first: bound, second: None })
                } else if self.sig.binary_index(&name).is_some() {
                    Ok(GuardAtom { pred: name, first: bound, second: Some(bound) })
                } else {
                    self.err(format!("unknown predicate `{name}`"))
                }
            }
            Tok::VarX | Tok::VarY => {
                self.err("equality is not allowed as a guard; guards are predicate atoms")
            }
            other => self.err(format!("expected a guard atom, found {other}")),
        }
    }

    fn parse_primary(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let f = self.parse_formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::True => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::False => {
                self.bump();
                Ok(Formula::False)
            }
            Tok::Int(_) | Tok::Minus | Tok::Hash => self.parse_count(),
            Tok::Ident(name) => {
                self.bump();
                self.expect(Tok::LParen)?;
                let first = self.parse_var()?;
                let second = if self.peek() == &Tok::Comma {
                    self.bump();
                    Some(self.parse_var()?)
                } else {
                    None
                };
                self.expect(Tok::RParen)?;
                match second {
                    None => {
                        self.check_pred(&name, 1)?;
                        Ok(Formula::Unary { pred: name, var: first })
                    }
                    Some(right) => {
                        self.check_pred(&name, 2)?;
                        Ok(Formula::Binary { pred: name, left: first, right })
                    }
                }
            }
            Tok::VarX | Tok::VarY => {
                let left = self.parse_var()?;
                match self.peek().clone() {
                    Tok::EqSym => {
                        self.bump();
                        let right = self.parse_var()?;
                        Ok(Formula::Eq { left, right })
                    }
                    Tok::NeSym => {
                        self.bump();
                        let right = self.parse_var()?;
                        Ok(Formula::not(Formula::Eq { left, right }))
                    }
                    other => self.err(format!("expected `=` or `!=` after a variable, found {other}")),
                }
            }
            other => self.err(format!("expected a formula, found {other}")),
        }
    }

    /// count := term { (+|-) term } CMP INT, anchored at x, counting y.
    fn parse_count(&mut self) -> Result<Formula> {
        let mut terms = Vec::new();
        let mut sign_minus = if self.peek() == &Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        loop {
            let coeff = if let Tok::Int(_) = self.peek() {
                let c = self.parse_int()?;
                self.expect(Tok::Star)?;
                c
            } else {
                BigInt::one()
            };
            let coeff = if sign_minus { -coeff } else { coeff };
            self.expect(Tok::Hash)?;
            self.expect(Tok::LBracket)?;
            let name = match self.peek().clone() {
                Tok::Ident(n) => {
                    self.bump();
                    n
                }
                other => return self.err(format!("expected a binary predicate, found {other}")),
            };
            self.expect(Tok::LParen)?;
            let first = self.parse_var()?;
            self.expect(Tok::Comma)?;
            let second = self.parse_var()?;
            self.expect(Tok::RParen)?;
            self.expect(Tok::RBracket)?;
            self.check_pred(&name, 2)?;
            if first == second {
                return self.err("a count direction must use both variables x and y");
            }
            let incoming = first == Var::Y;
            self.expect(Tok::LBrace)?;
            let inner = self.parse_formula()?;
            self.expect(Tok::RBrace)?;
            terms.push(CountTerm { coeff, pred: name, incoming, inner: Box::new(inner) });
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    sign_minus = false;
                }
                Tok::Minus => {
                    self.bump();
                    sign_minus = true;
                }
                _ => break,
            }
        }
        let rel = self.parse_relation()?;
        let rhs = self.parse_int()?;
        Ok(Formula::Count(CountExpr { terms, rel, rhs }))
    }

    fn parse_relation(&mut self) -> Result<Relation> {
        let base = match self.bump() {
            Tok::EqSym => Relation::Eq,
            Tok::NeSym => Relation::Ne,
            Tok::Le => Relation::Le,
            Tok::Ge => Relation::Ge,
            Tok::Lt => Relation::Lt,
            Tok::Gt => Relation::Gt,
            other => {
                self.pos -= 1;
                return self.err(format!("expected a comparison, found {other}"));
            }
        };
        // `=mod d` / `!=mod d` lex as `=`/`!=` followed by the identifier `mod`.
        if matches!(base, Relation::Eq | Relation::Ne) {
            if let Tok::Ident(n) = self.peek() {
                if n == "mod" {
                    self.bump();
                    let d = self.parse_int()?;
                    if d.sign() != num_bigint::Sign::Plus {
                        return self.err("modulus must be a positive integer");
                    }
                    let d = d.magnitude().clone();
                    return Ok(match base {
                        Relation::Eq => Relation::EqMod(d),
                        _ => Relation::NeMod(d),
                    });
                }
            }
        }
        Ok(base)
    }
}

/// Parse a sentence against a signature. The returned formula is closed and
/// every predicate use is resolved with the correct arity.
pub fn parse(text: &str, sig: &Signature) -> Result<Sentence> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, sig };
    let f = p.parse_formula()?;
    p.expect(Tok::Semi)?;
    if p.peek() != &Tok::Eof {
        return p.err(format!("trailing input after `;`: {}", p.peek()));
    }
    if let Some(v) = f.free_vars().into_iter().next() {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            msg: format!("sentence has free variable `{v}`"),
        });
    }
    Ok(f)
}

/// Infer a signature from the token stream: every `NAME(v)` use is unary,
/// every `NAME(v, w)` use is binary. Inconsistent use is an error, as is a
/// name that only ever appears as a bare guard.
pub fn infer_signature(text: &str) -> Result<Signature> {
    let toks = lex(text)?;
    let mut unary: Vec<String> = Vec::new();
    let mut binary: Vec<String> = Vec::new();
    let mut bare: Vec<(String, usize, usize)> = Vec::new();
    let mut i = 0;
    while toks[i].tok != Tok::Eof {
        if let Tok::Ident(name) = &toks[i].tok {
            if name == "mod" && i > 0 && matches!(toks[i - 1].tok, Tok::EqSym | Tok::NeSym) {
                i += 1;
                continue;
            }
            if toks[i + 1].tok == Tok::LParen {
                let arity = if toks.len() > i + 3 && toks[i + 3].tok == Tok::Comma { 2 } else { 1 };
                let (known_u, known_b) = (unary.contains(name), binary.contains(name));
                match (arity, known_u, known_b) {
                    (1, true, _) | (2, _, true) => {}
                    (1, false, false) => unary.push(name.clone()),
                    (2, false, false) => binary.push(name.clone()),
                    _ => {
                        return Err(Error::Parse {
                            line: toks[i].line,
                            col: toks[i].col,
                            msg: format!("predicate `{name}` used with inconsistent arities"),
                        })
                    }
                }
            } else {
                bare.push((name.clone(), toks[i].line, toks[i].col));
            }
        }
        i += 1;
    }
    for (name, line, col) in bare {
        if name != "mod" && !unary.contains(&name) && !binary.contains(&name) {
            return Err(Error::Parse {
                line,
                col,
                msg: format!("cannot infer the arity of `{name}`: it only appears as a bare guard"),
            });
        }
    }
    Signature::new(unary, binary)
}
