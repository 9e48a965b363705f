use std::collections::HashMap;

use crate::error::{Error, Result};

/// A relational vocabulary of unary and binary predicate names. There are no
/// constant or function symbols anywhere in the system.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Signature {
    unary: Vec<String>,
    binary: Vec<String>,
    unary_idx: HashMap<String, usize>,
    binary_idx: HashMap<String, usize>,
}

impl Signature {
    pub fn new<S: Into<String>>(unary: Vec<S>, binary: Vec<S>) -> Result<Self> {
        let mut sig = Signature::default();
        for name in unary {
            sig.add_unary(name.into())?;
        }
        for name in binary {
            sig.add_binary(name.into())?;
        }
        Ok(sig)
    }

    pub fn add_unary(&mut self, name: String) -> Result<usize> {
        if self.contains(&name) {
            return Err(Error::Internal(format!("duplicate predicate name `{name}`")));
        }
        let idx = self.unary.len();
        self.unary_idx.insert(name.clone(), idx);
        self.unary.push(name);
        Ok(idx)
    }

    pub fn add_binary(&mut self, name: String) -> Result<usize> {
        if self.contains(&name) {
            return Err(Error::Internal(format!("duplicate predicate name `{name}`")));
        }
        let idx = self.binary.len();
        self.binary_idx.insert(name.clone(), idx);
        self.binary.push(name);
        Ok(idx)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.unary_idx.contains_key(name) || self.binary_idx.contains_key(name)
    }

    /// Number of unary predicates.
    pub fn n(&self) -> usize {
        self.unary.len()
    }

    /// Number of binary predicates.
    pub fn m(&self) -> usize {
        self.binary.len()
    }

    pub fn unary_names(&self) -> &[String] {
        &self.unary
    }

    pub fn binary_names(&self) -> &[String] {
        &self.binary
    }

    pub fn unary_index(&self, name: &str) -> Option<usize> {
        self.unary_idx.get(name).copied()
    }

    pub fn binary_index(&self, name: &str) -> Option<usize> {
        self.binary_idx.get(name).copied()
    }

    pub fn unary_name(&self, idx: usize) -> &str {
        &self.unary[idx]
    }

    pub fn binary_name(&self, idx: usize) -> &str {
        &self.binary[idx]
    }
}
