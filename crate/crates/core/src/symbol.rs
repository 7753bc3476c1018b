//! Finite symbol carriers.
//!
//! Observations, actions, and states are all drawn from finite ordered sets
//! of symbols. A symbol is either an atom (`ok`, `s0`) or a pair of symbols;
//! the product carriers built by the wiring algebra use left-nested pairs
//! (`((a,b),c)`), and equality is structural, so re-bracketing is compared by
//! tuple shape rather than by the printed string.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::AglError;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Atom(String),
    Pair(Box<Symbol>, Box<Symbol>),
}

impl Symbol {
    pub fn atom(name: impl Into<String>) -> Self {
        Symbol::Atom(name.into())
    }

    pub fn pair(left: Symbol, right: Symbol) -> Self {
        Symbol::Pair(Box::new(left), Box::new(right))
    }

    /// Left-nested product of one or more symbols: `[a,b,c] ↦ ((a,b),c)`.
    /// A single symbol is returned unwrapped.
    pub fn product(parts: &[Symbol]) -> Self {
        assert!(!parts.is_empty(), "product of no symbols");
        parts[1..]
            .iter()
            .fold(parts[0].clone(), |acc, p| Symbol::pair(acc, p.clone()))
    }

    pub fn as_pair(&self) -> Option<(&Symbol, &Symbol)> {
        match self {
            Symbol::Atom(_) => None,
            Symbol::Pair(l, r) => Some((l, r)),
        }
    }

    /// Un-nest a left-nested product back into `n` components.
    /// `split_product(((a,b),c), 3) = [a,b,c]`; `n = 1` yields the symbol
    /// itself.
    pub fn split_product(&self, n: usize) -> Option<Vec<&Symbol>> {
        assert!(n >= 1, "split into zero components");
        let mut parts = Vec::with_capacity(n);
        let mut cur = self;
        for _ in 0..n - 1 {
            let (l, r) = cur.as_pair()?;
            parts.push(r);
            cur = l;
        }
        parts.push(cur);
        parts.reverse();
        Some(parts)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Atom(s) => f.write_str(s),
            Symbol::Pair(l, r) => write!(f, "({l},{r})"),
        }
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Ordered finite set of distinct symbols. The declaration order is part of
/// the value: it fixes table layouts, canonical printing, and the scan order
/// that makes reported counterexamples deterministic.
#[derive(Clone, PartialEq, Eq)]
pub struct FiniteSet {
    elems: Vec<Symbol>,
    index: BTreeMap<Symbol, usize>,
}

impl FiniteSet {
    pub fn new(elems: Vec<Symbol>) -> Result<Self, AglError> {
        let mut index = BTreeMap::new();
        for (i, e) in elems.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(AglError::DuplicateSymbol(e.to_string()));
            }
        }
        Ok(FiniteSet { elems, index })
    }

    /// Convenience constructor from atom names.
    pub fn from_names<I>(names: I) -> Result<Self, AglError>
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        Self::new(names.into_iter().map(Symbol::atom).collect())
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Symbol> {
        self.elems.iter()
    }

    pub fn contains(&self, s: &Symbol) -> bool {
        self.index.contains_key(s)
    }

    pub fn position(&self, s: &Symbol) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Position lookup that reports the carrier on failure.
    pub fn require(&self, s: &Symbol) -> Result<usize, AglError> {
        self.position(s).ok_or_else(|| AglError::UnknownSymbol {
            symbol: s.to_string(),
            carrier: self.describe(),
        })
    }

    pub fn get(&self, i: usize) -> &Symbol {
        &self.elems[i]
    }

    /// Cartesian product with left-nested pair symbols, self-major order:
    /// `{a,b} × {x,y} = {(a,x),(a,y),(b,x),(b,y)}`.
    pub fn product(&self, other: &FiniteSet) -> FiniteSet {
        let mut elems = Vec::with_capacity(self.len() * other.len());
        for l in &self.elems {
            for r in &other.elems {
                elems.push(Symbol::pair(l.clone(), r.clone()));
            }
        }
        FiniteSet::new(elems).expect("product of distinct symbols is distinct")
    }

    pub fn describe(&self) -> String {
        let names: Vec<String> = self.elems.iter().map(|e| e.to_string()).collect();
        names.join(" ")
    }
}

impl fmt::Debug for FiniteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.describe())
    }
}
