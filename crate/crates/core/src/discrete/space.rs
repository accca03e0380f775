use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::error::{shape_err, Error, Result};

/// A finite set of labeled outcomes.
///
/// Product spaces remember their factors, so bracketings such as `(M⊗B)⊗N`
/// survive composition and can be flattened on demand. Outcomes of a product
/// are indexed row-major: the first factor varies slowest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiniteSpace {
    labels: Vec<String>,
    factors: Vec<FiniteSpace>,
}

impl FiniteSpace {
    /// An atomic space with the given outcome labels.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return shape_err("a finite space needs at least one outcome");
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Shape(format!("duplicate outcome label {l:?}")));
            }
        }
        Ok(Self { labels, factors: Vec::new() })
    }

    /// Atomic space with labels `0..n`.
    pub fn range(n: usize) -> Self {
        assert!(n >= 1, "a finite space needs at least one outcome");
        Self { labels: (0..n).map(|i| i.to_string()).collect(), factors: Vec::new() }
    }

    /// Atomic space with labels `{prefix}0..{prefix}{n-1}`.
    pub fn named(prefix: &str, n: usize) -> Self {
        assert!(n >= 1, "a finite space needs at least one outcome");
        Self { labels: (0..n).map(|i| format!("{prefix}{i}")).collect(), factors: Vec::new() }
    }

    /// The monoidal unit: a single outcome `*`.
    pub fn unit() -> Self {
        Self { labels: vec!["*".to_string()], factors: Vec::new() }
    }

    /// The binary product `a ⊗ b`.
    pub fn product(a: &FiniteSpace, b: &FiniteSpace) -> Self {
        let mut labels = Vec::with_capacity(a.size() * b.size());
        for la in &a.labels {
            for lb in &b.labels {
                labels.push(format!("({la},{lb})"));
            }
        }
        Self { labels, factors: vec![a.clone(), b.clone()] }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Top-level factors; empty for an atomic space.
    pub fn factors(&self) -> &[FiniteSpace] {
        &self.factors
    }

    pub fn is_atomic(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn is_unit(&self) -> bool {
        self.is_atomic() && self.size() == 1
    }

    /// Atomic factors in order, with all bracketing removed.
    pub fn atoms(&self) -> Vec<&FiniteSpace> {
        if self.is_atomic() {
            vec![self]
        } else {
            self.factors.iter().flat_map(|f| f.atoms()).collect()
        }
    }

    /// Sizes of the atomic factors.
    pub fn factor_sizes(&self) -> Vec<usize> {
        self.atoms().iter().map(|a| a.size()).collect()
    }

    /// Sizes of the atomic factors with unit (size-1) factors dropped.
    ///
    /// Two spaces with equal canonical sizes index their outcomes identically.
    pub fn canonical_sizes(&self) -> Vec<usize> {
        self.factor_sizes().into_iter().filter(|&s| s > 1).collect()
    }

    /// Number of size-1 atoms, i.e. unit factors picked up by identities.
    pub fn unit_factor_count(&self) -> usize {
        self.atoms().iter().filter(|a| a.size() == 1).count()
    }

    /// Equality after flattening the bracketing (atoms compared by labels).
    pub fn flat_eq(&self, other: &FiniteSpace) -> bool {
        let a = self.atoms();
        let b = other.atoms();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.labels == y.labels)
    }

    /// Same outcomes in the same order, ignoring factor structure.
    pub fn same_points(&self, other: &FiniteSpace) -> bool {
        self.labels == other.labels
    }

    /// Product of a list of spaces, bracketed to the left; the unit for an empty list.
    pub fn product_all(spaces: &[&FiniteSpace]) -> Self {
        match spaces {
            [] => Self::unit(),
            [one] => (*one).clone(),
            [first, rest @ ..] => rest
                .iter()
                .fold((*first).clone(), |acc, s| FiniteSpace::product(&acc, s)),
        }
    }

    /// Decompose a flat index into per-atom indices.
    pub fn unflatten(&self, mut index: usize) -> Vec<usize> {
        let sizes = self.factor_sizes();
        let mut out = vec![0; sizes.len()];
        for (slot, &s) in out.iter_mut().zip(&sizes).rev() {
            *slot = index % s;
            index /= s;
        }
        out
    }

    pub(crate) fn check_same(&self, other: &FiniteSpace, what: &str) -> Result<()> {
        if self.same_points(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: space of size {} does not match space of size {}",
                self.size(),
                other.size()
            )))
        }
    }
}

impl fmt::Display for FiniteSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_atomic() {
            write!(f, "{{{}}}", self.labels.join(","))
        } else {
            let parts: Vec<String> = self.factors.iter().map(|x| x.to_string()).collect();
            write!(f, "({})", parts.join(" ⊗ "))
        }
    }
}
