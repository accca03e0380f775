use serde::Serialize;

use super::space::FiniteSpace;
use crate::error::{Error, Result};
use crate::NORMALIZATION_TOL;

/// A probability distribution (state) on a finite space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dist {
    space: FiniteSpace,
    mass: Vec<f64>,
}

impl Dist {
    pub fn new(space: FiniteSpace, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != space.size() {
            return Err(Error::Shape(format!(
                "distribution has {} entries but the space has {} outcomes",
                mass.len(),
                space.size()
            )));
        }
        check_simplex(&mass).map_err(|e| Error::NotStochastic(format!("distribution {e}")))?;
        Ok(Self { space, mass })
    }

    /// Skips validation; callers guarantee the invariant.
    pub(crate) fn from_parts(space: FiniteSpace, mass: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), space.size());
        Self { space, mass }
    }

    pub fn uniform(space: FiniteSpace) -> Self {
        let n = space.size();
        Self { mass: vec![1.0 / n as f64; n], space }
    }

    pub fn point(space: FiniteSpace, index: usize) -> Self {
        let mut mass = vec![0.0; space.size()];
        mass[index] = 1.0;
        Self { space, mass }
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.mass[i]
    }

    /// Independent product `self ⊗ other`.
    pub fn product(&self, other: &Dist) -> Dist {
        let mut mass = Vec::with_capacity(self.mass.len() * other.mass.len());
        for &p in &self.mass {
            for &q in &other.mass {
                mass.push(p * q);
            }
        }
        Dist { space: FiniteSpace::product(&self.space, &other.space), mass }
    }

    /// Marginals of a distribution on `left ⊗ right`.
    pub fn split_marginals(&self, left: &FiniteSpace, right: &FiniteSpace) -> Result<(Dist, Dist)> {
        let (nl, nr) = (left.size(), right.size());
        if nl * nr != self.mass.len() {
            return Err(Error::Shape(format!(
                "joint of size {} cannot split into {nl} x {nr}",
                self.mass.len()
            )));
        }
        let mut ml = vec![0.0; nl];
        let mut mr = vec![0.0; nr];
        for i in 0..nl {
            for j in 0..nr {
                let p = self.mass[i * nr + j];
                ml[i] += p;
                mr[j] += p;
            }
        }
        Ok((Dist::from_parts(left.clone(), ml), Dist::from_parts(right.clone(), mr)))
    }

    /// Shannon entropy in nats, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.mass.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    /// Same masses viewed on a different space of equal size.
    pub fn relabel(&self, space: FiniteSpace) -> Result<Dist> {
        if space.size() != self.space.size() {
            return Err(Error::Shape("relabel requires equal sizes".into()));
        }
        Ok(Dist { space, mass: self.mass.clone() })
    }
}

/// Validates that `row` is a probability vector; the message names the defect.
pub(crate) fn check_simplex(row: &[f64]) -> std::result::Result<(), String> {
    if let Some((i, v)) = row.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(format!("has invalid entry {v} at position {i}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(format!("sums to {sum:.15} instead of 1"));
    }
    Ok(())
}

/// Relative entropy `Σ p log(p/q)` with `0 log 0 = 0` and `p log(p/0) = +∞`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "kl_divergence: length mismatch");
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            acc += pi * (pi.ln() - qi.ln());
        }
    }
    acc
}
