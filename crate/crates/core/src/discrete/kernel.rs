use serde::Serialize;

use super::dist::{check_simplex, Dist};
use super::space::FiniteSpace;
use crate::error::{Error, Result};

/// A channel between finite spaces: a row-stochastic matrix.
///
/// `rows[a * cod.size() + b]` is the probability of `b` given `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteKernel {
    dom: FiniteSpace,
    cod: FiniteSpace,
    rows: Vec<f64>,
}

impl FiniteKernel {
    /// Builds a kernel from a flat row-major matrix, validating every row.
    pub fn new(dom: FiniteSpace, cod: FiniteSpace, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != dom.size() * cod.size() {
            return Err(Error::Shape(format!(
                "kernel {} -> {} needs {} entries, got {}",
                dom.size(),
                cod.size(),
                dom.size() * cod.size(),
                rows.len()
            )));
        }
        let n = cod.size();
        for (a, row) in rows.chunks(n).enumerate() {
            check_simplex(row)
                .map_err(|e| Error::NotStochastic(format!("row {a} ({}) {e}", dom.label(a))))?;
        }
        Ok(Self { dom, cod, rows })
    }

    pub fn from_rows(dom: FiniteSpace, cod: FiniteSpace, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != dom.size() {
            return Err(Error::Shape(format!(
                "kernel has {} rows but its domain has {} outcomes",
                rows.len(),
                dom.size()
            )));
        }
        if let Some((a, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cod.size()) {
            return Err(Error::Shape(format!(
                "row {a} has {} entries but the codomain has {} outcomes",
                r.len(),
                cod.size()
            )));
        }
        Self::new(dom, cod, rows.concat())
    }

    pub(crate) fn from_parts(dom: FiniteSpace, cod: FiniteSpace, rows: Vec<f64>) -> Self {
        debug_assert_eq!(rows.len(), dom.size() * cod.size());
        Self { dom, cod, rows }
    }

    pub fn identity(space: FiniteSpace) -> Self {
        Self::deterministic(space.clone(), space, |a| a)
    }

    /// The kernel sending `a` to the point `f(a)`.
    pub fn deterministic(dom: FiniteSpace, cod: FiniteSpace, f: impl Fn(usize) -> usize) -> Self {
        let n = cod.size();
        let mut rows = vec![0.0; dom.size() * n];
        for a in 0..dom.size() {
            rows[a * n + f(a)] = 1.0;
        }
        Self { dom, cod, rows }
    }

    /// The unique kernel into the unit space.
    pub fn discard(dom: FiniteSpace) -> Self {
        let rows = vec![1.0; dom.size()];
        Self { dom, cod: FiniteSpace::unit(), rows }
    }

    /// The kernel ignoring its input and returning `state`.
    pub fn constant(dom: FiniteSpace, state: &Dist) -> Self {
        let rows = (0..dom.size()).flat_map(|_| state.mass().iter().copied()).collect();
        Self { dom, cod: state.space().clone(), rows }
    }

    /// The copier `B -> B⊗B`, `b ↦ (b, b)`.
    pub fn copy(space: FiniteSpace) -> Self {
        let n = space.size();
        let cod = FiniteSpace::product(&space, &space);
        Self::deterministic(space, cod, |b| b * n + b)
    }

    /// A state on `space` seen as a kernel out of the unit.
    pub fn from_state(state: &Dist) -> Self {
        Self::constant(FiniteSpace::unit(), state)
    }

    pub fn dom(&self) -> &FiniteSpace {
        &self.dom
    }

    pub fn cod(&self) -> &FiniteSpace {
        &self.cod
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let n = self.cod.size();
        &self.rows[a * n..(a + 1) * n]
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.rows[a * self.cod.size() + b]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dom.size()).map(|a| self.row(a).to_vec()).collect()
    }

    /// The output distribution at input `a`.
    pub fn at(&self, a: usize) -> Dist {
        Dist::from_parts(self.cod.clone(), self.row(a).to_vec())
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.dom.size())
            .map(|a| (self.row(a).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Same matrix over relabeled spaces of equal sizes.
    pub fn relabel(&self, dom: FiniteSpace, cod: FiniteSpace) -> Result<Self> {
        if dom.size() != self.dom.size() || cod.size() != self.cod.size() {
            return Err(Error::Shape("relabel requires equal sizes".into()));
        }
        Ok(Self { dom, cod, rows: self.rows.clone() })
    }

    /// Marginalizes the codomain onto the listed atomic factors (in order).
    pub fn marginalize_cod(&self, keep: &[usize]) -> Result<FiniteKernel> {
        let atoms = self.cod.atoms();
        if let Some(&bad) = keep.iter().find(|&&k| k >= atoms.len()) {
            return Err(Error::Shape(format!(
                "factor {bad} out of range for a codomain with {} atoms",
                atoms.len()
            )));
        }
        let kept: Vec<&FiniteSpace> = keep.iter().map(|&k| atoms[k]).collect();
        let cod = FiniteSpace::product_all(&kept);
        let sizes: Vec<usize> = kept.iter().map(|s| s.size()).collect();
        let n_out = cod.size();
        let mut rows = vec![0.0; self.dom.size() * n_out];
        for j in 0..self.cod.size() {
            let idx = self.cod.unflatten(j);
            let mut target = 0;
            for (&k, &s) in keep.iter().zip(&sizes) {
                target = target * s + idx[k];
            }
            for a in 0..self.dom.size() {
                rows[a * n_out + target] += self.rows[a * self.cod.size() + j];
            }
        }
        Ok(FiniteKernel { dom: self.dom.clone(), cod, rows })
    }
}

impl AsRef<FiniteKernel> for FiniteKernel {
    fn as_ref(&self) -> &FiniteKernel {
        self
    }
}

/// Outcomes of strictly positive mass under a reference distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportMask {
    pub space: FiniteSpace,
    pub supported: Vec<bool>,
}

impl SupportMask {
    pub fn of(dist: &Dist) -> Self {
        Self {
            space: dist.space().clone(),
            supported: dist.mass().iter().map(|&p| p > 0.0).collect(),
        }
    }

    pub fn is_supported(&self, i: usize) -> bool {
        self.supported[i]
    }

    pub fn count(&self) -> usize {
        self.supported.iter().filter(|&&s| s).count()
    }
}

/// Applies a channel to a state (Kleisli application).
pub fn push(k: &FiniteKernel, pi: &Dist) -> Result<Dist> {
    pi.space().check_same(k.dom(), "push")?;
    let n = k.cod().size();
    let mut mass = vec![0.0; n];
    for (a, &p) in pi.mass().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (m, &v) in mass.iter_mut().zip(k.row(a)) {
            *m += v * p;
        }
    }
    Ok(Dist::from_parts(k.cod().clone(), mass))
}

/// Chapman–Kolmogorov composite `d ∘ c`: marginalizes the intermediate variable.
pub fn compose(d: &FiniteKernel, c: &FiniteKernel) -> Result<FiniteKernel> {
    c.cod().check_same(d.dom(), "compose")?;
    let (na, nb, nz) = (c.dom().size(), c.cod().size(), d.cod().size());
    let mut rows = vec![0.0; na * nz];
    for a in 0..na {
        let out = &mut rows[a * nz..(a + 1) * nz];
        for b in 0..nb {
            let w = c.entry(a, b);
            if w == 0.0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(d.row(b)) {
                *o += v * w;
            }
        }
    }
    Ok(FiniteKernel::from_parts(c.dom().clone(), d.cod().clone(), rows))
}

/// Parallel product `k1 ⊗ k2 : A⊗A' -> B⊗B'`.
pub fn tensor(k1: &FiniteKernel, k2: &FiniteKernel) -> FiniteKernel {
    let dom = FiniteSpace::product(k1.dom(), k2.dom());
    let cod = FiniteSpace::product(k1.cod(), k2.cod());
    let mut rows = Vec::with_capacity(dom.size() * cod.size());
    for a in 0..k1.dom().size() {
        for a2 in 0..k2.dom().size() {
            for &p in k1.row(a) {
                for &q in k2.row(a2) {
                    rows.push(p * q);
                }
            }
        }
    }
    FiniteKernel::from_parts(dom, cod, rows)
}

/// Whether two kernels agree within `tol` on every input of positive `reference` mass.
pub fn almost_sure_eq<K1, K2>(k1: &K1, k2: &K2, reference: &Dist, tol: f64) -> Result<bool>
where
    K1: AsRef<FiniteKernel>,
    K2: AsRef<FiniteKernel>,
{
    let (k1, k2) = (k1.as_ref(), k2.as_ref());
    if k1.dom().size() != k2.dom().size() || k1.cod().size() != k2.cod().size() {
        return Err(Error::Shape(format!(
            "cannot compare kernels {}x{} and {}x{}",
            k1.dom().size(),
            k1.cod().size(),
            k2.dom().size(),
            k2.cod().size()
        )));
    }
    if reference.space().size() != k1.dom().size() {
        return Err(Error::Shape("reference distribution is not on the common domain".into()));
    }
    Ok(reference
        .mass()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .all(|(a, _)| k1.row(a).iter().zip(k2.row(a)).all(|(x, y)| (x - y).abs() <= tol)))
}
