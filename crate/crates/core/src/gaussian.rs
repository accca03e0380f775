//! Linear-Gaussian channels: `x ↦ N(A x + b, Σ)`.
//!
//! The codomain of a channel may carry a coparameter block. Left-handed
//! channels lay the codomain out as `[copar; out]`, right-handed ones as
//! `[out; copar]`, mirroring [`crate::discrete::Hand`].
//!
//! Densities, entropies and inversions require nonsingular covariances; a
//! deterministic channel must be regularized explicitly by the caller (for
//! example with [`GaussChannel::with_ridge`]).

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::discrete::Hand;
use crate::error::{Error, Result};

/// Entries above this asymmetry are rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as roundoff and clamped to zero.
pub const PSD_TOL: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A Gaussian state `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Shape("a Gaussian state needs dimension at least 1".into()));
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Shape(format!(
                "covariance is {}x{} but the mean has dimension {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        let cov = validate_psd(cov, "state covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn from_slices(mean: &[f64], cov: &[f64]) -> Result<Self> {
        let n = mean.len();
        if cov.len() != n * n {
            return Err(Error::Shape(format!("covariance needs {} entries", n * n)));
        }
        Self::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(n, n, cov))
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim) }
    }

    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov: symmetrize(&cov) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Marginal on a contiguous block of coordinates.
    pub fn marginal(&self, block: Range<usize>) -> Result<GaussState> {
        if block.end > self.dim() || block.is_empty() {
            return Err(Error::Shape(format!("block {block:?} out of range for dimension {}", self.dim())));
        }
        let n = block.len();
        Ok(GaussState {
            mean: self.mean.rows(block.start, n).into_owned(),
            cov: self.cov.view((block.start, block.start), (n, n)).into_owned(),
        })
    }

    /// Independent product (block-diagonal covariance).
    pub fn product(&self, other: &GaussState) -> GaussState {
        let mean = stack_vectors(&[&self.mean, &other.mean]);
        GaussState { mean, cov: block_diag(&self.cov, &other.cov) }
    }

    /// Same law with the covariance scaled by `factor`.
    pub fn scale_cov(&self, factor: f64) -> GaussState {
        GaussState { mean: self.mean.clone(), cov: &self.cov * factor }
    }
}

/// An affine-Gaussian channel `x ↦ N(A x + b, noise)` with a coparameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussChannel {
    a: DMatrix<f64>,
    b: DVector<f64>,
    noise: DMatrix<f64>,
    copar_dim: usize,
    hand: Hand,
}

impl GaussChannel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, noise: DMatrix<f64>, copar_dim: usize, hand: Hand) -> Result<Self> {
        let (cod, dom) = a.shape();
        if dom == 0 || cod == 0 {
            return Err(Error::Shape("channel dimensions must be positive".into()));
        }
        if b.len() != cod {
            return Err(Error::Shape(format!("offset has length {} but A has {cod} rows", b.len())));
        }
        if noise.shape() != (cod, cod) {
            return Err(Error::Shape(format!(
                "noise is {}x{} but the codomain has dimension {cod}",
                noise.nrows(),
                noise.ncols()
            )));
        }
        if copar_dim >= cod {
            return Err(Error::Shape(format!(
                "coparameter dimension {copar_dim} leaves no output in a codomain of dimension {cod}"
            )));
        }
        let noise = validate_psd(noise, "channel noise")?;
        Ok(Self { a, b, noise, copar_dim, hand })
    }

    /// A left-handed channel without coparameter.
    pub fn plain(a: DMatrix<f64>, b: DVector<f64>, noise: DMatrix<f64>) -> Result<Self> {
        Self::new(a, b, noise, 0, Hand::Left)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
            noise: DMatrix::zeros(dim, dim),
            copar_dim: 0,
            hand: Hand::Left,
        }
    }

    /// The constant channel returning `state` regardless of its input.
    pub fn constant(dom_dim: usize, state: &GaussState) -> Self {
        Self {
            a: DMatrix::zeros(state.dim(), dom_dim),
            b: state.mean.clone(),
            noise: state.cov.clone(),
            copar_dim: 0,
            hand: Hand::Left,
        }
    }

    pub(crate) fn from_parts(a: DMatrix<f64>, b: DVector<f64>, noise: DMatrix<f64>, copar_dim: usize, hand: Hand) -> Self {
        Self { a, b, noise: symmetrize(&noise), copar_dim, hand }
    }

    /// Adds `eps · I` to the noise.
    pub fn with_ridge(&self, eps: f64) -> Self {
        let n = self.cod_dim();
        Self { noise: &self.noise + DMatrix::identity(n, n) * eps, ..self.clone() }
    }

    /// Same channel with its noise scaled by `factor`.
    pub fn scale_noise(&self, factor: f64) -> Self {
        Self { noise: &self.noise * factor, ..self.clone() }
    }

    pub fn dom_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn cod_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn copar_dim(&self) -> usize {
        self.copar_dim
    }

    pub fn out_dim(&self) -> usize {
        self.cod_dim() - self.copar_dim
    }

    pub fn hand(&self) -> Hand {
        self.hand
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn out_range(&self) -> Range<usize> {
        match self.hand {
            Hand::Left => self.copar_dim..self.cod_dim(),
            Hand::Right => 0..self.out_dim(),
        }
    }

    pub fn copar_range(&self) -> Range<usize> {
        match self.hand {
            Hand::Left => 0..self.copar_dim,
            Hand::Right => self.out_dim()..self.cod_dim(),
        }
    }

    /// The output law at input `x`.
    pub fn at(&self, x: &DVector<f64>) -> Result<GaussState> {
        if x.len() != self.dom_dim() {
            return Err(Error::Shape(format!(
                "input has dimension {} but the channel expects {}",
                x.len(),
                self.dom_dim()
            )));
        }
        Ok(GaussState { mean: &self.a * x + &self.b, cov: self.noise.clone() })
    }

    /// Largest absolute entrywise difference of `(A, b, noise)`.
    pub fn max_abs_diff(&self, other: &GaussChannel) -> Result<f64> {
        if self.a.shape() != other.a.shape() {
            return Err(Error::Shape("cannot compare channels of different shapes".into()));
        }
        let da = (&self.a - &other.a).abs().max();
        let db = (&self.b - &other.b).abs().max();
        let dn = (&self.noise - &other.noise).abs().max();
        Ok(da.max(db).max(dn))
    }
}

/// Pushforward of a Gaussian through an affine-Gaussian channel.
pub fn g_push(c: &GaussChannel, s: &GaussState) -> Result<GaussState> {
    if s.dim() != c.dom_dim() {
        return Err(Error::Shape(format!(
            "state has dimension {} but the channel expects {}",
            s.dim(),
            c.dom_dim()
        )));
    }
    let mean = &c.a * &s.mean + &c.b;
    let cov = &c.a * &s.cov * c.a.transpose() + &c.noise;
    Ok(GaussState::from_parts(mean, cov))
}

/// Discards the coparameter block.
pub fn g_discard(c: &GaussChannel) -> GaussChannel {
    let r = c.out_range();
    let n = r.len();
    GaussChannel {
        a: c.a.rows(r.start, n).into_owned(),
        b: c.b.rows(r.start, n).into_owned(),
        noise: c.noise.view((r.start, r.start), (n, n)).into_owned(),
        copar_dim: 0,
        hand: Hand::Left,
    }
}

/// Marginalizing composite `d ∘ c` of the discarded channels.
pub fn g_compose(d: &GaussChannel, c: &GaussChannel) -> Result<GaussChannel> {
    let (c, d) = (g_discard(c), g_discard(d));
    if c.cod_dim() != d.dom_dim() {
        return Err(Error::Shape(format!(
            "cannot compose: output dimension {} vs input dimension {}",
            c.cod_dim(),
            d.dom_dim()
        )));
    }
    let a = &d.a * &c.a;
    let b = &d.a * &c.b + &d.b;
    let noise = &d.a * &c.noise * d.a.transpose() + &d.noise;
    Ok(GaussChannel::from_parts(a, b, noise, 0, Hand::Left))
}

/// Copy-composite: the joint law of `c`'s full codomain and `d` applied to `c`'s output.
///
/// Left-handed results are laid out `[c-codomain; d-codomain]` with coparameter
/// `c-codomain ⊕ d-copar`; right-handed results `[d-codomain; c-codomain]`.
pub fn g_copy_compose(d: &GaussChannel, c: &GaussChannel) -> Result<GaussChannel> {
    if c.hand != d.hand {
        return Err(Error::Shape("cannot copy-compose channels of different handedness".into()));
    }
    if c.out_dim() != d.dom_dim() {
        return Err(Error::Shape(format!(
            "cannot copy-compose: output dimension {} vs input dimension {}",
            c.out_dim(),
            d.dom_dim()
        )));
    }
    let r = c.out_range();
    let sel = selection(r.clone(), c.cod_dim());
    let ds = &d.a * &sel;
    let a2 = &ds * &c.a;
    let b2 = &ds * &c.b + &d.b;
    let c21 = &ds * &c.noise;
    let c22 = &ds * &c.noise * ds.transpose() + &d.noise;
    let (n1, n2) = (c.cod_dim(), d.cod_dim());
    let mut a = DMatrix::zeros(n1 + n2, c.dom_dim());
    let mut b = DVector::zeros(n1 + n2);
    let mut noise = DMatrix::zeros(n1 + n2, n1 + n2);
    let (o1, o2) = match c.hand {
        Hand::Left => (0, n1),
        Hand::Right => (n2, 0),
    };
    a.rows_mut(o1, n1).copy_from(&c.a);
    a.rows_mut(o2, n2).copy_from(&a2);
    b.rows_mut(o1, n1).copy_from(&c.b);
    b.rows_mut(o2, n2).copy_from(&b2);
    noise.view_mut((o1, o1), (n1, n1)).copy_from(&c.noise);
    noise.view_mut((o2, o2), (n2, n2)).copy_from(&c22);
    noise.view_mut((o2, o1), (n2, n1)).copy_from(&c21);
    noise.view_mut((o1, o2), (n1, n2)).copy_from(&c21.transpose());
    let copar_dim = n1 + d.copar_dim;
    Ok(GaussChannel::from_parts(a, b, noise, copar_dim, c.hand))
}

/// Tensor `c1 ⊗ c2`: domain `[x1; x2]`, coparameter `[m1; m2]`, output `[y1; y2]`.
pub fn g_tensor(c1: &GaussChannel, c2: &GaussChannel) -> Result<GaussChannel> {
    if c1.hand != c2.hand {
        return Err(Error::Shape("cannot tensor channels of different handedness".into()));
    }
    let (n1, n2) = (c1.cod_dim(), c2.cod_dim());
    let a = block_diag(&c1.a, &c2.a);
    let b = stack_vectors(&[&c1.b, &c2.b]);
    let noise = block_diag(&c1.noise, &c2.noise);
    // position in the stacked [c1-cod; c2-cod] of each target coordinate
    let pick = |r: Range<usize>, off: usize| r.map(move |i| i + off);
    let perm: Vec<usize> = match c1.hand {
        Hand::Left => pick(c1.copar_range(), 0)
            .chain(pick(c2.copar_range(), n1))
            .chain(pick(c1.out_range(), 0))
            .chain(pick(c2.out_range(), n1))
            .collect(),
        Hand::Right => pick(c1.out_range(), 0)
            .chain(pick(c2.out_range(), n1))
            .chain(pick(c1.copar_range(), 0))
            .chain(pick(c2.copar_range(), n1))
            .collect(),
    };
    debug_assert_eq!(perm.len(), n1 + n2);
    let a = a.select_rows(&perm);
    let b = DVector::from_iterator(perm.len(), perm.iter().map(|&i| b[i]));
    let noise = noise.select_rows(&perm).select_columns(&perm);
    Ok(GaussChannel::from_parts(a, b, noise, c1.copar_dim + c2.copar_dim, c1.hand))
}

/// Conjugate Bayesian inversion of `c` with respect to `prior`.
///
/// Returns the right-handed backward channel `y ↦ N(μ(y), Σ)` on `[x; m]`
/// obtained by conditioning the joint of `(x, m, y)` on the output `y`.
pub fn g_invert(c: &GaussChannel, prior: &GaussState) -> Result<GaussChannel> {
    let dx = c.dom_dim();
    if prior.dim() != dx {
        return Err(Error::Shape(format!(
            "prior has dimension {} but the channel expects {dx}",
            prior.dim()
        )));
    }
    let (mean, cov) = joint_with_input(c, prior);
    let u_idx: Vec<usize> = (0..dx).chain(c.copar_range().map(|i| i + dx)).collect();
    let y_idx: Vec<usize> = c.out_range().map(|i| i + dx).collect();
    let c_uu = cov.select_rows(&u_idx).select_columns(&u_idx);
    let c_uy = cov.select_rows(&u_idx).select_columns(&y_idx);
    let c_yy = cov.select_rows(&y_idx).select_columns(&y_idx);
    let m_u = DVector::from_iterator(u_idx.len(), u_idx.iter().map(|&i| mean[i]));
    let m_y = DVector::from_iterator(y_idx.len(), y_idx.iter().map(|&i| mean[i]));
    let chol = Cholesky::new(c_yy).ok_or_else(|| {
        Error::Singular(format!(
            "output block (codomain coordinates {:?}) of the joint covariance is singular",
            c.out_range()
        ))
    })?;
    // K = C_uy C_yy^{-1}
    let gain = chol.solve(&c_uy.transpose()).transpose();
    let b = &m_u - &gain * &m_y;
    let noise = validate_psd(&c_uu - &gain * c_uy.transpose(), "posterior covariance")?;
    Ok(GaussChannel { a: gain, b, noise, copar_dim: c.copar_dim, hand: Hand::Right })
}

/// Mean and covariance of `(x, c(x))` for `x ~ prior`, laid out `[x; codomain]`.
pub fn joint_with_input(c: &GaussChannel, prior: &GaussState) -> (DVector<f64>, DMatrix<f64>) {
    let dx = c.dom_dim();
    let n = c.cod_dim();
    let mean = stack_vectors(&[&prior.mean, &(&c.a * &prior.mean + &c.b)]);
    let pa = &prior.cov * c.a.transpose();
    let mut cov = DMatrix::zeros(dx + n, dx + n);
    cov.view_mut((0, 0), (dx, dx)).copy_from(&prior.cov);
    cov.view_mut((0, dx), (dx, n)).copy_from(&pa);
    cov.view_mut((dx, 0), (n, dx)).copy_from(&pa.transpose());
    cov.view_mut((dx, dx), (n, n)).copy_from(&(&c.a * &pa + &c.noise));
    (mean, symmetrize(&cov))
}

/// Closed-form `D_KL(p, q)`; `+∞` when `p` is degenerate.
pub fn g_kl(p: &GaussState, q: &GaussState) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Shape("g_kl: dimension mismatch".into()));
    }
    let cq = chol(&q.cov, "second argument of g_kl")?;
    let Some(cp) = Cholesky::new(p.cov.clone()) else {
        return Ok(f64::INFINITY);
    };
    let k = p.dim() as f64;
    let trace = cq.solve(&p.cov).trace();
    let delta = &p.mean - &q.mean;
    let maha = delta.dot(&cq.solve(&delta));
    let v = 0.5 * (trace + maha - k + log_det(&cq) - log_det(&cp));
    Ok(v.max(0.0))
}

/// Differential entropy `½ ln det(2πe Σ)`.
pub fn g_entropy(s: &GaussState) -> Result<f64> {
    let c = chol(&s.cov, "g_entropy")?;
    Ok(0.5 * (s.dim() as f64 * (LN_2PI + 1.0) + log_det(&c)))
}

/// Multivariate normal log-density.
pub fn g_logpdf(s: &GaussState, x: &DVector<f64>) -> Result<f64> {
    if x.len() != s.dim() {
        return Err(Error::Shape("g_logpdf: dimension mismatch".into()));
    }
    let c = chol(&s.cov, "g_logpdf")?;
    let d = x - &s.mean;
    Ok(-0.5 * (s.dim() as f64 * LN_2PI + log_det(&c) + d.dot(&c.solve(&d))))
}

/// `E_{x ~ q}[log p(x)]` in closed form.
pub fn expected_logpdf(p: &GaussState, q: &GaussState) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Shape("expected_logpdf: dimension mismatch".into()));
    }
    let c = chol(&p.cov, "expected_logpdf")?;
    let d = &q.mean - &p.mean;
    let quad = d.dot(&c.solve(&d)) + c.solve(&q.cov).trace();
    Ok(-0.5 * (p.dim() as f64 * LN_2PI + log_det(&c) + quad))
}

/// `E_{x ~ s}[f(x)]` by the symmetric `2n`-point rule, exact for polynomials of degree ≤ 3.
pub fn gaussian_expectation<F>(s: &GaussState, mut f: F) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let n = s.dim();
    if n == 0 {
        return f(&s.mean);
    }
    let root = psd_sqrt(&s.cov);
    let scale = (n as f64).sqrt();
    let mut acc = 0.0;
    for i in 0..n {
        let step = root.column(i) * scale;
        acc += f(&(&s.mean + &step))?;
        acc += f(&(&s.mean - &step))?;
    }
    Ok(acc / (2 * n) as f64)
}

pub(crate) fn chol(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Singular(format!("{what}: covariance is not positive definite")))
}

pub(crate) fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&chol(m, what)?.inverse()))
}

/// `L` with `L Lᵀ = m` for symmetric PSD `m`.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut root = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        root.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    root
}

/// Checks symmetry and positive semidefiniteness, clamping roundoff-level negative eigenvalues.
pub(crate) fn validate_psd(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::NotPsd(format!("{what} is not square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPsd(format!("{what} has non-finite entries")));
    }
    let asym = (&m - m.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotPsd(format!("{what} is not symmetric (max asymmetry {asym:e})")));
    }
    let m = symmetrize(&m);
    if m.is_empty() {
        return Ok(m);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL {
        return Err(Error::NotPsd(format!("{what} has eigenvalue {min:e} below -{PSD_TOL:e}")));
    }
    if min < 0.0 {
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        return Ok(symmetrize(&(v * DMatrix::from_diagonal(&clamped) * v.transpose())));
    }
    Ok(m)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

pub(crate) fn stack_vectors(parts: &[&DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}

/// The `range.len() × n` matrix selecting `range` out of `n` coordinates.
pub(crate) fn selection(range: Range<usize>, n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(range.len(), n);
    for (i, j) in range.enumerate() {
        s[(i, j)] = 1.0;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    fn scalar(a: f64, b: f64, noise: f64) -> GaussChannel {
        GaussChannel::plain(DMatrix::from_element(1, 1, a), DVector::from_element(1, b), DMatrix::from_element(1, 1, noise))
            .unwrap()
    }

    fn s1(mean: f64, var: f64) -> GaussState {
        GaussState::from_slices(&[mean], &[var]).unwrap()
    }

    #[test]
    fn psd_validation() {
        assert!(GaussState::from_slices(&[0.0, 0.0], &[1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(GaussState::from_slices(&[0.0], &[-1e-3]).is_err());
        let s = GaussState::from_slices(&[0.0], &[-1e-12]).unwrap();
        assert_eq!(s.cov()[(0, 0)], 0.0);
    }

    #[test]
    fn push_examples() {
        let s = GaussState::from_slices(&[1.0, 2.0], &[2.0, 0.3, 0.3, 1.0]).unwrap();
        assert_eq!(g_push(&GaussChannel::identity(2), &s).unwrap(), s);
        let k = GaussChannel::constant(2, &s1(3.0, 0.25));
        assert_eq!(g_push(&k, &s).unwrap(), s1(3.0, 0.25));
        let out = g_push(&scalar(2.0, 1.0, 0.5), &s1(0.0, 1.0)).unwrap();
        assert_eq!(out, s1(1.0, 4.5));
    }

    #[test]
    fn copy_compose_scalar_chain() {
        let c = scalar(1.0, 0.0, 1.0);
        let d = scalar(2.0, 0.0, 1.0);
        let j = g_copy_compose(&d, &c).unwrap();
        let out = g_push(&j, &GaussState::from_parts(DVector::zeros(1), DMatrix::zeros(1, 1))).unwrap();
        assert_eq!(out.cov().as_slice(), &[1.0, 2.0, 2.0, 5.0]);
        assert_eq!(j.copar_dim(), 1);
        let disc = g_discard(&j);
        assert!(disc.max_abs_diff(&g_compose(&d, &c).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn copy_compose_identity_duplicates() {
        let c = scalar(0.5, 1.0, 2.0);
        let j = g_copy_compose(&GaussChannel::identity(1), &c).unwrap();
        let n = j.noise();
        assert_eq!((n[(0, 0)], n[(0, 1)], n[(1, 1)]), (2.0, 2.0, 2.0));
    }

    #[test]
    fn invert_scalar_conjugate() {
        let back = g_invert(&scalar(1.0, 0.0, 1.0), &s1(0.0, 1.0)).unwrap();
        assert!((back.a()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(back.b()[0].abs() < 1e-15);
        assert!((back.noise()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invert_identity_and_singular_output() {
        let back = g_invert(&GaussChannel::identity(2), &GaussState::standard(2)).unwrap();
        assert!(back.max_abs_diff(&GaussChannel { hand: Hand::Right, ..GaussChannel::identity(2) }).unwrap() < 1e-12);
        let ridge = g_invert(&GaussChannel::identity(1).with_ridge(1e-3), &s1(0.0, 1.0)).unwrap();
        assert!((ridge.a()[(0, 0)] - 1.0 / 1.001).abs() < 1e-12);
        let point = GaussState::from_parts(DVector::zeros(1), DMatrix::zeros(1, 1));
        assert!(matches!(g_invert(&GaussChannel::identity(1), &point), Err(Error::Singular(_))));
    }

    #[test]
    fn kl_entropy_logpdf_values() {
        assert_eq!(g_kl(&s1(0.3, 2.0), &s1(0.3, 2.0)).unwrap(), 0.0);
        assert!((g_kl(&s1(1.0, 1.0), &s1(0.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let h = g_entropy(&s1(0.0, 1.0)).unwrap();
        assert!((h - 0.5 * (2.0 * PI * std::f64::consts::E).ln()).abs() < 1e-14);
        assert!((h - 1.41894).abs() < 1e-5);
        assert!((g_entropy(&s1(0.0, 4.0)).unwrap() - h - LN_2).abs() < 1e-14);
        let lp = g_logpdf(&s1(0.0, 1.0), &DVector::zeros(1)).unwrap();
        assert!((lp + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!(matches!(g_entropy(&s1(0.0, 0.0)), Err(Error::Singular(_))));
    }

    #[test]
    fn entropy_is_additive_over_products() {
        let a = GaussState::from_slices(&[0.0, 1.0], &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let b = s1(3.0, 0.7);
        let joint = a.product(&b);
        let lhs = g_entropy(&joint).unwrap();
        let rhs = g_entropy(&a).unwrap() + g_entropy(&b).unwrap();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn sigma_points_are_exact_for_quadratics() {
        let s = GaussState::from_slices(&[1.0, -1.0], &[2.0, 0.3, 0.3, 0.5]).unwrap();
        // φ(x) = x0² + 3 x0 x1 - x1 + 2
        let v = gaussian_expectation(&s, |x| Ok(x[0] * x[0] + 3.0 * x[0] * x[1] - x[1] + 2.0)).unwrap();
        let expected = (2.0 + 1.0) + 3.0 * (0.3 + -1.0) + 1.0 + 2.0;
        assert!((v - expected).abs() < 1e-13);
    }
}
