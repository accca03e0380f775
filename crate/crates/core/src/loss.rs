//! Losses as state-dependent effects, and the KL / MLE / FE / LFE loss models.
//!
//! Densities are taken against counting measure for finite spaces and Lebesgue
//! measure for Euclidean ones. Forward densities `p_c(m, y | x)` use the
//! forward channel's `(M, Y)` layout; backward distributions use `(X, M)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::discrete::{expect, kl_divergence, CoparKernel, Dist};
use crate::error::{Error, Result};
use crate::gaussian::{
    block_diag, expected_logpdf, g_entropy, g_kl, g_logpdf, gaussian_expectation, spd_inverse, GaussChannel,
    GaussState,
};
use crate::lens::{instance_mismatch, BayesLens, Channel, Obs, SpaceSig, State};

/// Evaluation contract of a loss: `(prior, observation) ↦ value`.
pub type LossEval = Arc<dyn Fn(&State, &Obs) -> Result<f64> + Send + Sync>;

/// A loss `Y -[X]-> I`: an effect on observations indexed by priors on `X`.
///
/// Discrete losses take values in `[0, +∞]`. Gaussian log-likelihood losses
/// are differences of log-densities and may be negative.
#[derive(Clone)]
pub struct LossFn {
    prior_space: SpaceSig,
    obs_space: SpaceSig,
    eval: LossEval,
}

impl fmt::Debug for LossFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LossFn({} -[{}]-> I)", self.obs_space, self.prior_space)
    }
}

impl LossFn {
    pub fn new(prior_space: SpaceSig, obs_space: SpaceSig, eval: LossEval) -> Self {
        Self { prior_space, obs_space, eval }
    }

    pub fn zero(prior_space: SpaceSig, obs_space: SpaceSig) -> Self {
        Self::constant(prior_space, obs_space, 0.0)
    }

    pub fn constant(prior_space: SpaceSig, obs_space: SpaceSig, value: f64) -> Self {
        Self::new(prior_space, obs_space, Arc::new(move |_, _| Ok(value)))
    }

    pub fn prior_space(&self) -> &SpaceSig {
        &self.prior_space
    }

    pub fn obs_space(&self) -> &SpaceSig {
        &self.obs_space
    }

    pub fn eval(&self, prior: &State, obs: &Obs) -> Result<f64> {
        if !prior.space().matches(&self.prior_space) {
            return Err(Error::Shape(format!("loss expects a prior on {}, got {}", self.prior_space, prior.space())));
        }
        if !self.obs_space.contains(obs) {
            return Err(Error::Shape(format!("observation {obs} is not a point of {}", self.obs_space)));
        }
        (self.eval)(prior, obs)
    }

    /// Pointwise sum.
    pub fn add(&self, other: &LossFn) -> Result<LossFn> {
        if !self.prior_space.matches(&other.prior_space) || !self.obs_space.matches(&other.obs_space) {
            return Err(Error::Shape("cannot add losses of different types".into()));
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(LossFn::new(self.prior_space.clone(), self.obs_space.clone(), Arc::new(move |p, y| Ok(a.eval(p, y)? + b.eval(p, y)?))))
    }
}

/// The four built-in loss models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossModelTag {
    Kl,
    Mle,
    Fe,
    Lfe,
}

impl LossModelTag {
    pub const ALL: [LossModelTag; 4] = [LossModelTag::Kl, LossModelTag::Mle, LossModelTag::Fe, LossModelTag::Lfe];
}

impl fmt::Display for LossModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossModelTag::Kl => "KL",
            LossModelTag::Mle => "MLE",
            LossModelTag::Fe => "FE",
            LossModelTag::Lfe => "LFE",
        })
    }
}

impl FromStr for LossModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "KL" => Ok(LossModelTag::Kl),
            "MLE" => Ok(LossModelTag::Mle),
            "FE" => Ok(LossModelTag::Fe),
            "LFE" => Ok(LossModelTag::Lfe),
            _ => Err(Error::Usage(format!("unknown loss model {s:?} (expected KL, MLE, FE or LFE)"))),
        }
    }
}

/// The loss of `model` for lens `l`.
pub fn model_loss(model: LossModelTag, l: &BayesLens) -> Result<LossFn> {
    match model {
        LossModelTag::Kl => Ok(kl_loss(l)),
        LossModelTag::Mle => Ok(mle_loss(l)),
        LossModelTag::Fe => Ok(fe_loss(l)),
        LossModelTag::Lfe => lfe_loss(l),
    }
}

fn lens_loss(l: &BayesLens, f: impl Fn(&BayesLens, &State, &Obs) -> Result<f64> + Send + Sync + 'static) -> LossFn {
    let lens = l.clone();
    LossFn::new(l.dom(), l.obs(), Arc::new(move |p, y| f(&lens, p, y)))
}

fn unsupported(y: &Obs) -> Error {
    Error::Unsupported(format!("observation {y} has zero mass under the prior predictive"))
}

/// Row `y` of the backward channel of a discrete lens, laid out `(x, m)`.
fn discrete_posterior(l: &BayesLens, prior: &State, y: usize) -> Result<(CoparKernel, Vec<f64>)> {
    let Channel::Discrete(b) = l.backward(prior)? else { return Err(instance_mismatch("backward")) };
    let row = b.joint().row(y).to_vec();
    Ok((b, row))
}

fn discrete_parts<'a>(l: &'a BayesLens, prior: &'a State) -> Result<(&'a CoparKernel, &'a Dist)> {
    match (l.fwd(), prior) {
        (Channel::Discrete(k), State::Discrete(pi)) => Ok((k, pi)),
        _ => Err(instance_mismatch("discrete loss")),
    }
}

fn gaussian_parts<'a>(l: &'a BayesLens, prior: &'a State) -> Result<(&'a GaussChannel, &'a GaussState)> {
    match (l.fwd(), prior) {
        (Channel::Gaussian(c), State::Gaussian(pi)) => Ok((c, pi)),
        _ => Err(instance_mismatch("Gaussian loss")),
    }
}

fn gaussian_obs(y: &Obs) -> Result<&DVector<f64>> {
    match y {
        Obs::Gaussian(v) => Ok(v),
        Obs::Discrete(_) => Err(instance_mismatch("observation")),
    }
}

fn discrete_obs(y: &Obs) -> Result<usize> {
    match y {
        Obs::Discrete(i) => Ok(*i),
        Obs::Gaussian(_) => Err(instance_mismatch("observation")),
    }
}

/// Relative entropy from the lens's posterior to the exact posterior.
pub fn kl_loss(l: &BayesLens) -> LossFn {
    lens_loss(l, |l, prior, y| match prior {
        State::Discrete(_) => {
            let yi = discrete_obs(y)?;
            let (_, q) = discrete_posterior(l, prior, yi)?;
            let (exact, mask) = l.fwd().invert(prior)?;
            if !mask.is_some_and(|m| m.is_supported(yi)) {
                return Err(unsupported(y));
            }
            Ok(kl_divergence(&q, exact.as_discrete().expect("discrete").joint().row(yi)))
        }
        State::Gaussian(_) => {
            let v = gaussian_obs(y)?;
            let q = l.backward(prior)?.as_gaussian().expect("gaussian").at(v)?;
            let exact = l.fwd().invert(prior)?.0.as_gaussian().expect("gaussian").at(v)?;
            let same = (q.mean() - exact.mean()).amax() == 0.0 && (q.cov() - exact.cov()).amax() == 0.0;
            if same {
                // covers degenerate posteriors, where the density formula is undefined
                return Ok(0.0);
            }
            g_kl(&q, &exact)
        }
    })
}

/// Negative log prior-predictive density of the observation.
pub fn mle_loss(l: &BayesLens) -> LossFn {
    lens_loss(l, |l, prior, y| match (l.fwd().push(prior)?, y) {
        (State::Discrete(p), Obs::Discrete(i)) => Ok(-p.prob(*i).ln()),
        (State::Gaussian(p), Obs::Gaussian(v)) => Ok(-g_logpdf(&p, v)?),
        _ => Err(instance_mismatch("mle_loss")),
    })
}

/// Free energy: `kl_loss + mle_loss` pointwise.
pub fn fe_loss(l: &BayesLens) -> LossFn {
    let (kl, mle) = (kl_loss(l), mle_loss(l));
    LossFn::new(l.dom(), l.obs(), Arc::new(move |p, y| Ok(kl.eval(p, y)? + mle.eval(p, y)?)))
}

/// Free energy in marginalization-free form:
/// `D(q, π⊗1) − E_q[log p_c(m, y | x)]` with `q` the lens posterior at `y`.
pub fn fe_joint_form(l: &BayesLens) -> LossFn {
    lens_loss(l, |l, prior, y| match prior {
        State::Discrete(_) => {
            let (fwd, pi) = discrete_parts(l, prior)?;
            let yi = discrete_obs(y)?;
            let (_, q) = discrete_posterior(l, prior, yi)?;
            let nm = fwd.copar().size();
            let mut total = 0.0;
            for (i, &w) in q.iter().enumerate().filter(|(_, w)| **w > 0.0) {
                let (x, m) = (i / nm, i % nm);
                let (px, lik) = (pi.prob(x), fwd.entry(x, m, yi));
                if px <= 0.0 || lik <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                total += w * (w.ln() - px.ln() - lik.ln());
            }
            Ok(total)
        }
        State::Gaussian(pi) => {
            let (fwd, _) = gaussian_parts(l, prior)?;
            let v = gaussian_obs(y)?;
            let q = l.backward(prior)?.as_gaussian().expect("gaussian").at(v)?;
            let q_x = q.marginal(0..pi.dim())?;
            let to_prior = -g_entropy(&q)? - expected_logpdf(pi, &q_x)?;
            Ok(to_prior + expected_neg_loglik(fwd, v, &q)?)
        }
    })
}

/// `E_{z ~ q}[−log p_c(m, y | x)]` for `z = (x, m)`, via the residual `w = Gz + r`.
fn expected_neg_loglik(fwd: &GaussChannel, y: &DVector<f64>, q: &GaussState) -> Result<f64> {
    let (g, r) = residual_map(fwd, y)?;
    let w = GaussState::from_parts(&g * q.mean() + &r, &g * q.cov() * g.transpose());
    let noise = GaussState::from_parts(DVector::zeros(fwd.cod_dim()), fwd.noise().clone());
    Ok(-expected_logpdf(&noise, &w)?)
}

/// Affine map `(x, m) ↦ [m; y] − (A x + b)`, returned as `(G, r)` with `G = [−A | E_m]`.
fn residual_map(fwd: &GaussChannel, y: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, k, p) = (fwd.dom_dim(), fwd.copar_dim(), fwd.cod_dim());
    if y.len() != fwd.out_dim() {
        return Err(Error::Shape(format!("observation has dimension {} but the channel outputs {}", y.len(), fwd.out_dim())));
    }
    let mut g = DMatrix::zeros(p, n + k);
    g.view_mut((0, 0), (p, n)).copy_from(&(-fwd.a()));
    for i in 0..k {
        g[(i, n + i)] = 1.0;
    }
    let mut r = -fwd.b().clone();
    for (i, v) in y.iter().enumerate() {
        r[k + i] += v;
    }
    Ok((g, r))
}

/// Energy `E(x, m; y) = −log p_c(m, y | x) − log p_π(x)` of a Gaussian lens at `z = (x, m)`.
pub fn gaussian_energy(fwd: &GaussChannel, prior: &GaussState, y: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
    let n = fwd.dom_dim();
    if z.len() != n + fwd.copar_dim() {
        return Err(Error::Shape("energy point must have dimension dom + copar".into()));
    }
    let (g, r) = residual_map(fwd, y)?;
    let noise = GaussState::from_parts(DVector::zeros(fwd.cod_dim()), fwd.noise().clone());
    let x = z.rows(0, n).into_owned();
    Ok(-g_logpdf(&noise, &(&g * z + r))? - g_logpdf(prior, &x)?)
}

/// `(E_q[energy], S[q])` for the lens posterior `q` at `y`; their difference is the free energy.
pub fn energy_entropy_decomp(l: &BayesLens, prior: &State, y: &Obs) -> Result<(f64, f64)> {
    match prior {
        State::Discrete(_) => {
            let (fwd, pi) = discrete_parts(l, prior)?;
            let yi = discrete_obs(y)?;
            let (_, q) = discrete_posterior(l, prior, yi)?;
            let nm = fwd.copar().size();
            let energy: Vec<f64> = (0..q.len())
                .map(|i| {
                    let (x, m) = (i / nm, i % nm);
                    -fwd.entry(x, m, yi).ln() - pi.prob(x).ln()
                })
                .collect();
            let entropy = -q.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>();
            Ok((expect(&q, &energy), entropy))
        }
        State::Gaussian(pi) => {
            let (fwd, _) = gaussian_parts(l, prior)?;
            let v = gaussian_obs(y)?;
            let q = l.backward(prior)?.as_gaussian().expect("gaussian").at(v)?;
            let energy = gaussian_expectation(&q, |z| gaussian_energy(fwd, pi, v, z))?;
            Ok((energy, g_entropy(&q)?))
        }
    }
}

/// Laplacian free energy: energy at the posterior mean minus posterior entropy.
pub fn lfe_loss(l: &BayesLens) -> Result<LossFn> {
    if !matches!(l.fwd(), Channel::Gaussian(_)) {
        return Err(Error::Instance("LFE is defined only for Gaussian lenses".into()));
    }
    Ok(lens_loss(l, |l, prior, y| {
        let (fwd, pi) = gaussian_parts(l, prior)?;
        let v = gaussian_obs(y)?;
        let q = l.backward(prior)?.as_gaussian().expect("gaussian").at(v)?;
        Ok(gaussian_energy(fwd, pi, v, q.mean())? - g_entropy(&q)?)
    }))
}

/// Hessian of the energy in `(x, m)`; constant for linear-Gaussian lenses.
///
/// `H = Gᵀ Σ⁻¹ G + diag(P⁻¹, 0)` with `Σ` the forward noise and `P` the prior covariance.
pub fn laplace_hessian(fwd: &GaussChannel, prior: &GaussState) -> Result<DMatrix<f64>> {
    let (g, _) = residual_map(fwd, &DVector::zeros(fwd.out_dim()))?;
    let noise_inv = spd_inverse(fwd.noise(), "forward noise")?;
    let prior_inv = spd_inverse(prior.cov(), "prior covariance")?;
    let lik = g.transpose() * noise_inv * &g;
    Ok(lik + block_diag(&prior_inv, &DMatrix::zeros(fwd.copar_dim(), fwd.copar_dim())))
}

/// Laplace covariance: inverse energy Hessian at the posterior mean.
pub fn laplace_sigma(l: &BayesLens, prior: &State, y: &Obs) -> Result<DMatrix<f64>> {
    let (fwd, pi) = gaussian_parts(l, prior)?;
    if !l.obs().contains(y) {
        return Err(Error::Shape(format!("observation {y} is not a point of {}", l.obs())));
    }
    spd_inverse(&laplace_hessian(fwd, pi)?, "energy Hessian")
}

/// `½ tr(Σ_q H)`, the gap `FE − LFE` for quadratic energies.
pub fn laplace_gap(l: &BayesLens, prior: &State, y: &Obs) -> Result<f64> {
    let (fwd, pi) = gaussian_parts(l, prior)?;
    let v = gaussian_obs(y)?;
    let q = l.backward(prior)?.as_gaussian().expect("gaussian").at(v)?;
    Ok(0.5 * (q.cov() * laplace_hessian(fwd, pi)?).trace())
}

/// Horizontal composite of the losses of games `(c, Lc)` then `(d, Ld)`:
/// `(π, z) ↦ Ld(cπ, z) + E_{y ~ d'_{cπ}(z)}[Lc(π, y)]`.
pub fn loss_compose(ld: &LossFn, lc: &LossFn, d: &BayesLens, c: &BayesLens) -> Result<LossFn> {
    if !lc.prior_space().matches(&c.dom()) || !lc.obs_space().matches(&c.obs()) {
        return Err(Error::Shape("inner loss does not match the inner lens".into()));
    }
    if !ld.prior_space().matches(&d.dom()) || !ld.obs_space().matches(&d.obs()) {
        return Err(Error::Shape("outer loss does not match the outer lens".into()));
    }
    if !c.obs().matches(&d.dom()) {
        return Err(Error::Shape(format!("cannot compose: {} does not match {}", c.obs(), d.dom())));
    }
    let (ld, lc, d, c) = (ld.clone(), lc.clone(), d.clone(), c.clone());
    let (dom, obs) = (c.dom(), d.obs());
    Ok(LossFn::new(
        dom,
        obs,
        Arc::new(move |prior, z| {
            let pushed = c.fwd().push(prior)?;
            let outer = ld.eval(&pushed, z)?;
            let inner = match (d.backward(&pushed)?, z) {
                (Channel::Discrete(b), Obs::Discrete(zi)) => {
                    let weights = out_marginal(&b, *zi);
                    let values = weights
                        .iter()
                        .enumerate()
                        .map(|(y, &w)| if w > 0.0 { lc.eval(prior, &Obs::Discrete(y)) } else { Ok(0.0) })
                        .collect::<Result<Vec<f64>>>()?;
                    expect(&weights, &values)
                }
                (Channel::Gaussian(b), Obs::Gaussian(v)) => {
                    let ys = b.at(v)?.marginal(b.out_range())?;
                    gaussian_expectation(&ys, |y| lc.eval(prior, &Obs::Gaussian(y.clone())))?
                }
                _ => return Err(instance_mismatch("loss_compose")),
            };
            Ok(outer + inner)
        }),
    ))
}

/// Distribution of the non-coparameter output of a kernel at input `a` (coparameter summed out).
pub(crate) fn out_marginal(k: &CoparKernel, a: usize) -> Vec<f64> {
    let (nm, no) = (k.copar().size(), k.out().size());
    (0..no).map(|o| (0..nm).map(|m| k.entry(a, m, o)).sum()).collect()
}

/// Laxator of a loss model for the tensor of lenses `c ⊗ d`, at a joint prior
/// `ω` on `X⊗X'` and an observation `(y, y')`.
///
/// These are the closed forms; the defining contract is
/// `L(c⊗d)_ω(y,y') = L(c)_{ω_X}(y) + L(d)_{ω_X'}(y') + λ`.
pub fn laxator(model: LossModelTag, c: &BayesLens, d: &BayesLens, omega: &State, y: &Obs, y2: &Obs) -> Result<f64> {
    let (wx, wx2) = omega.split(&c.dom(), &d.dom())?;
    let product = wx.product(&wx2)?;
    let fwd = Channel::tensor(c.fwd(), d.fwd())?;
    let yy = Obs::pair(y, y2, &d.obs())?;
    let q = Channel::tensor(&c.backward(&wx)?, &d.backward(&wx2)?)?;
    let log_evidence_ratio = || -> Result<f64> {
        // log p_{(c⊗d)ω}(y,y') − log p_{(c⊗d)(ω_X⊗ω_X')}(y,y')
        Ok(log_density(&fwd.push(omega)?, &yy)? - log_density(&fwd.push(&product)?, &yy)?)
    };
    let prior_ratio = || -> Result<f64> {
        // E_{(x,x') ~ q(y,y')}[log ω_X ω_X' − log ω]
        match (&q, omega, &product, &yy) {
            (Channel::Discrete(k), State::Discrete(w), State::Discrete(p), Obs::Discrete(i)) => {
                let marginal = out_marginal(k, *i);
                let values: Vec<f64> = (0..marginal.len()).map(|x| p.prob(x).ln() - w.prob(x).ln()).collect();
                Ok(expect(&marginal, &values))
            }
            (Channel::Gaussian(k), State::Gaussian(w), State::Gaussian(p), Obs::Gaussian(v)) => {
                let qx = k.at(v)?.marginal(0..w.dim())?;
                Ok(expected_logpdf(p, &qx)? - expected_logpdf(w, &qx)?)
            }
            _ => Err(instance_mismatch("laxator")),
        }
    };
    match model {
        LossModelTag::Mle => Ok(-log_evidence_ratio()?),
        LossModelTag::Fe => prior_ratio(),
        LossModelTag::Kl => Ok(prior_ratio()? + log_evidence_ratio()?),
        LossModelTag::Lfe => {
            let (Channel::Gaussian(k), State::Gaussian(w), State::Gaussian(p), Obs::Gaussian(v)) = (&q, omega, &product, &yy)
            else {
                return Err(Error::Instance("the LFE laxator is defined only for Gaussian lenses".into()));
            };
            let mu = k.at(v)?.mean().rows(0, w.dim()).into_owned();
            Ok(g_logpdf(p, &mu)? - g_logpdf(w, &mu)?)
        }
    }
}

fn log_density(s: &State, y: &Obs) -> Result<f64> {
    match (s, y) {
        (State::Discrete(p), Obs::Discrete(i)) => Ok(p.prob(*i).ln()),
        (State::Gaussian(p), Obs::Gaussian(v)) => g_logpdf(p, v),
        _ => Err(instance_mismatch("density")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{FiniteKernel, FiniteSpace, Hand};
    use crate::lens::{exact_lens, lens_compose, Backward};

    fn bern(p1: f64) -> Vec<f64> {
        vec![1.0 - p1, p1]
    }

    /// A lens on Bool -> Bool whose backward is fixed to `rows` regardless of the prior.
    fn fixed_lens(fwd: Vec<Vec<f64>>, back: Vec<Vec<f64>>) -> BayesLens {
        let s = FiniteSpace::range(2);
        let f = FiniteKernel::from_rows(s.clone(), s.clone(), &fwd).unwrap();
        let b = FiniteKernel::from_rows(s.clone(), s.clone(), &back).unwrap();
        let bwd = Channel::Discrete(CoparKernel::lift(&b, Hand::Right));
        let family: Backward = Arc::new(move |_| Ok(bwd.clone()));
        BayesLens::new(Channel::Discrete(CoparKernel::lift(&f, Hand::Left)), family).unwrap()
    }

    fn dstate(mass: Vec<f64>) -> State {
        State::Discrete(Dist::new(FiniteSpace::range(mass.len()), mass).unwrap())
    }

    #[test]
    fn kl_example_bernoulli_half_vs_quarter() {
        // flat prior, forward with posterior at y=0 equal to Bernoulli(0.25) on x
        let l = fixed_lens(vec![vec![0.6, 0.4], vec![0.2, 0.8]], vec![bern(0.5), bern(0.5)]);
        let prior = dstate(vec![0.5, 0.5]);
        let (exact, _) = l.fwd().invert(&prior).unwrap();
        assert!((exact.as_discrete().unwrap().joint().row(0)[1] - 0.25).abs() < 1e-15);
        let v = kl_loss(&l).eval(&prior, &Obs::Discrete(0)).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn mle_examples() {
        let l = exact_lens(Channel::Discrete(CoparKernel::lift(
            &FiniteKernel::from_rows(FiniteSpace::range(2), FiniteSpace::range(2), &[bern(0.25), bern(0.25)]).unwrap(),
            Hand::Left,
        )))
        .unwrap();
        let v = mle_loss(&l).eval(&dstate(vec![0.5, 0.5]), &Obs::Discrete(1)).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-15);
        let g = exact_lens(Channel::Gaussian(GaussChannel::identity(1))).unwrap();
        let v = mle_loss(&g).eval(&State::Gaussian(GaussState::standard(1)), &Obs::scalar(0.0)).unwrap();
        assert!((v - 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn gaussian_kl_closed_form() {
        let c = GaussChannel::plain(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        // backward y ↦ N(y/2 + 1, 1/2) against the exact N(y/2, 1/2): KL = 1² / (2 · ½) = 1
        let shifted = GaussChannel::new(
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
            0,
            Hand::Right,
        )
        .unwrap();
        let l = BayesLens::new(Channel::Gaussian(c), Arc::new(move |_| Ok(Channel::Gaussian(shifted.clone())))).unwrap();
        let v = kl_loss(&l).eval(&State::Gaussian(GaussState::standard(1)), &Obs::scalar(0.3)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fe_forms_agree_on_fixed_lens() {
        let l = fixed_lens(vec![vec![0.6, 0.4], vec![0.2, 0.8]], vec![bern(0.3), bern(0.9)]);
        let prior = dstate(vec![0.7, 0.3]);
        for y in 0..2 {
            let y = Obs::Discrete(y);
            let fe = fe_loss(&l).eval(&prior, &y).unwrap();
            let joint = fe_joint_form(&l).eval(&prior, &y).unwrap();
            let (e, s) = energy_entropy_decomp(&l, &prior, &y).unwrap();
            assert!((fe - joint).abs() < 1e-12);
            assert!((fe - (e - s)).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupported_observation_is_reported() {
        let l = exact_lens(Channel::Discrete(CoparKernel::identity(FiniteSpace::range(2), Hand::Left))).unwrap();
        let err = kl_loss(&l).eval(&dstate(vec![1.0, 0.0]), &Obs::Discrete(1)).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert_eq!(mle_loss(&l).eval(&dstate(vec![1.0, 0.0]), &Obs::Discrete(1)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn scalar_laplace_sigma_is_half() {
        let c = GaussChannel::plain(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let l = exact_lens(Channel::Gaussian(c)).unwrap();
        let prior = State::Gaussian(GaussState::standard(1));
        let sigma = laplace_sigma(&l, &prior, &Obs::scalar(1.0)).unwrap();
        assert!((sigma[(0, 0)] - 0.5).abs() < 1e-15);
        // exact posterior covariance equals the Laplace covariance, so the gap is dim/2
        let fe = fe_loss(&l).eval(&prior, &Obs::scalar(1.0)).unwrap();
        let lfe = lfe_loss(&l).unwrap().eval(&prior, &Obs::scalar(1.0)).unwrap();
        assert!((fe - lfe - 0.5).abs() < 1e-12);
        assert!((laplace_gap(&l, &prior, &Obs::scalar(1.0)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lfe_rejects_discrete() {
        let l = fixed_lens(vec![bern(0.5), bern(0.5)], vec![bern(0.5), bern(0.5)]);
        assert!(matches!(lfe_loss(&l), Err(Error::Instance(_))));
    }

    #[test]
    fn composing_with_zero_inner_loss_reindexes() {
        let c = fixed_lens(vec![vec![0.6, 0.4], vec![0.2, 0.8]], vec![bern(0.3), bern(0.9)]);
        let d = exact_lens(c.fwd().clone()).unwrap();
        let zero = LossFn::zero(c.dom(), c.obs());
        let ld = mle_loss(&d);
        let composite = loss_compose(&ld, &zero, &d, &c).unwrap();
        let prior = dstate(vec![0.4, 0.6]);
        let pushed = c.fwd().push(&prior).unwrap();
        for z in 0..2 {
            let z = Obs::Discrete(z);
            assert_eq!(composite.eval(&prior, &z).unwrap(), ld.eval(&pushed, &z).unwrap());
        }
    }

    #[test]
    fn kl_of_exact_composite_vanishes() {
        let c = exact_lens(fixed_lens(vec![vec![0.6, 0.4], vec![0.2, 0.8]], vec![bern(0.5), bern(0.5)]).fwd().clone()).unwrap();
        let d = exact_lens(fixed_lens(vec![vec![0.1, 0.9], vec![0.5, 0.5]], vec![bern(0.5), bern(0.5)]).fwd().clone()).unwrap();
        let dc = lens_compose(&d, &c).unwrap();
        let prior = dstate(vec![0.35, 0.65]);
        let composite = loss_compose(&kl_loss(&d), &kl_loss(&c), &d, &c).unwrap();
        for z in 0..2 {
            let z = Obs::Discrete(z);
            assert!(kl_loss(&dc).eval(&prior, &z).unwrap().abs() < 1e-12);
            assert!(composite.eval(&prior, &z).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn laxators_vanish_at_product_priors() {
        let c = exact_lens(fixed_lens(vec![vec![0.6, 0.4], vec![0.2, 0.8]], vec![bern(0.5), bern(0.5)]).fwd().clone()).unwrap();
        let d = fixed_lens(vec![vec![0.1, 0.9], vec![0.5, 0.5]], vec![bern(0.2), bern(0.7)]);
        let a = Dist::new(FiniteSpace::range(2), vec![0.3, 0.7]).unwrap();
        let b = Dist::new(FiniteSpace::range(2), vec![0.6, 0.4]).unwrap();
        let omega = State::Discrete(a.product(&b));
        for model in [LossModelTag::Kl, LossModelTag::Mle, LossModelTag::Fe] {
            let v = laxator(model, &c, &d, &omega, &Obs::Discrete(1), &Obs::Discrete(0)).unwrap();
            assert!(v.abs() < 1e-15, "{model}: {v}");
        }
        assert!(laxator(LossModelTag::Lfe, &c, &d, &omega, &Obs::Discrete(1), &Obs::Discrete(0)).is_err());
    }

    #[test]
    fn tags_round_trip() {
        for t in LossModelTag::ALL {
            assert_eq!(t.to_string().parse::<LossModelTag>().unwrap(), t);
        }
        assert!("nope".parse::<LossModelTag>().is_err());
    }
}
