//! Coparameterized Bayesian lenses over either concrete instance.
//!
//! A lens pairs a left-handed forward channel `X -> M⊗Y` with a prior-indexed
//! family of right-handed backward channels `Y -> X⊗M`. Backward maps are
//! closures rather than tables because priors range over a continuum even in
//! the discrete case. Only simple lenses (diagonal boundary types, matching
//! coparameters) are constructed.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::discrete::{
    bayes_invert, copy_compose_copar, discard_coparam, push, tensor_copar, CoparKernel, Dist, FiniteSpace, Hand,
    SupportMask,
};
use crate::error::{Error, Result};
use crate::gaussian::{g_copy_compose, g_discard, g_invert, g_push, g_tensor, GaussChannel, GaussState};

/// Which concrete category a value lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Instance {
    Discrete,
    Gaussian,
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Instance::Discrete => "discrete",
            Instance::Gaussian => "gaussian",
        })
    }
}

impl std::str::FromStr for Instance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(Instance::Discrete),
            "gaussian" => Ok(Instance::Gaussian),
            other => Err(Error::Usage(format!("unknown instance {other:?} (expected discrete|gaussian)"))),
        }
    }
}

/// The type of a boundary: a finite space or a Euclidean dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpaceSig {
    Discrete(FiniteSpace),
    Gaussian(usize),
}

impl SpaceSig {
    pub fn instance(&self) -> Instance {
        match self {
            SpaceSig::Discrete(_) => Instance::Discrete,
            SpaceSig::Gaussian(_) => Instance::Gaussian,
        }
    }

    pub fn product(&self, other: &SpaceSig) -> Result<SpaceSig> {
        match (self, other) {
            (SpaceSig::Discrete(a), SpaceSig::Discrete(b)) => Ok(SpaceSig::Discrete(FiniteSpace::product(a, b))),
            (SpaceSig::Gaussian(a), SpaceSig::Gaussian(b)) => Ok(SpaceSig::Gaussian(a + b)),
            _ => Err(instance_mismatch("product of boundaries")),
        }
    }

    /// Whether two boundaries have the same points (bracketing ignored).
    pub fn matches(&self, other: &SpaceSig) -> bool {
        match (self, other) {
            (SpaceSig::Discrete(a), SpaceSig::Discrete(b)) => a.same_points(b),
            (SpaceSig::Gaussian(a), SpaceSig::Gaussian(b)) => a == b,
            _ => false,
        }
    }

    /// A default prior: uniform, or standard normal.
    pub fn reference_state(&self) -> State {
        match self {
            SpaceSig::Discrete(s) => State::Discrete(Dist::uniform(s.clone())),
            SpaceSig::Gaussian(n) => State::Gaussian(GaussState::standard(*n)),
        }
    }

    pub fn contains(&self, obs: &Obs) -> bool {
        match (self, obs) {
            (SpaceSig::Discrete(s), Obs::Discrete(i)) => *i < s.size(),
            (SpaceSig::Gaussian(n), Obs::Gaussian(v)) => v.len() == *n,
            _ => false,
        }
    }
}

impl fmt::Display for SpaceSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceSig::Discrete(s) => write!(f, "{s}"),
            SpaceSig::Gaussian(n) => write!(f, "R^{n}"),
        }
    }
}

/// A coparameterized channel in either instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    Discrete(CoparKernel),
    Gaussian(GaussChannel),
}

/// A state (prior) in either instance.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Discrete(Dist),
    Gaussian(GaussState),
}

/// A point observation: an outcome index, or a vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Obs {
    Discrete(usize),
    Gaussian(DVector<f64>),
}

pub(crate) fn instance_mismatch(what: &str) -> Error {
    Error::Instance(format!("{what}: discrete and Gaussian values cannot be mixed"))
}

impl Channel {
    pub fn instance(&self) -> Instance {
        match self {
            Channel::Discrete(_) => Instance::Discrete,
            Channel::Gaussian(_) => Instance::Gaussian,
        }
    }

    pub fn hand(&self) -> Hand {
        match self {
            Channel::Discrete(k) => k.hand(),
            Channel::Gaussian(g) => g.hand(),
        }
    }

    pub fn dom(&self) -> SpaceSig {
        match self {
            Channel::Discrete(k) => SpaceSig::Discrete(k.dom().clone()),
            Channel::Gaussian(g) => SpaceSig::Gaussian(g.dom_dim()),
        }
    }

    pub fn out(&self) -> SpaceSig {
        match self {
            Channel::Discrete(k) => SpaceSig::Discrete(k.out().clone()),
            Channel::Gaussian(g) => SpaceSig::Gaussian(g.out_dim()),
        }
    }

    pub fn copar(&self) -> SpaceSig {
        match self {
            Channel::Discrete(k) => SpaceSig::Discrete(k.copar().clone()),
            Channel::Gaussian(g) => SpaceSig::Gaussian(g.copar_dim()),
        }
    }

    /// Coparameters agree after flattening their bracketing.
    pub fn copar_flat_eq(&self, other: &Channel) -> bool {
        match (self, other) {
            (Channel::Discrete(a), Channel::Discrete(b)) => a.copar().flat_eq(b.copar()),
            (Channel::Gaussian(a), Channel::Gaussian(b)) => a.copar_dim() == b.copar_dim(),
            _ => false,
        }
    }

    pub fn as_discrete(&self) -> Option<&CoparKernel> {
        match self {
            Channel::Discrete(k) => Some(k),
            Channel::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussChannel> {
        match self {
            Channel::Gaussian(g) => Some(g),
            Channel::Discrete(_) => None,
        }
    }

    /// The channel with its coparameter discarded (unit coparameter).
    pub fn discard(&self) -> Channel {
        match self {
            Channel::Discrete(k) => Channel::Discrete(CoparKernel::lift(&discard_coparam(k), k.hand())),
            Channel::Gaussian(g) => Channel::Gaussian(g_discard(g)),
        }
    }

    /// Pushforward of a state through the discarded channel.
    pub fn push(&self, state: &State) -> Result<State> {
        match (self, state) {
            (Channel::Discrete(k), State::Discrete(pi)) => Ok(State::Discrete(push(&discard_coparam(k), pi)?)),
            (Channel::Gaussian(g), State::Gaussian(s)) => Ok(State::Gaussian(g_push(&g_discard(g), s)?)),
            _ => Err(instance_mismatch("push")),
        }
    }

    /// Pushforward through the full joint `copar ⊗ out` codomain.
    pub fn push_joint(&self, state: &State) -> Result<State> {
        match (self, state) {
            (Channel::Discrete(k), State::Discrete(pi)) => Ok(State::Discrete(push(k.joint(), pi)?)),
            (Channel::Gaussian(g), State::Gaussian(s)) => Ok(State::Gaussian(g_push(g, s)?)),
            _ => Err(instance_mismatch("push_joint")),
        }
    }

    /// Horizontal (copy-)composite `g ∘ f`.
    pub fn copy_compose(g: &Channel, f: &Channel) -> Result<Channel> {
        match (g, f) {
            (Channel::Discrete(g), Channel::Discrete(f)) => Ok(Channel::Discrete(copy_compose_copar(g, f)?)),
            (Channel::Gaussian(g), Channel::Gaussian(f)) => Ok(Channel::Gaussian(g_copy_compose(g, f)?)),
            _ => Err(instance_mismatch("copy_compose")),
        }
    }

    pub fn tensor(a: &Channel, b: &Channel) -> Result<Channel> {
        match (a, b) {
            (Channel::Discrete(a), Channel::Discrete(b)) => Ok(Channel::Discrete(tensor_copar(a, b)?)),
            (Channel::Gaussian(a), Channel::Gaussian(b)) => Ok(Channel::Gaussian(g_tensor(a, b)?)),
            _ => Err(instance_mismatch("tensor")),
        }
    }

    /// Exact Bayesian inversion at `prior`; the mask is present for discrete channels.
    pub fn invert(&self, prior: &State) -> Result<(Channel, Option<SupportMask>)> {
        match (self, prior) {
            (Channel::Discrete(k), State::Discrete(pi)) => {
                let (inv, mask) = bayes_invert(k, pi)?;
                Ok((Channel::Discrete(inv), Some(mask)))
            }
            (Channel::Gaussian(g), State::Gaussian(s)) => Ok((Channel::Gaussian(g_invert(g, s)?), None)),
            _ => Err(instance_mismatch("invert")),
        }
    }

    /// Largest entrywise difference after flattening coparameter bracketing.
    pub fn max_abs_diff(&self, other: &Channel) -> Result<f64> {
        match (self, other) {
            (Channel::Discrete(a), Channel::Discrete(b)) => {
                let (ja, jb) = (a.joint(), b.joint());
                if ja.dom().size() != jb.dom().size() || ja.cod().size() != jb.cod().size() {
                    return Err(Error::Shape("cannot compare kernels of different shapes".into()));
                }
                Ok(ja.as_slice().iter().zip(jb.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            }
            (Channel::Gaussian(a), Channel::Gaussian(b)) => a.max_abs_diff(b),
            _ => Err(instance_mismatch("max_abs_diff")),
        }
    }
}

impl State {
    pub fn instance(&self) -> Instance {
        match self {
            State::Discrete(_) => Instance::Discrete,
            State::Gaussian(_) => Instance::Gaussian,
        }
    }

    pub fn space(&self) -> SpaceSig {
        match self {
            State::Discrete(d) => SpaceSig::Discrete(d.space().clone()),
            State::Gaussian(g) => SpaceSig::Gaussian(g.dim()),
        }
    }

    pub fn as_discrete(&self) -> Option<&Dist> {
        match self {
            State::Discrete(d) => Some(d),
            State::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussState> {
        match self {
            State::Gaussian(g) => Some(g),
            State::Discrete(_) => None,
        }
    }

    /// Marginals of a joint state on `left ⊗ right`.
    pub fn split(&self, left: &SpaceSig, right: &SpaceSig) -> Result<(State, State)> {
        match (self, left, right) {
            (State::Discrete(d), SpaceSig::Discrete(l), SpaceSig::Discrete(r)) => {
                let (a, b) = d.split_marginals(l, r)?;
                Ok((State::Discrete(a), State::Discrete(b)))
            }
            (State::Gaussian(g), SpaceSig::Gaussian(l), SpaceSig::Gaussian(r)) => {
                if g.dim() != l + r {
                    return Err(Error::Shape(format!("joint of dimension {} cannot split into {l} + {r}", g.dim())));
                }
                Ok((State::Gaussian(g.marginal(0..*l)?), State::Gaussian(g.marginal(*l..l + r)?)))
            }
            _ => Err(instance_mismatch("split")),
        }
    }

    /// Independent product of two states.
    pub fn product(&self, other: &State) -> Result<State> {
        match (self, other) {
            (State::Discrete(a), State::Discrete(b)) => Ok(State::Discrete(a.product(b))),
            (State::Gaussian(a), State::Gaussian(b)) => Ok(State::Gaussian(a.product(b))),
            _ => Err(instance_mismatch("product")),
        }
    }
}

impl Obs {
    pub fn instance(&self) -> Instance {
        match self {
            Obs::Discrete(_) => Instance::Discrete,
            Obs::Gaussian(_) => Instance::Gaussian,
        }
    }

    /// The observation `(a, b)` on a product whose right factor is `right`.
    pub fn pair(a: &Obs, b: &Obs, right: &SpaceSig) -> Result<Obs> {
        match (a, b, right) {
            (Obs::Discrete(i), Obs::Discrete(j), SpaceSig::Discrete(s)) => Ok(Obs::Discrete(i * s.size() + j)),
            (Obs::Gaussian(u), Obs::Gaussian(v), SpaceSig::Gaussian(_)) => {
                Ok(Obs::Gaussian(DVector::from_iterator(u.len() + v.len(), u.iter().chain(v.iter()).copied())))
            }
            _ => Err(instance_mismatch("pair")),
        }
    }

    pub fn scalar(v: f64) -> Obs {
        Obs::Gaussian(DVector::from_element(1, v))
    }
}

impl fmt::Display for Obs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Obs::Discrete(i) => write!(f, "#{i}"),
            Obs::Gaussian(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                write!(f, "[{}]", parts.join(","))
            }
        }
    }
}

/// A prior-indexed family of values over some state space.
pub type PriorFamily<T> = Arc<dyn Fn(&State) -> Result<T> + Send + Sync>;

/// Backward half of a lens: prior ↦ channel `Y -> X⊗M`.
pub type Backward = PriorFamily<Channel>;

/// A simple coparameterized Bayesian lens `X -[M]-> Y`.
#[derive(Clone)]
pub struct BayesLens {
    fwd: Channel,
    bwd: Backward,
}

impl fmt::Debug for BayesLens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BayesLens").field("fwd", &self.fwd).finish_non_exhaustive()
    }
}

impl BayesLens {
    /// Builds a lens, rejecting non-simple ones.
    ///
    /// Simplicity is checked by evaluating the backward family at the
    /// reference prior of the domain: the result must be a right-handed
    /// channel `Y -> X⊗M` with the forward coparameter `M` (up to bracketing).
    pub fn new(fwd: Channel, bwd: Backward) -> Result<Self> {
        if fwd.hand() != Hand::Left {
            return Err(Error::NotSimple("forward channels must be left-handed".into()));
        }
        let lens = Self { fwd, bwd };
        let reference = lens.dom().reference_state();
        lens.backward(&reference)?;
        Ok(lens)
    }

    /// As [`BayesLens::new`] without evaluating the family at the reference
    /// prior; for families defined only on some priors.
    pub(crate) fn new_partial(fwd: Channel, bwd: Backward) -> Result<Self> {
        if fwd.hand() != Hand::Left {
            return Err(Error::NotSimple("forward channels must be left-handed".into()));
        }
        Ok(Self { fwd, bwd })
    }

    pub fn fwd(&self) -> &Channel {
        &self.fwd
    }

    pub fn instance(&self) -> Instance {
        self.fwd.instance()
    }

    /// The prior/state space `X`.
    pub fn dom(&self) -> SpaceSig {
        self.fwd.dom()
    }

    /// The observation space `Y`.
    pub fn obs(&self) -> SpaceSig {
        self.fwd.out()
    }

    pub fn backward_family(&self) -> &Backward {
        &self.bwd
    }

    /// The backward channel at `prior`.
    pub fn backward(&self, prior: &State) -> Result<Channel> {
        if !prior.space().matches(&self.dom()) {
            return Err(Error::Shape(format!(
                "prior on {} does not match lens domain {}",
                prior.space(),
                self.dom()
            )));
        }
        let b = (self.bwd)(prior)?;
        self.check_backward(&b)?;
        Ok(b)
    }

    fn check_backward(&self, b: &Channel) -> Result<()> {
        if b.instance() != self.instance() {
            return Err(instance_mismatch("backward channel"));
        }
        if b.hand() != Hand::Right {
            return Err(Error::NotSimple("backward channels must be right-handed".into()));
        }
        if !b.dom().matches(&self.obs()) || !b.out().matches(&self.dom()) {
            return Err(Error::NotSimple(format!(
                "backward channel {} -> {} does not reverse {} -> {}",
                b.dom(),
                b.out(),
                self.dom(),
                self.obs()
            )));
        }
        if !b.copar_flat_eq(&self.fwd) {
            return Err(Error::NotSimple(format!(
                "backward coparameter {} differs from forward coparameter {}",
                b.copar(),
                self.fwd.copar()
            )));
        }
        Ok(())
    }
}

/// The lens `(c, c†)` whose backward map is exact Bayesian inversion.
pub fn exact_lens(c: Channel) -> Result<BayesLens> {
    let fwd = c.clone();
    BayesLens::new(fwd, Arc::new(move |prior: &State| Ok(c.invert(prior)?.0)))
}

/// The identity lens on a boundary (unit coparameter both ways).
pub fn identity_lens(space: &SpaceSig) -> BayesLens {
    let (fwd, bwd) = match space {
        SpaceSig::Discrete(s) => (
            Channel::Discrete(CoparKernel::identity(s.clone(), Hand::Left)),
            Channel::Discrete(CoparKernel::identity(s.clone(), Hand::Right)),
        ),
        SpaceSig::Gaussian(n) => {
            let id = GaussChannel::identity(*n);
            let right = GaussChannel::new(id.a().clone(), id.b().clone(), id.noise().clone(), 0, Hand::Right)
                .expect("identity channel is valid");
            (Channel::Gaussian(id), Channel::Gaussian(right))
        }
    };
    BayesLens { fwd, bwd: Arc::new(move |_| Ok(bwd.clone())) }
}

/// Optic composite `d ∘ c`.
///
/// The forward map is the copy-composite of the forwards, coparameterized by
/// `(M⊗Y)⊗N`. At a prior `π` the backward map is `c'_π ∘ d'_{cπ}`, composed by
/// copy-composition on the backward side, where `cπ` is the pushforward of `π`
/// along the discarded forward channel of `c`.
pub fn lens_compose(d: &BayesLens, c: &BayesLens) -> Result<BayesLens> {
    if d.instance() != c.instance() {
        return Err(instance_mismatch("lens_compose"));
    }
    if !c.obs().matches(&d.dom()) {
        return Err(Error::Shape(format!("cannot compose: {} does not match {}", c.obs(), d.dom())));
    }
    let fwd = Channel::copy_compose(&d.fwd, &c.fwd)?;
    let (c2, d2) = (c.clone(), d.clone());
    let bwd: Backward = Arc::new(move |prior: &State| {
        let c_back = c2.backward(prior)?;
        let pushed = c2.fwd.push(prior)?;
        let d_back = d2.backward(&pushed)?;
        Channel::copy_compose(&c_back, &d_back)
    });
    BayesLens::new(fwd, bwd)
}

/// Monoidal product of lenses.
///
/// At a joint prior `ω` on `X⊗X'` each factor's backward map is evaluated at
/// the corresponding marginal of `ω`, and the results are tensored.
pub fn lens_tensor(l1: &BayesLens, l2: &BayesLens) -> Result<BayesLens> {
    if l1.instance() != l2.instance() {
        return Err(instance_mismatch("lens_tensor"));
    }
    let fwd = Channel::tensor(&l1.fwd, &l2.fwd)?;
    let (a, b) = (l1.clone(), l2.clone());
    let bwd: Backward = Arc::new(move |omega: &State| {
        let (wx, wx2) = omega.split(&a.dom(), &b.dom())?;
        Channel::tensor(&a.backward(&wx)?, &b.backward(&wx2)?)
    });
    BayesLens::new(fwd, bwd)
}

/// Reindexes a prior-indexed family on `Y` along a channel `X -> Y` by pre-composition.
pub fn reindex<T: 'static>(family: PriorFamily<T>, c: &Channel) -> PriorFamily<T> {
    let c = c.clone();
    Arc::new(move |prior: &State| family(&c.push(prior)?))
}

/// Deviation between the optic composite's backward map and exact inversion of the composite.
///
/// Returns the largest absolute entrywise difference, over observations in the
/// support of the composite pushforward, between the backward channel of
/// `lens_compose(d, c)` at `pi` and the Bayesian inversion of
/// `copy_compose(d.fwd, c.fwd)` at `pi`, both in flattened coparameter layout.
pub fn buco_residual(c: &BayesLens, d: &BayesLens, pi: &State) -> Result<f64> {
    let composite = lens_compose(d, c)?;
    let optic = composite.backward(pi)?;
    let (exact, mask) = composite.fwd.invert(pi)?;
    match (&optic, &exact) {
        (Channel::Discrete(o), Channel::Discrete(e)) => {
            let mask = mask.expect("discrete inversion carries a mask");
            if o.joint().cod().size() != e.joint().cod().size() || !o.copar().flat_eq(e.copar()) {
                return Err(Error::Shape("optic and exact backward layouts differ".into()));
            }
            let mut worst: f64 = 0.0;
            for z in (0..o.dom().size()).filter(|&z| mask.is_supported(z)) {
                for (x, y) in o.joint().row(z).iter().zip(e.joint().row(z)) {
                    worst = worst.max((x - y).abs());
                }
            }
            Ok(worst)
        }
        _ => optic.max_abs_diff(&exact),
    }
}

/// Equality of two lenses at a prior: forwards agree everywhere and
/// backwards agree almost surely with respect to the forward pushforward.
pub fn lens_almost_eq(l1: &BayesLens, l2: &BayesLens, prior: &State, tol: f64) -> Result<bool> {
    if l1.fwd.max_abs_diff(&l2.fwd)? > tol {
        return Ok(false);
    }
    let (b1, b2) = (l1.backward(prior)?, l2.backward(prior)?);
    match (&b1, &b2, l1.fwd.push(prior)?) {
        (Channel::Discrete(k1), Channel::Discrete(k2), State::Discrete(evidence)) => {
            crate::discrete::almost_sure_eq(k1, k2, &evidence, tol)
        }
        _ => Ok(b1.max_abs_diff(&b2)? <= tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::FiniteKernel;
    use nalgebra::DMatrix;

    fn kernel(rows: &[Vec<f64>]) -> FiniteKernel {
        FiniteKernel::from_rows(FiniteSpace::range(rows.len()), FiniteSpace::range(rows[0].len()), rows).unwrap()
    }

    fn dchan(rows: &[Vec<f64>]) -> Channel {
        Channel::Discrete(CoparKernel::lift(&kernel(rows), Hand::Left))
    }

    #[test]
    fn exact_identity_is_identity() {
        let s = SpaceSig::Discrete(FiniteSpace::range(3));
        let l = exact_lens(identity_lens(&s).fwd().clone()).unwrap();
        let id = identity_lens(&s);
        let prior = State::Discrete(Dist::new(FiniteSpace::range(3), vec![0.2, 0.3, 0.5]).unwrap());
        assert!(lens_almost_eq(&l, &id, &prior, 1e-15).unwrap());
    }

    #[test]
    fn section_law_forward_is_untouched() {
        let c = dchan(&[vec![0.2, 0.8], vec![0.6, 0.4]]);
        let l = exact_lens(c.clone()).unwrap();
        assert_eq!(l.fwd().discard(), c.discard());
        assert_eq!(l.fwd(), &c);
    }

    #[test]
    fn rejects_non_simple_backward() {
        let c = dchan(&[vec![0.2, 0.8], vec![0.6, 0.4]]);
        let wrong = Channel::Discrete(CoparKernel::identity(FiniteSpace::range(2), Hand::Left));
        let err = BayesLens::new(c.clone(), Arc::new(move |_| Ok(wrong.clone()))).unwrap_err();
        assert!(matches!(err, Error::NotSimple(_)));
        let other_copar = Channel::Discrete(
            CoparKernel::new(
                FiniteKernel::identity(FiniteSpace::range(4)),
                FiniteSpace::range(2),
                FiniteSpace::range(2),
                Hand::Right,
            )
            .unwrap(),
        );
        let err = BayesLens::new(c, Arc::new(move |_| Ok(other_copar.clone()))).unwrap_err();
        assert!(matches!(err, Error::NotSimple(_)));
    }

    #[test]
    fn compose_with_identity_up_to_unit_and_projection() {
        let c = exact_lens(dchan(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]])).unwrap();
        let id_y = identity_lens(&c.obs());
        let right = lens_compose(&id_y, &c).unwrap();
        // copar (I⊗Y)⊗I: the unit factors are flagged, Y is the retained copy
        let k = right.fwd().as_discrete().unwrap();
        assert_eq!(k.copar().unit_factor_count(), 2);
        let projected = k.project_copar(&[]).unwrap();
        assert!(Channel::Discrete(projected).max_abs_diff(c.fwd()).unwrap() < 1e-15);
        let prior = State::Discrete(Dist::new(FiniteSpace::range(2), vec![0.3, 0.7]).unwrap());
        assert!(buco_residual(&c, &id_y, &prior).unwrap() < 1e-15);
    }

    #[test]
    fn scalar_gaussian_exact_lens() {
        let c = GaussChannel::plain(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        let l = exact_lens(Channel::Gaussian(c)).unwrap();
        let back = l.backward(&State::Gaussian(GaussState::standard(1))).unwrap();
        let g = back.as_gaussian().unwrap();
        assert!((g.a()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((g.noise()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reindex_identity_and_constants() {
        let fam: PriorFamily<f64> = Arc::new(|s: &State| Ok(s.as_discrete().unwrap().prob(0)));
        let id = identity_lens(&SpaceSig::Discrete(FiniteSpace::range(2)));
        let r = reindex(fam.clone(), id.fwd());
        let p = State::Discrete(Dist::new(FiniteSpace::range(2), vec![0.25, 0.75]).unwrap());
        assert_eq!(r(&p).unwrap(), fam(&p).unwrap());
        let constant: PriorFamily<f64> = Arc::new(|_| Ok(4.0));
        let c = dchan(&[vec![0.2, 0.8], vec![0.6, 0.4]]);
        assert_eq!(reindex(constant, &c)(&p).unwrap(), 4.0);
    }

    #[test]
    fn instance_tags_must_match() {
        let d = exact_lens(dchan(&[vec![0.2, 0.8], vec![0.6, 0.4]])).unwrap();
        let g = identity_lens(&SpaceSig::Gaussian(2));
        assert!(matches!(lens_compose(&d, &g), Err(Error::Instance(_))));
        assert!(matches!(lens_tensor(&d, &g), Err(Error::Instance(_))));
    }
}
