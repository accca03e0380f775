//! Statistical games: a lens paired with a loss, composed horizontally by
//! reindexed sums and vertically through loss witnesses.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lens::{lens_compose, BayesLens, Obs, State};
use crate::loss::{loss_compose, model_loss, LossFn, LossModelTag};
use crate::COMPARISON_TOL;

/// A point at which losses are compared.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub prior: State,
    pub obs: Obs,
}

impl Probe {
    pub fn new(prior: State, obs: Obs) -> Self {
        Self { prior, obs }
    }
}

#[derive(Debug, Clone)]
pub struct Game {
    lens: BayesLens,
    loss: LossFn,
}

impl Game {
    pub fn new(lens: BayesLens, loss: LossFn) -> Result<Self> {
        if !loss.prior_space().matches(&lens.dom()) || !loss.obs_space().matches(&lens.obs()) {
            return Err(Error::Shape(format!(
                "loss on {} -[{}]-> I does not fit a lens {} -> {}",
                loss.obs_space(),
                loss.prior_space(),
                lens.dom(),
                lens.obs()
            )));
        }
        Ok(Self { lens, loss })
    }

    /// The game assigned to `lens` by a loss model.
    pub fn of_model(model: LossModelTag, lens: &BayesLens) -> Result<Self> {
        Self::new(lens.clone(), model_loss(model, lens)?)
    }

    pub fn lens(&self) -> &BayesLens {
        &self.lens
    }

    pub fn loss(&self) -> &LossFn {
        &self.loss
    }
}

/// Horizontal composite `g2 ∘ g1`.
pub fn game_hcompose(g2: &Game, g1: &Game) -> Result<Game> {
    let lens = lens_compose(&g2.lens, &g1.lens)?;
    let loss = loss_compose(&g2.loss, &g1.loss, &g2.lens, &g1.lens)?;
    Game::new(lens, loss)
}

/// A loss witness `L(from) = L(to) + K` with `K ≥ 0`, checked on a probe set.
#[derive(Debug, Clone)]
pub struct TwoCellWitness {
    from: Game,
    to: Game,
    k: LossFn,
    probes: Vec<Probe>,
}

impl TwoCellWitness {
    /// Builds a witness after checking its defining equation at every probe.
    pub fn new(from: Game, to: Game, k: LossFn, probes: Vec<Probe>, tol: f64) -> Result<Self> {
        for (i, p) in probes.iter().enumerate() {
            let lhs = from.loss.eval(&p.prior, &p.obs)?;
            let kv = k.eval(&p.prior, &p.obs)?;
            let rhs = to.loss.eval(&p.prior, &p.obs)? + kv;
            if kv < -tol {
                return Err(Error::Composition(format!("witness is negative ({kv}) at probe {i}")));
            }
            if !values_agree(lhs, rhs, tol) {
                return Err(Error::Composition(format!("witness equation fails at probe {i}: {lhs} vs {rhs}")));
            }
        }
        Ok(Self { from, to, k, probes })
    }

    /// The identity cell `(id, 0)` on a game.
    pub fn identity(game: &Game, probes: Vec<Probe>) -> Result<Self> {
        let k = LossFn::zero(game.lens.dom(), game.lens.obs());
        Self::new(game.clone(), game.clone(), k, probes, 0.0)
    }

    pub fn from_game(&self) -> &Game {
        &self.from
    }

    pub fn to_game(&self) -> &Game {
        &self.to
    }

    pub fn k(&self) -> &LossFn {
        &self.k
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }
}

/// `+∞ = +∞`; otherwise absolute agreement within `tol`.
pub(crate) fn values_agree(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        a == b
    } else {
        (a - b).abs() <= tol
    }
}

/// Vertical composite: `w2` after `w1`, with `K = K2 + K1`.
///
/// Games are compared extensionally: `w1.to` and `w2.from` must have the same
/// forward channel and the same loss values on the probes of both witnesses.
pub fn game_vcompose(w2: &TwoCellWitness, w1: &TwoCellWitness) -> Result<TwoCellWitness> {
    let fwd_gap = w1.to.lens.fwd().max_abs_diff(w2.from.lens.fwd()).map_err(|e| Error::Composition(e.to_string()))?;
    if fwd_gap > COMPARISON_TOL {
        return Err(Error::Composition("witnesses do not chain: middle lenses differ".into()));
    }
    let mut probes = w1.probes.clone();
    probes.extend(w2.probes.iter().filter(|p| !w1.probes.contains(p)).cloned());
    for p in &probes {
        let a = w1.to.loss.eval(&p.prior, &p.obs)?;
        let b = w2.from.loss.eval(&p.prior, &p.obs)?;
        if !values_agree(a, b, COMPARISON_TOL) {
            return Err(Error::Composition("witnesses do not chain: middle losses differ".into()));
        }
    }
    let k = w2.k.add(&w1.k)?;
    TwoCellWitness::new(w1.from.clone(), w2.to.clone(), k, probes, COMPARISON_TOL)
}

/// The laxness witness `K(d, c) = (L(d) ⋄ L(c)) − L(d ∘ c)` of a loss model.
pub fn composition_witness(model: LossModelTag, d: &BayesLens, c: &BayesLens) -> Result<LossFn> {
    let composite = model_loss(model, &lens_compose(d, c)?)?;
    let sum = loss_compose(&model_loss(model, d)?, &model_loss(model, c)?, d, c)?;
    Ok(LossFn::new(
        c.dom(),
        d.obs(),
        Arc::new(move |p, z| {
            let (a, b) = (sum.eval(p, z)?, composite.eval(p, z)?);
            if a.is_infinite() && a == b {
                return Ok(0.0);
            }
            Ok(a - b)
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Classification {
    Strict,
    Lax,
    Violation,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Strict => "STRICT",
            Classification::Lax => "LAX",
            Classification::Violation => "VIOLATION",
        })
    }
}

/// Tolerances for [`section_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionTolerances {
    /// `|K|` below this everywhere counts as strict.
    pub strict: f64,
    /// `K` below `-floor` anywhere is a violation.
    pub floor: f64,
}

impl Default for SectionTolerances {
    fn default() -> Self {
        Self { strict: 1e-9, floor: 1e-12 }
    }
}

/// One composable pair `(d, c)` with probes on the domain of `c`.
#[derive(Debug, Clone)]
pub struct SectionCase {
    pub d: BayesLens,
    pub c: BayesLens,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionReport {
    pub model: LossModelTag,
    pub classification: Classification,
    pub n_pairs: usize,
    pub n_probes: usize,
    #[serde(rename = "worst_K")]
    pub worst_k: f64,
    #[serde(rename = "worst_abs_K")]
    pub worst_abs_k: f64,
    pub skipped: usize,
}

/// Evaluates the laxness witness of `model` on every case and classifies the model.
///
/// Probes whose evaluation hits a support or singularity error, or whose
/// witness is undefined (`∞ − ∞` mixed with finite values), are skipped and counted.
pub fn section_check(model: LossModelTag, cases: &[SectionCase], tol: SectionTolerances) -> Result<SectionReport> {
    let per_case: Vec<Result<Vec<Option<f64>>>> = cases
        .par_iter()
        .map(|case| {
            let k = composition_witness(model, &case.d, &case.c)?;
            Ok(case
                .probes
                .iter()
                .map(|p| match k.eval(&p.prior, &p.obs) {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => None,
                })
                .collect())
        })
        .collect();
    let mut values = Vec::new();
    let mut skipped = 0;
    for case in per_case {
        for v in case? {
            match v {
                Some(v) => values.push(v),
                None => skipped += 1,
            }
        }
    }
    let worst_k = values.iter().copied().fold(f64::INFINITY, f64::min);
    let worst_abs_k = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let classification = if worst_abs_k < tol.strict {
        Classification::Strict
    } else if worst_k < -tol.floor {
        Classification::Violation
    } else {
        Classification::Lax
    };
    Ok(SectionReport {
        model,
        classification,
        n_pairs: cases.len(),
        n_probes: values.len() + skipped,
        worst_k: if values.is_empty() { 0.0 } else { worst_k },
        worst_abs_k,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{CoparKernel, Dist, FiniteKernel, FiniteSpace, Hand};
    use crate::lens::{exact_lens, Channel};

    fn lens(rows: &[Vec<f64>]) -> BayesLens {
        let k = FiniteKernel::from_rows(FiniteSpace::range(rows.len()), FiniteSpace::range(rows[0].len()), rows).unwrap();
        exact_lens(Channel::Discrete(CoparKernel::lift(&k, Hand::Left))).unwrap()
    }

    fn probes(n: usize, obs: usize) -> Vec<Probe> {
        let priors = [vec![0.5, 0.5], vec![0.1, 0.9], vec![0.8, 0.2]];
        priors
            .iter()
            .flat_map(|m| {
                (0..obs).map(move |y| {
                    Probe::new(State::Discrete(Dist::new(FiniteSpace::range(n), m.clone()).unwrap()), Obs::Discrete(y))
                })
            })
            .collect()
    }

    fn pair() -> SectionCase {
        let c = lens(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]);
        let d = lens(&[vec![0.9, 0.1], vec![0.4, 0.6], vec![0.5, 0.5]]);
        SectionCase { d, c, probes: probes(2, 2) }
    }

    #[test]
    fn kl_is_strict_and_mle_is_lax() {
        let cases = vec![pair()];
        let kl = section_check(LossModelTag::Kl, &cases, SectionTolerances::default()).unwrap();
        assert_eq!(kl.classification, Classification::Strict);
        assert_eq!(kl.n_probes, 6);
        let mle = section_check(LossModelTag::Mle, &cases, SectionTolerances::default()).unwrap();
        assert_eq!(mle.classification, Classification::Lax);
        assert!(mle.worst_k > 0.0);
        let fe = section_check(LossModelTag::Fe, &cases, SectionTolerances::default()).unwrap();
        assert!((fe.worst_k - mle.worst_k).abs() < 1e-9);
    }

    #[test]
    fn zero_losses_compose_to_zero() {
        let case = pair();
        let g1 = Game::new(case.c.clone(), LossFn::zero(case.c.dom(), case.c.obs())).unwrap();
        let g2 = Game::new(case.d.clone(), LossFn::zero(case.d.dom(), case.d.obs())).unwrap();
        let g = game_hcompose(&g2, &g1).unwrap();
        for p in &case.probes {
            assert_eq!(g.loss().eval(&p.prior, &p.obs).unwrap(), 0.0);
        }
    }

    #[test]
    fn witnesses_compose_by_sum() {
        let case = pair();
        let g = Game::of_model(LossModelTag::Mle, &case.c).unwrap();
        let shift = |v: f64| {
            let l = g.loss().clone();
            Game::new(g.lens().clone(), LossFn::new(g.lens().dom(), g.lens().obs(), Arc::new(move |p, y| Ok(l.eval(p, y)? + v))))
                .unwrap()
        };
        let (top, mid) = (shift(0.75), shift(0.25));
        let sig = (g.lens().dom(), g.lens().obs());
        let w1 = TwoCellWitness::new(top.clone(), mid.clone(), LossFn::constant(sig.0.clone(), sig.1.clone(), 0.5), case.probes.clone(), 1e-12)
            .unwrap();
        let w2 = TwoCellWitness::new(mid, g.clone(), LossFn::constant(sig.0.clone(), sig.1.clone(), 0.25), case.probes.clone(), 1e-12)
            .unwrap();
        let w = game_vcompose(&w2, &w1).unwrap();
        for p in &case.probes {
            assert!((w.k().eval(&p.prior, &p.obs).unwrap() - 0.75).abs() < 1e-15);
        }
        assert!(game_vcompose(&w1, &w2).is_err());
        let id = TwoCellWitness::identity(&g, case.probes.clone()).unwrap();
        let w = game_vcompose(&id, &TwoCellWitness::identity(&g, case.probes.clone()).unwrap()).unwrap();
        assert_eq!(w.k().eval(&case.probes[0].prior, &case.probes[0].obs).unwrap(), 0.0);
    }

    #[test]
    fn bad_witness_is_rejected() {
        let case = pair();
        let g = Game::of_model(LossModelTag::Kl, &case.c).unwrap();
        let k = LossFn::constant(g.lens().dom(), g.lens().obs(), 1.0);
        assert!(matches!(TwoCellWitness::new(g.clone(), g, k, case.probes, 1e-12), Err(Error::Composition(_))));
    }

    #[test]
    fn report_json_field_names() {
        let r = section_check(LossModelTag::Kl, &[pair()], SectionTolerances::default()).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        for key in ["model", "classification", "n_pairs", "n_probes", "worst_K", "worst_abs_K", "skipped"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["classification"], "STRICT");
    }
}
