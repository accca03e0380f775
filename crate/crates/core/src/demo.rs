//! Free-energy minimization over a parameterized backward channel.
//!
//! The generative model is `x ~ N(0, 1)`, `y | x ~ N(a x + b, σ²)` with fixed
//! `a`, `b`, `σ`, observed at `y = 1`. The backward family is
//! `x | y ~ N(gain · y + offset, exp(log_var))`. Parameters start uniform in
//! `[-1, 1]` and follow gradient descent on FE with central finite differences.
//! A step that raises FE by more than [`ACCEPT_SLACK`] is rejected and the
//! learning rate halved.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::discrete::Hand;
use crate::error::{Error, Result};
use crate::gaussian::{GaussChannel, GaussState};
use crate::harness::rng_from_seed;
use crate::lens::{Backward, BayesLens, Channel, Obs, State};
use crate::loss::{fe_loss, kl_loss, mle_loss};

pub const GAIN_A: f64 = 2.0;
pub const OFFSET_B: f64 = 0.5;
pub const SIGMA: f64 = 0.8;
pub const OBSERVATION: f64 = 1.0;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest FE increase an accepted step may cause.
pub const ACCEPT_SLACK: f64 = 1e-6;
/// Consecutive rejected steps that count as divergence.
pub const MAX_REJECTIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { steps: 2000, lr: 1e-2, seed: 0 }
    }
}

/// Parameters of the backward family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub gain: f64,
    pub offset: f64,
    pub log_var: f64,
}

impl Params {
    fn to_array(self) -> [f64; 3] {
        [self.gain, self.offset, self.log_var]
    }

    fn from_array([gain, offset, log_var]: [f64; 3]) -> Self {
        Self { gain, offset, log_var }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoRow {
    pub step: usize,
    pub fe: f64,
    pub kl: f64,
    pub mle: f64,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRun {
    pub rows: Vec<DemoRow>,
    pub accepted: usize,
    pub rejected: usize,
}

impl DemoRun {
    pub fn last(&self) -> &DemoRow {
        self.rows.last().expect("a run has its initial row")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,fe,kl,mle,gain,offset,log_var\n");
        for r in &self.rows {
            let p = r.params;
            writeln!(out, "{},{},{},{},{},{},{}", r.step, r.fe, r.kl, r.mle, p.gain, p.offset, p.log_var)
                .expect("writing to a string");
        }
        out
    }
}

fn forward() -> Channel {
    let c = GaussChannel::plain(
        DMatrix::from_element(1, 1, GAIN_A),
        DVector::from_element(1, OFFSET_B),
        DMatrix::from_element(1, 1, SIGMA * SIGMA),
    )
    .expect("fixed model is valid");
    Channel::Gaussian(c)
}

fn prior() -> State {
    State::Gaussian(GaussState::standard(1))
}

fn observation() -> Obs {
    Obs::Gaussian(DVector::from_element(1, OBSERVATION))
}

/// The lens with the backward channel given by `p`, whatever the prior.
pub fn lens_for(p: Params) -> Result<BayesLens> {
    let bwd = GaussChannel::new(
        DMatrix::from_element(1, 1, p.gain),
        DVector::from_element(1, p.offset),
        DMatrix::from_element(1, 1, p.log_var.exp()),
        0,
        Hand::Right,
    )?;
    let bwd = Channel::Gaussian(bwd);
    let family: Backward = Arc::new(move |_| Ok(bwd.clone()));
    BayesLens::new(forward(), family)
}

fn row(step: usize, p: Params) -> Result<DemoRow> {
    let lens = lens_for(p)?;
    let (pi, y) = (prior(), observation());
    Ok(DemoRow {
        step,
        fe: fe_loss(&lens).eval(&pi, &y)?,
        kl: kl_loss(&lens).eval(&pi, &y)?,
        mle: mle_loss(&lens).eval(&pi, &y)?,
        params: p,
    })
}

fn free_energy(p: Params) -> Result<f64> {
    fe_loss(&lens_for(p)?).eval(&prior(), &observation())
}

fn gradient(p: Params) -> Result<[f64; 3]> {
    let x = p.to_array();
    let mut g = [0.0; 3];
    for i in 0..3 {
        let (mut up, mut down) = (x, x);
        up[i] += FD_STEP;
        down[i] -= FD_STEP;
        g[i] = (free_energy(Params::from_array(up))? - free_energy(Params::from_array(down))?) / (2.0 * FD_STEP);
    }
    Ok(g)
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoRun> {
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Usage("learning rate must be a positive number".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut params = Params::from_array([0; 3].map(|_| rng.random_range(-1.0..=1.0)));
    let mut current = row(0, params)?;
    let mut run = DemoRun { rows: vec![current], accepted: 0, rejected: 0 };
    let mut lr = cfg.lr;
    let mut streak = 0;
    for step in 1..=cfg.steps {
        let g = gradient(params)?;
        let x = params.to_array();
        let candidate = Params::from_array([0, 1, 2].map(|i| x[i] - lr * g[i]));
        let next = row(step, candidate);
        match next {
            Ok(r) if r.fe <= current.fe + ACCEPT_SLACK => {
                params = candidate;
                current = r;
                run.accepted += 1;
                streak = 0;
            }
            _ => {
                lr *= 0.5;
                run.rejected += 1;
                streak += 1;
                current.step = step;
                if streak >= MAX_REJECTIONS {
                    let p = current.params;
                    return Err(Error::Diverged(format!(
                        "{MAX_REJECTIONS} consecutive rejected steps at step {step}; last state: fe={} kl={} mle={} gain={} offset={} log_var={}",
                        current.fe, current.kl, current.mle, p.gain, p.offset, p.log_var
                    )));
                }
            }
        }
        run.rows.push(current);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_gives_the_initial_row() {
        let run = run_demo(&DemoConfig { steps: 0, ..DemoConfig::default() }).unwrap();
        assert_eq!(run.rows.len(), 1);
        assert_eq!(run.to_csv().lines().count(), 2);
    }

    #[test]
    fn short_runs_are_monotone_and_deterministic() {
        let cfg = DemoConfig { steps: 100, lr: 1e-2, seed: 3 };
        let a = run_demo(&cfg).unwrap();
        assert_eq!(a, run_demo(&cfg).unwrap());
        assert!(a.rows.windows(2).all(|w| w[1].fe <= w[0].fe + ACCEPT_SLACK));
        assert!(a.last().fe < a.rows[0].fe);
    }

    #[test]
    fn rejects_bad_learning_rates() {
        assert!(matches!(run_demo(&DemoConfig { lr: -1.0, ..DemoConfig::default() }), Err(Error::Usage(_))));
    }
}
