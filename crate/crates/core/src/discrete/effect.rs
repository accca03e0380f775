use serde::Serialize;

use super::kernel::FiniteKernel;
use super::space::FiniteSpace;
use crate::error::{Error, Result};

/// An effect `B -> I`: an extended nonnegative real per outcome.
///
/// `+∞` is allowed (it arises as `-log 0`). Arithmetic treats `+∞` as
/// absorbing and uses `0 · ∞ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Effect {
    space: FiniteSpace,
    values: Vec<f64>,
}

impl Effect {
    pub fn new(space: FiniteSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.size() {
            return Err(Error::Shape(format!(
                "effect has {} values but the space has {} outcomes",
                values.len(),
                space.size()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
            return Err(Error::Shape(format!("effect value {v} at {i} is not in [0, +inf]")));
        }
        Ok(Self { space, values })
    }

    pub fn zero(space: FiniteSpace) -> Self {
        Self::constant(space, 0.0)
    }

    pub fn constant(space: FiniteSpace, value: f64) -> Self {
        assert!(value >= 0.0, "effects are nonnegative");
        let values = vec![value; space.size()];
        Self { space, values }
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Pointwise sum of effects on a shared space.
pub fn effect_add(g: &Effect, g2: &Effect) -> Result<Effect> {
    g.space.check_same(&g2.space, "effect_add")?;
    let values = g.values.iter().zip(&g2.values).map(|(a, b)| a + b).collect();
    Ok(Effect { space: g.space.clone(), values })
}

/// The monoidal sum `g + g' : B⊗B' -> I`, `(b, b') ↦ g(b) + g'(b')`.
pub fn effect_sum_tensor(g: &Effect, g2: &Effect) -> Effect {
    let space = FiniteSpace::product(&g.space, &g2.space);
    let mut values = Vec::with_capacity(space.size());
    for &a in &g.values {
        for &b in &g2.values {
            values.push(a + b);
        }
    }
    Effect { space, values }
}

/// Expectation of `g` along a channel: `result[a] = Σ_b g[b] k[a][b]`.
pub fn effect_precompose(g: &Effect, k: &FiniteKernel) -> Result<Effect> {
    k.cod().check_same(&g.space, "effect_precompose")?;
    let values = (0..k.dom().size()).map(|a| expect(k.row(a), &g.values)).collect();
    Ok(Effect { space: k.dom().clone(), values })
}

/// `Σ w_i v_i` over `w_i > 0`, so that `0 · ∞` contributes nothing.
pub(crate) fn expect(weights: &[f64], values: &[f64]) -> f64 {
    weights
        .iter()
        .zip(values)
        .filter(|(&w, _)| w > 0.0)
        .map(|(&w, &v)| if v == f64::INFINITY { f64::INFINITY } else { w * v })
        .sum()
}
