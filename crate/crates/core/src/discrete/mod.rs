//! Finite-discrete channels: distributions, row-stochastic kernels,
//! copy-composition, discarding, tensoring, effects and exact Bayesian inversion.
//!
//! All values are immutable once built and validated; operations are pure.

mod copar;
mod dist;
mod effect;
mod kernel;
mod space;

pub use copar::{
    bayes_invert, copy_compose, copy_compose_copar, discard_coparam, tensor_copar, CoparKernel, Hand,
};
pub use dist::{kl_divergence, Dist};
pub use effect::{effect_add, effect_precompose, effect_sum_tensor, Effect};
pub(crate) use effect::expect;
pub use kernel::{almost_sure_eq, compose, push, tensor, FiniteKernel, SupportMask};
pub use space::FiniteSpace;

use crate::error::{Error, Result};

/// `a ↦ D(α(a), α'(a))` for a parallel pair of kernels.
pub fn divergence_profile(alpha: &FiniteKernel, alpha2: &FiniteKernel) -> Result<Vec<f64>> {
    if alpha.dom().size() != alpha2.dom().size() || alpha.cod().size() != alpha2.cod().size() {
        return Err(Error::Shape("divergence_profile needs a parallel pair".into()));
    }
    Ok((0..alpha.dom().size()).map(|a| kl_divergence(alpha.row(a), alpha2.row(a))).collect())
}
