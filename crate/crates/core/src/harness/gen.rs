//! Seeded random instances.
//!
//! Every generator comes in two forms: a `sample_*` function drawing from a
//! caller-supplied RNG, and a `gen_*` function that seeds a fresh RNG.
//! Raw row data is returned alongside library values where the oracles need it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::discrete::{CoparKernel, Dist, FiniteKernel, FiniteSpace, Hand};
use crate::gaussian::{GaussChannel, GaussState};
use crate::lens::{exact_lens, BayesLens, Backward, Channel, SpaceSig, State};

/// Smallest Dirichlet weight before normalization; keeps kernels strictly positive.
const POSITIVE_FLOOR: f64 = 0.02;

/// Splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `index` of stream `stream` under `base`; independent of evaluation order.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(base ^ mix(stream)) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Stable stream id for a name.
pub fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point of the simplex with `n` coordinates.
///
/// With `degenerate`, each coordinate is zeroed with probability 1/3,
/// keeping at least one positive entry.
pub fn sample_simplex<R: Rng>(rng: &mut R, n: usize, degenerate: bool) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid shape");
    let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(rng) + POSITIVE_FLOOR).collect();
    if degenerate && n > 1 {
        let keep = rng.random_range(0..n);
        for (i, v) in w.iter_mut().enumerate() {
            if i != keep && rng.random_range(0..3) == 0 {
                *v = 0.0;
            }
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

pub fn sample_rows<R: Rng>(rng: &mut R, dom: usize, cod: usize, degenerate: bool) -> Vec<Vec<f64>> {
    (0..dom).map(|_| sample_simplex(rng, cod, degenerate)).collect()
}

pub fn sample_kernel<R: Rng>(rng: &mut R, dom: &FiniteSpace, cod: &FiniteSpace, degenerate: bool) -> FiniteKernel {
    let rows = sample_rows(rng, dom.size(), cod.size(), degenerate);
    FiniteKernel::from_rows(dom.clone(), cod.clone(), &rows).expect("sampled rows are stochastic")
}

/// A strictly positive random kernel `range(dom) -> range(cod)`, deterministic in `seed`.
pub fn gen_kernel(seed: u64, dom_size: usize, cod_size: usize) -> FiniteKernel {
    gen_kernel_with(seed, dom_size, cod_size, false)
}

/// As [`gen_kernel`], optionally with zero entries.
pub fn gen_kernel_with(seed: u64, dom_size: usize, cod_size: usize, degenerate: bool) -> FiniteKernel {
    let mut rng = rng_from_seed(seed);
    sample_kernel(&mut rng, &FiniteSpace::range(dom_size), &FiniteSpace::range(cod_size), degenerate)
}

pub fn sample_dist<R: Rng>(rng: &mut R, space: &FiniteSpace, degenerate: bool) -> Dist {
    Dist::new(space.clone(), sample_simplex(rng, space.size(), degenerate)).expect("sampled simplex point")
}

/// Uniform matrix entries in `[-scale, scale]`.
pub fn sample_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

/// `L Lᵀ + floor · I` with standard normal `L`.
pub fn sample_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> DMatrix<f64> {
    let l: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let m = &l * l.transpose() + DMatrix::identity(n, n) * floor;
    (&m + m.transpose()) * 0.5
}

pub fn sample_vector<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..=scale))
}

/// Noise floor of the generic channel generator.
pub const NOISE_FLOOR: f64 = 1e-6;

/// Noise floor for channels feeding loss identities; losses grow like the
/// inverse of the smallest noise eigenvalue, and absolute tolerances need them moderate.
pub const CONDITIONED_NOISE_FLOOR: f64 = 0.1;

/// Random left-handed Gaussian channel with `A ∈ [-2, 2]` and noise `L Lᵀ + 1e-6 I`.
pub fn sample_gauss_channel<R: Rng>(rng: &mut R, dom_dim: usize, cod_dim: usize, copar_dim: usize) -> GaussChannel {
    sample_gauss_channel_with(rng, dom_dim, cod_dim, copar_dim, NOISE_FLOOR)
}

/// As [`sample_gauss_channel`] with noise `L Lᵀ + floor · I`.
pub fn sample_gauss_channel_with<R: Rng>(
    rng: &mut R,
    dom_dim: usize,
    cod_dim: usize,
    copar_dim: usize,
    floor: f64,
) -> GaussChannel {
    let a = sample_matrix(rng, cod_dim, dom_dim, 2.0);
    let b = sample_vector(rng, cod_dim, 1.0);
    let noise = sample_spd(rng, cod_dim, floor);
    GaussChannel::new(a, b, noise, copar_dim, Hand::Left).expect("sampled channel is valid")
}

/// A random plain Gaussian channel `R^dom -> R^cod`, deterministic in `seed`.
pub fn gen_gauss_channel(seed: u64, dom_dim: usize, cod_dim: usize) -> GaussChannel {
    sample_gauss_channel(&mut rng_from_seed(seed), dom_dim, cod_dim, 0)
}

/// Random Gaussian state with covariance `L Lᵀ + 0.1 I`.
pub fn sample_gauss_state<R: Rng>(rng: &mut R, dim: usize) -> GaussState {
    GaussState::new(sample_vector(rng, dim, 1.0), sample_spd(rng, dim, 0.1)).expect("sampled state is valid")
}

pub fn sample_state<R: Rng>(rng: &mut R, space: &SpaceSig, degenerate: bool) -> State {
    match space {
        SpaceSig::Discrete(s) => State::Discrete(sample_dist(rng, s, degenerate)),
        SpaceSig::Gaussian(n) => State::Gaussian(sample_gauss_state(rng, *n)),
    }
}

/// A random discrete forward channel `dom -> copar ⊗ out`, with its raw rows
/// indexed `[x][m * |out| + y]`.
pub fn sample_discrete_forward<R: Rng>(
    rng: &mut R,
    dom: &FiniteSpace,
    copar: &FiniteSpace,
    out: &FiniteSpace,
    degenerate: bool,
) -> (Channel, Vec<Vec<f64>>) {
    let rows = sample_rows(rng, dom.size(), copar.size() * out.size(), degenerate);
    let joint = FiniteKernel::from_rows(dom.clone(), FiniteSpace::range(copar.size() * out.size()), &rows)
        .expect("sampled rows are stochastic");
    let k = CoparKernel::new(joint, copar.clone(), out.clone(), Hand::Left).expect("sizes agree");
    (Channel::Discrete(k), rows)
}

/// A random right-handed channel `out -> dom ⊗ copar` matching a forward kernel,
/// with raw rows indexed `[y][x * |copar| + m]`.
pub fn sample_discrete_backward<R: Rng>(rng: &mut R, fwd: &CoparKernel) -> (Channel, Vec<Vec<f64>>) {
    let (nx, nm) = (fwd.dom().size(), fwd.copar().size());
    let rows = sample_rows(rng, fwd.out().size(), nx * nm, false);
    let joint = FiniteKernel::from_rows(fwd.out().clone(), FiniteSpace::range(nx * nm), &rows)
        .expect("sampled rows are stochastic");
    let k = CoparKernel::new(joint, fwd.copar().clone(), fwd.dom().clone(), Hand::Right).expect("sizes agree");
    (Channel::Discrete(k), rows)
}

/// A simple lens whose backward channel ignores the prior.
pub fn fixed_backward_lens(fwd: Channel, bwd: Channel) -> BayesLens {
    let family: Backward = Arc::new(move |_| Ok(bwd.clone()));
    BayesLens::new(fwd, family).expect("backward matches the forward boundary")
}

/// A random simple lens: exact, or with a prior-independent random backward channel.
pub fn sample_lens<R: Rng>(rng: &mut R, fwd: Channel, exact: bool) -> BayesLens {
    if exact {
        return exact_lens(fwd).expect("left-handed forward");
    }
    let bwd = match &fwd {
        Channel::Discrete(k) => sample_discrete_backward(rng, k).0,
        Channel::Gaussian(g) => {
            let n = g.dom_dim() + g.copar_dim();
            let a = sample_matrix(rng, n, g.out_dim(), 1.0);
            let b = sample_vector(rng, n, 1.0);
            let noise = sample_spd(rng, n, 0.05);
            Channel::Gaussian(GaussChannel::new(a, b, noise, g.copar_dim(), Hand::Right).expect("valid channel"))
        }
    };
    fixed_backward_lens(fwd, bwd)
}
