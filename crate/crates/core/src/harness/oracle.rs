//! Brute-force reference computations.
//!
//! Discrete oracles work on raw row vectors by enumeration. Gaussian oracles
//! build the joint law of all variables from independent noise sources and
//! condition with an explicit matrix inverse. Nothing here calls the kernel,
//! channel, lens or loss operations that the suites check.

use nalgebra::{DMatrix, DVector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `Σ p log(p/q)` with `0 log 0 = 0` and `p > 0 = q` giving `+∞`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total
}

/// Pushforward of `pi` along raw rows.
pub fn pushforward(pi: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for (x, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j] += pi[x] * v;
        }
    }
    out
}

/// Output marginal of rows laid out `[m * ny + y]`.
pub fn out_marginal(row: &[f64], nm: usize, ny: usize) -> Vec<f64> {
    (0..ny).map(|y| (0..nm).map(|m| row[m * ny + y]).sum()).collect()
}

/// Posterior over `(x, m)` given each `y`, for rows `c[x][m * ny + y]`; `None` off support.
pub fn posterior(pi: &[f64], c: &[Vec<f64>], nm: usize, ny: usize) -> Vec<Option<Vec<f64>>> {
    (0..ny)
        .map(|y| {
            let w: Vec<f64> = (0..pi.len() * nm).map(|i| pi[i / nm] * c[i / nm][(i % nm) * ny + y]).collect();
            normalize(w)
        })
        .collect()
}

fn normalize(w: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = w.iter().sum();
    (total > 0.0).then(|| w.into_iter().map(|v| v / total).collect())
}

/// Posterior over `(x, m, y, n)` given each `z` for the two-step model
/// `x ~ π`, `(m, y) ~ c(x)`, `(n, z) ~ d(y)`.
pub fn chain_posterior(
    pi: &[f64],
    c: &[Vec<f64>],
    (nm, ny): (usize, usize),
    d: &[Vec<f64>],
    (nn, nz): (usize, usize),
) -> Vec<Option<Vec<f64>>> {
    let nx = pi.len();
    (0..nz)
        .map(|z| {
            let mut w = Vec::with_capacity(nx * nm * ny * nn);
            for x in 0..nx {
                for m in 0..nm {
                    for y in 0..ny {
                        for n in 0..nn {
                            w.push(pi[x] * c[x][m * ny + y] * d[y][n * nz + z]);
                        }
                    }
                }
            }
            normalize(w)
        })
        .collect()
}

/// Right-hand side of the chain rule at each `a`:
/// `E_{b ~ α(a)} D(β(b), β'(b)) + D(α(a), α'(a))`.
pub fn chain_rule_rhs(alpha: &[Vec<f64>], alpha2: &[Vec<f64>], beta: &[Vec<f64>], beta2: &[Vec<f64>]) -> Vec<f64> {
    alpha
        .iter()
        .zip(alpha2)
        .map(|(row, row2)| {
            let inner: f64 = row
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(b, w)| w * kl(&beta[b], &beta2[b]))
                .sum();
            inner + kl(row, row2)
        })
        .collect()
}

/// A Gaussian law given as `mean` and `cov`.
#[derive(Debug, Clone)]
pub struct Joint {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Affine-Gaussian conditional of `keep` given `obs`:
/// returns `(K, b, S)` with `keep | obs = v ~ N(K v + b, S)`.
pub fn condition(j: &Joint, keep: &[usize], obs: &[usize]) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let s_kk = j.cov.select_rows(keep).select_columns(keep);
    let s_ko = j.cov.select_rows(keep).select_columns(obs);
    let s_oo_inv = j.cov.select_rows(obs).select_columns(obs).try_inverse()?;
    let gain = &s_ko * &s_oo_inv;
    let m_k = DVector::from_iterator(keep.len(), keep.iter().map(|&i| j.mean[i]));
    let m_o = DVector::from_iterator(obs.len(), obs.iter().map(|&i| j.mean[i]));
    let offset = m_k - &gain * m_o;
    let cov = s_kk - &gain * s_ko.transpose();
    Some((gain, offset, cov))
}

/// A linear-Gaussian layer `u = A x + b + e`, `e ~ N(0, noise)`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub noise: DMatrix<f64>,
}

/// Joint law of `(x, u_1, …, u_k)` where layer `i` reads coordinates `inputs[i]`
/// of the vector built so far (`x` first, then earlier layer outputs).
pub fn stack_layers(prior_mean: &DVector<f64>, prior_cov: &DMatrix<f64>, layers: &[(Layer, Vec<usize>)]) -> Joint {
    // Represent every variable as `L w + c` over independent sources `w`.
    let dims: Vec<usize> = std::iter::once(prior_mean.len()).chain(layers.iter().map(|(l, _)| l.b.len())).collect();
    let total: usize = dims.iter().sum();
    let mut load = DMatrix::zeros(total, total);
    let mut shift = DVector::zeros(total);
    let nx = prior_mean.len();
    load.view_mut((0, 0), (nx, nx)).copy_from(&sqrt_psd(prior_cov));
    shift.rows_mut(0, nx).copy_from(prior_mean);
    let mut row = nx;
    for (layer, inputs) in layers {
        let n = layer.b.len();
        for (col, &src) in inputs.iter().enumerate() {
            for r in 0..n {
                let coef = layer.a[(r, col)];
                for s in 0..total {
                    load[(row + r, s)] += coef * load[(src, s)];
                }
                shift[row + r] += coef * shift[src];
            }
        }
        for r in 0..n {
            shift[row + r] += layer.b[r];
        }
        load.view_mut((row, row), (n, n)).copy_from(&sqrt_psd(&layer.noise));
        row += n;
    }
    let cov = &load * load.transpose();
    Joint { mean: shift, cov }
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// `ln det` and inverse of an SPD matrix through its Cholesky factor.
fn spd_parts(s: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let c = s.clone().cholesky().expect("positive-definite covariance");
    let ln_det = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    (ln_det, c.inverse())
}

/// `D_KL(N(m1, s1), N(m2, s2))`.
pub fn gauss_kl(m1: &DVector<f64>, s1: &DMatrix<f64>, m2: &DVector<f64>, s2: &DMatrix<f64>) -> f64 {
    let (ln_det2, inv) = spd_parts(s2);
    let (ln_det1, _) = spd_parts(s1);
    let d = m1 - m2;
    0.5 * ((&inv * s1).trace() + (d.transpose() * &inv * &d)[0] - m1.len() as f64 + ln_det2 - ln_det1)
}

/// Negative log-density of `N(m, s)` at `y`.
pub fn gauss_nll(m: &DVector<f64>, s: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let (ln_det, inv) = spd_parts(s);
    let d = y - m;
    0.5 * (m.len() as f64 * LN_2PI + ln_det + (d.transpose() * inv * &d)[0])
}

/// `E_{y ~ N(qm, qs)}[−log N(y; m, s)]`.
pub fn gauss_expected_nll(m: &DVector<f64>, s: &DMatrix<f64>, qm: &DVector<f64>, qs: &DMatrix<f64>) -> f64 {
    let (_, inv) = spd_parts(s);
    gauss_nll(m, s, qm) + 0.5 * (inv * qs).trace()
}

/// Energy Hessian `GᵀΣ⁻¹G + diag(P⁻¹, 0)` for `G = [−A | E_m]`, built entry by entry.
pub fn laplace_hessian(a: &DMatrix<f64>, noise: &DMatrix<f64>, prior_cov: &DMatrix<f64>, copar_dim: usize) -> DMatrix<f64> {
    let (p, n) = (a.nrows(), a.ncols());
    let dim = n + copar_dim;
    let mut g = DMatrix::zeros(p, dim);
    for r in 0..p {
        for c in 0..n {
            g[(r, c)] = -a[(r, c)];
        }
    }
    for i in 0..copar_dim {
        g[(i, n + i)] = 1.0;
    }
    let noise_inv = noise.clone().try_inverse().expect("invertible noise");
    let prior_inv = prior_cov.clone().try_inverse().expect("invertible prior");
    let mut h = g.transpose() * noise_inv * &g;
    for r in 0..n {
        for c in 0..n {
            h[(r, c)] += prior_inv[(r, c)];
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_posterior_of_deterministic_model_is_a_point() {
        let pi = [0.5, 0.5];
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let post = chain_posterior(&pi, &id, (1, 2), &id, (1, 2));
        assert_eq!(post[1].as_ref().unwrap(), &vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn scalar_conditioning() {
        // x ~ N(0,1), y = x + e, e ~ N(0,1): x | y ~ N(y/2, 1/2)
        let layer = Layer { a: DMatrix::from_element(1, 1, 1.0), b: DVector::zeros(1), noise: DMatrix::identity(1, 1) };
        let j = stack_layers(&DVector::zeros(1), &DMatrix::identity(1, 1), &[(layer, vec![0])]);
        let (k, b, s) = condition(&j, &[0], &[1]).unwrap();
        assert!((k[(0, 0)] - 0.5).abs() < 1e-15 && b[0].abs() < 1e-15 && (s[(0, 0)] - 0.5).abs() < 1e-15);
    }
}
