use serde::Serialize;

use super::dist::Dist;
use super::kernel::{FiniteKernel, SupportMask};
use super::space::FiniteSpace;
use crate::error::{Error, Result};

/// Which side of the codomain carries the coparameter.
///
/// Forward channels are left-handed (`A -> M⊗B`); Bayesian inversions are
/// right-handed (`B -> A⊗M`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hand {
    Left,
    Right,
}

/// A channel whose codomain is a designated product of a coparameter and an output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoparKernel {
    copar: FiniteSpace,
    out: FiniteSpace,
    hand: Hand,
    joint: FiniteKernel,
}

impl CoparKernel {
    /// Wraps a kernel into `copar ⊗ out` (left) or `out ⊗ copar` (right).
    pub fn new(joint: FiniteKernel, copar: FiniteSpace, out: FiniteSpace, hand: Hand) -> Result<Self> {
        let expected = match hand {
            Hand::Left => FiniteSpace::product(&copar, &out),
            Hand::Right => FiniteSpace::product(&out, &copar),
        };
        if expected.size() != joint.cod().size() {
            return Err(Error::Shape(format!(
                "joint codomain has {} outcomes but coparameter x output has {}",
                joint.cod().size(),
                expected.size()
            )));
        }
        let joint = joint.relabel(joint.dom().clone(), expected)?;
        Ok(Self { copar, out, hand, joint })
    }

    /// A plain kernel with the unit coparameter.
    pub fn lift(k: &FiniteKernel, hand: Hand) -> Self {
        let unit = FiniteSpace::unit();
        let cod = match hand {
            Hand::Left => FiniteSpace::product(&unit, k.cod()),
            Hand::Right => FiniteSpace::product(k.cod(), &unit),
        };
        Self {
            copar: unit,
            out: k.cod().clone(),
            hand,
            joint: FiniteKernel::from_parts(k.dom().clone(), cod, k.as_slice().to_vec()),
        }
    }

    /// The identity 1-cell `A -[I]-> A`.
    pub fn identity(space: FiniteSpace, hand: Hand) -> Self {
        Self::lift(&FiniteKernel::identity(space), hand)
    }

    pub fn dom(&self) -> &FiniteSpace {
        self.joint.dom()
    }

    pub fn copar(&self) -> &FiniteSpace {
        &self.copar
    }

    pub fn out(&self) -> &FiniteSpace {
        &self.out
    }

    pub fn hand(&self) -> Hand {
        self.hand
    }

    pub fn joint(&self) -> &FiniteKernel {
        &self.joint
    }

    /// Flat codomain index of the pair `(m, o)`.
    pub fn joint_index(&self, m: usize, o: usize) -> usize {
        match self.hand {
            Hand::Left => m * self.out.size() + o,
            Hand::Right => o * self.copar.size() + m,
        }
    }

    /// Probability of coparameter `m` and output `o` given input `a`.
    pub fn entry(&self, a: usize, m: usize, o: usize) -> f64 {
        self.joint.entry(a, self.joint_index(m, o))
    }

    /// Projection 2-cell: keeps only the listed atoms of the (flattened) coparameter.
    pub fn project_copar(&self, keep: &[usize]) -> Result<CoparKernel> {
        let n_copar_atoms = self.copar.atoms().len();
        let n_out_atoms = self.out.atoms().len();
        if let Some(&bad) = keep.iter().find(|&&k| k >= n_copar_atoms) {
            return Err(Error::Shape(format!("coparameter factor {bad} out of range")));
        }
        let copar_atoms = self.copar.atoms();
        let kept: Vec<&FiniteSpace> = keep.iter().map(|&k| copar_atoms[k]).collect();
        let copar = FiniteSpace::product_all(&kept);
        let cols: Vec<usize> = match self.hand {
            Hand::Left => keep.iter().copied().chain(n_copar_atoms..n_copar_atoms + n_out_atoms).collect(),
            Hand::Right => (0..n_out_atoms).chain(keep.iter().map(|k| k + n_out_atoms)).collect(),
        };
        let marg = self.joint.marginalize_cod(&cols)?;
        CoparKernel::new(marg, copar, self.out.clone(), self.hand)
    }
}

impl AsRef<FiniteKernel> for CoparKernel {
    fn as_ref(&self) -> &FiniteKernel {
        &self.joint
    }
}

/// Copy-composite of plain kernels: `(d ∘² c)(b, z | a) = d(z|b) c(b|a)`, coparameterized by `B`.
pub fn copy_compose(d: &FiniteKernel, c: &FiniteKernel) -> Result<CoparKernel> {
    c.cod().check_same(d.dom(), "copy_compose")?;
    let (na, nb, nz) = (c.dom().size(), c.cod().size(), d.cod().size());
    let mut rows = Vec::with_capacity(na * nb * nz);
    for a in 0..na {
        for b in 0..nb {
            let w = c.entry(a, b);
            rows.extend(d.row(b).iter().map(|&v| v * w));
        }
    }
    let cod = FiniteSpace::product(c.cod(), d.cod());
    Ok(CoparKernel {
        copar: c.cod().clone(),
        out: d.cod().clone(),
        hand: Hand::Left,
        joint: FiniteKernel::from_parts(c.dom().clone(), cod, rows),
    })
}

/// Horizontal composite of coparameterized kernels `g ∘ f`.
///
/// Left-handed: `f: A -> M⊗B`, `g: B -> N⊗C` give `A -> ((M⊗B)⊗N)⊗C`.
/// Right-handed: `f: A -> B⊗M`, `g: B -> C⊗N` give `A -> C⊗(N⊗(B⊗M))`.
/// Both carry the value `g(n, c | b) · f(m, b | a)`.
pub fn copy_compose_copar(g: &CoparKernel, f: &CoparKernel) -> Result<CoparKernel> {
    if f.hand != g.hand {
        return Err(Error::Shape("cannot copy-compose kernels of different handedness".into()));
    }
    f.out.check_same(g.dom(), "copy_compose_copar")?;
    let hand = f.hand;
    let f_cols = f.joint.cod().size();
    let g_cols = g.joint.cod().size();
    let (nm, nb) = (f.copar.size(), f.out.size());
    let na = f.dom().size();
    let mut rows = vec![0.0; na * f_cols * g_cols];
    for a in 0..na {
        let row = &mut rows[a * f_cols * g_cols..(a + 1) * f_cols * g_cols];
        for m in 0..nm {
            for b in 0..nb {
                let jf = f.joint_index(m, b);
                let w = f.joint.entry(a, jf);
                if w == 0.0 {
                    continue;
                }
                for (kg, &v) in g.joint.row(b).iter().enumerate() {
                    let idx = match hand {
                        Hand::Left => jf * g_cols + kg,
                        Hand::Right => kg * f_cols + jf,
                    };
                    row[idx] = v * w;
                }
            }
        }
    }
    let (copar, cod) = match hand {
        Hand::Left => {
            let copar = FiniteSpace::product(&FiniteSpace::product(&f.copar, &f.out), &g.copar);
            let cod = FiniteSpace::product(&copar, &g.out);
            (copar, cod)
        }
        Hand::Right => {
            let copar = FiniteSpace::product(&g.copar, &FiniteSpace::product(&f.out, &f.copar));
            let cod = FiniteSpace::product(&g.out, &copar);
            (copar, cod)
        }
    };
    Ok(CoparKernel {
        copar,
        out: g.out.clone(),
        hand,
        joint: FiniteKernel::from_parts(f.dom().clone(), cod, rows),
    })
}

/// The discarding functor: marginalizes the coparameter.
pub fn discard_coparam(f: &CoparKernel) -> FiniteKernel {
    let (nm, no) = (f.copar.size(), f.out.size());
    let na = f.dom().size();
    let mut rows = vec![0.0; na * no];
    for a in 0..na {
        for m in 0..nm {
            for o in 0..no {
                rows[a * no + o] += f.entry(a, m, o);
            }
        }
    }
    FiniteKernel::from_parts(f.dom().clone(), f.out.clone(), rows)
}

/// Tensor of coparameterized kernels: `A⊗A' -[M⊗M']-> B⊗B'`.
pub fn tensor_copar(f: &CoparKernel, f2: &CoparKernel) -> Result<CoparKernel> {
    if f.hand != f2.hand {
        return Err(Error::Shape("cannot tensor kernels of different handedness".into()));
    }
    let dom = FiniteSpace::product(f.dom(), f2.dom());
    let copar = FiniteSpace::product(&f.copar, &f2.copar);
    let out = FiniteSpace::product(&f.out, &f2.out);
    let (nm, nm2, no, no2) = (f.copar.size(), f2.copar.size(), f.out.size(), f2.out.size());
    let n_cod = nm * nm2 * no * no2;
    let mut rows = vec![0.0; dom.size() * n_cod];
    for a in 0..f.dom().size() {
        for a2 in 0..f2.dom().size() {
            let r = (a * f2.dom().size() + a2) * n_cod;
            for m in 0..nm {
                for m2 in 0..nm2 {
                    for o in 0..no {
                        for o2 in 0..no2 {
                            let mm = m * nm2 + m2;
                            let oo = o * no2 + o2;
                            let idx = match f.hand {
                                Hand::Left => mm * no * no2 + oo,
                                Hand::Right => oo * nm * nm2 + mm,
                            };
                            rows[r + idx] = f.entry(a, m, o) * f2.entry(a2, m2, o2);
                        }
                    }
                }
            }
        }
    }
    let cod = match f.hand {
        Hand::Left => FiniteSpace::product(&copar, &out),
        Hand::Right => FiniteSpace::product(&out, &copar),
    };
    Ok(CoparKernel { copar, out, hand: f.hand, joint: FiniteKernel::from_parts(dom, cod, rows) })
}

/// Coparameterized Bayes rule.
///
/// For `f: A -> M⊗B` and a prior `π` on `A`, returns `ρ: B -> A⊗M` with
/// `ρ(a, m | b) = f(m, b | a) π(a) / p(b)` wherever `p(b) > 0`; other rows are
/// uniform and flagged unsupported in the returned mask.
pub fn bayes_invert(f: &CoparKernel, pi: &Dist) -> Result<(CoparKernel, SupportMask)> {
    pi.space().check_same(f.dom(), "bayes_invert")?;
    let (na, nm, nb) = (f.dom().size(), f.copar.size(), f.out.size());
    let n_cod = na * nm;
    let mut rows = vec![0.0; nb * n_cod];
    let mut evidence = vec![0.0; nb];
    for a in 0..na {
        let pa = pi.prob(a);
        if pa == 0.0 {
            continue;
        }
        for m in 0..nm {
            for b in 0..nb {
                let v = f.entry(a, m, b) * pa;
                rows[b * n_cod + a * nm + m] = v;
                evidence[b] += v;
            }
        }
    }
    for (b, &p) in evidence.iter().enumerate() {
        let row = &mut rows[b * n_cod..(b + 1) * n_cod];
        if p > 0.0 {
            row.iter_mut().for_each(|v| *v /= p);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / n_cod as f64);
        }
    }
    let mask = SupportMask {
        space: f.out.clone(),
        supported: evidence.iter().map(|&p| p > 0.0).collect(),
    };
    let cod = FiniteSpace::product(f.dom(), &f.copar);
    let inv = CoparKernel {
        copar: f.copar.clone(),
        out: f.dom().clone(),
        hand: Hand::Right,
        joint: FiniteKernel::from_parts(f.out.clone(), cod, rows),
    };
    Ok((inv, mask))
}

#[cfg(test)]
mod tests {
    use super::super::kernel::compose;
    use super::*;

    fn two() -> FiniteSpace {
        FiniteSpace::range(2)
    }

    fn c() -> FiniteKernel {
        FiniteKernel::from_rows(two(), two(), &[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap()
    }

    fn d() -> FiniteKernel {
        FiniteKernel::from_rows(two(), two(), &[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn copy_compose_hand_example() {
        let j = copy_compose(&d(), &c()).unwrap();
        // row a=0 over (b, z): (0,0)=0.5, (0,1)=0, (1,0)=0.25, (1,1)=0.25
        assert_eq!(j.joint().row(0), &[0.5, 0.0, 0.25, 0.25]);
        assert_eq!(discard_coparam(&j), compose(&d(), &c()).unwrap());
    }

    #[test]
    fn copy_compose_with_identity_copies() {
        let j = copy_compose(&d(), &FiniteKernel::identity(two())).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for z in 0..2 {
                    let expected = if a == b { d().entry(a, z) } else { 0.0 };
                    assert_eq!(j.entry(a, b, z), expected);
                }
            }
        }
    }

    #[test]
    fn copy_then_discard_is_identity() {
        let copy = FiniteKernel::copy(FiniteSpace::range(3));
        let f = CoparKernel::new(copy, FiniteSpace::range(3), FiniteSpace::range(3), Hand::Left)
            .unwrap();
        assert_eq!(
            discard_coparam(&f).as_slice(),
            FiniteKernel::identity(FiniteSpace::range(3)).as_slice()
        );
    }

    #[test]
    fn unit_coparameters_reduce_to_copy_compose() {
        let f = CoparKernel::lift(&c(), Hand::Left);
        let g = CoparKernel::lift(&d(), Hand::Left);
        let h = copy_compose_copar(&g, &f).unwrap();
        let plain = copy_compose(&d(), &c()).unwrap();
        assert_eq!(h.copar().canonical_sizes(), plain.copar().canonical_sizes());
        assert_eq!(h.joint().as_slice(), plain.joint().as_slice());
        assert_eq!(h.copar().unit_factor_count(), 2);
    }

    #[test]
    fn identity_lift_keeps_discard() {
        let f = copy_compose(&d(), &c()).unwrap();
        let id = CoparKernel::identity(two(), Hand::Left);
        let h = copy_compose_copar(&id, &f).unwrap();
        assert_eq!(discard_coparam(&h), discard_coparam(&f));
        // project away the copied output and the unit
        let p = h.project_copar(&[0]).unwrap();
        assert_eq!(p.joint().as_slice(), f.joint().as_slice());
    }

    #[test]
    fn bayes_identity_and_zero_mass() {
        let id = CoparKernel::identity(two(), Hand::Left);
        let (inv, mask) = bayes_invert(&id, &Dist::uniform(two())).unwrap();
        assert_eq!(inv.joint().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(mask.count(), 2);
        let (inv, mask) = bayes_invert(&id, &Dist::point(two(), 0)).unwrap();
        assert!(!mask.is_supported(1));
        assert_eq!(inv.joint().row(1), &[0.5, 0.5]);
    }

    #[test]
    fn bayes_constant_channel_returns_prior() {
        // f(m, b | a) = q(m, b), independent of a
        let q = [0.1, 0.2, 0.3, 0.4];
        let joint = FiniteKernel::new(FiniteSpace::range(3), FiniteSpace::range(4), q.repeat(3)).unwrap();
        let f = CoparKernel::new(joint, two(), two(), Hand::Left).unwrap();
        let pi = Dist::new(FiniteSpace::range(3), vec![0.2, 0.3, 0.5]).unwrap();
        let (inv, _) = bayes_invert(&f, &pi).unwrap();
        for b in 0..2 {
            let pb = q[b] + q[2 + b];
            for a in 0..3 {
                for m in 0..2 {
                    let expected = pi.prob(a) * q[m * 2 + b] / pb;
                    assert!((inv.entry(b, m, a) - expected).abs() < 1e-15);
                }
            }
        }
    }
}
