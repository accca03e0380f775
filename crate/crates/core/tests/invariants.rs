use proptest::prelude::*;

use statgames::discrete::{
    bayes_invert, compose, copy_compose, discard_coparam, effect_add, push, CoparKernel, Effect, FiniteKernel,
    FiniteSpace, Hand,
};
use statgames::gaussian::{g_compose, g_copy_compose, g_discard, g_push};
use statgames::harness::{
    gen_kernel, rng_from_seed, sample_discrete_forward, sample_dist, sample_gauss_channel_with, sample_gauss_state,
    sample_lens, sample_state,
};
use statgames::lens::{buco_residual, exact_lens, Channel, Obs, State};
use statgames::loss::{fe_loss, kl_loss, mle_loss};

fn kernel(seed: u64, dom: usize, cod: usize) -> FiniteKernel {
    gen_kernel(seed, dom, cod)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sizes() -> impl Strategy<Value = (u64, usize, usize, usize, usize)> {
    (any::<u64>(), 1..=4usize, 1..=4usize, 1..=4usize, 1..=4usize)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_is_associative((seed, a, b, c, d) in sizes()) {
        let f = kernel(seed, a, b).relabel(FiniteSpace::named("a", a), FiniteSpace::named("b", b)).unwrap();
        let g = kernel(seed ^ 1, b, c).relabel(FiniteSpace::named("b", b), FiniteSpace::named("c", c)).unwrap();
        let h = kernel(seed ^ 2, c, d).relabel(FiniteSpace::named("c", c), FiniteSpace::named("d", d)).unwrap();
        let left = compose(&h, &compose(&g, &f).unwrap()).unwrap();
        let right = compose(&compose(&h, &g).unwrap(), &f).unwrap();
        prop_assert!(max_gap(left.as_slice(), right.as_slice()) < 1e-12);
    }

    #[test]
    fn copy_composite_marginalizes_to_composite((seed, a, b, c, _) in sizes()) {
        let f = kernel(seed, a, b).relabel(FiniteSpace::named("a", a), FiniteSpace::named("b", b)).unwrap();
        let g = kernel(seed ^ 1, b, c).relabel(FiniteSpace::named("b", b), FiniteSpace::named("c", c)).unwrap();
        let cc = copy_compose(&g, &f).unwrap();
        prop_assert!(cc.joint().max_row_defect() < 1e-12);
        let plain = compose(&g, &f).unwrap();
        prop_assert!(max_gap(discard_coparam(&cc).as_slice(), plain.as_slice()) < 1e-12);
    }

    #[test]
    fn pushforward_keeps_mass((seed, a, b, _, _) in sizes()) {
        let mut rng = rng_from_seed(seed);
        let k = kernel(seed, a, b);
        let pi = sample_dist(&mut rng, k.dom(), true);
        let out = push(&k, &pi).unwrap();
        prop_assert!((out.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(out.mass().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn inversion_is_stochastic_on_the_support(seed in any::<u64>(), nx in 1..=4usize, nm in 1..=3usize, ny in 1..=4usize, degenerate in any::<bool>()) {
        let mut rng = rng_from_seed(seed);
        let x = FiniteSpace::named("x", nx);
        let (fwd, _) = sample_discrete_forward(&mut rng, &x, &FiniteSpace::named("m", nm), &FiniteSpace::named("y", ny), degenerate);
        let pi = sample_dist(&mut rng, &x, degenerate);
        let Channel::Discrete(k) = fwd else { unreachable!() };
        let (inv, mask): (CoparKernel, _) = bayes_invert(&k, &pi).unwrap();
        prop_assert_eq!(inv.hand(), Hand::Right);
        for y in (0..ny).filter(|&y| mask.is_supported(y)) {
            prop_assert!((inv.joint().row(y).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn effects_form_a_commutative_monoid(values in prop::collection::vec(prop_oneof![9 => 0f64..1e3, 1 => Just(f64::INFINITY)], 1..6)) {
        let s = FiniteSpace::named("s", values.len());
        let g = Effect::new(s.clone(), values.clone()).unwrap();
        let h = Effect::new(s.clone(), values.iter().map(|v| v * 0.5 + 1.0).collect()).unwrap();
        let zero = Effect::zero(s);
        let (gz, gh, hg) = (effect_add(&g, &zero).unwrap(), effect_add(&g, &h).unwrap(), effect_add(&h, &g).unwrap());
        prop_assert_eq!(gz.values(), g.values());
        prop_assert_eq!(gh.values(), hg.values());
    }

    #[test]
    fn losses_satisfy_fe_eq_kl_plus_mle(seed in any::<u64>(), nx in 1..=4usize, nm in 1..=2usize, ny in 1..=4usize, exact in any::<bool>()) {
        let mut rng = rng_from_seed(seed);
        let x = FiniteSpace::named("x", nx);
        let (fwd, _) = sample_discrete_forward(&mut rng, &x, &FiniteSpace::named("m", nm), &FiniteSpace::named("y", ny), false);
        let lens = sample_lens(&mut rng, fwd, exact);
        let pi = sample_state(&mut rng, &lens.dom(), false);
        for y in 0..ny {
            let obs = Obs::Discrete(y);
            let (kl, mle, fe) = (
                kl_loss(&lens).eval(&pi, &obs).unwrap(),
                mle_loss(&lens).eval(&pi, &obs).unwrap(),
                fe_loss(&lens).eval(&pi, &obs).unwrap(),
            );
            prop_assert!(kl >= -1e-12 && mle >= 0.0);
            prop_assert!((fe - (kl + mle)).abs() < 1e-9);
            if exact {
                prop_assert!(kl.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_lenses_compose_to_exact_inversions(seed in any::<u64>(), nx in 1..=4usize, ny in 1..=4usize, nz in 1..=4usize) {
        let mut rng = rng_from_seed(seed);
        let x = FiniteSpace::named("x", nx);
        let m = FiniteSpace::named("m", 2);
        let (cf, _) = sample_discrete_forward(&mut rng, &x, &m, &FiniteSpace::named("y", ny), false);
        let (df, _) = sample_discrete_forward(&mut rng, &FiniteSpace::named("y", ny), &m, &FiniteSpace::named("z", nz), false);
        let (c, d) = (exact_lens(cf).unwrap(), exact_lens(df).unwrap());
        let pi = State::Discrete(sample_dist(&mut rng, &x, false));
        prop_assert!(buco_residual(&c, &d, &pi).unwrap() < 1e-9);
    }

    #[test]
    fn gaussian_copy_composite_discards_to_composite(seed in any::<u64>(), a in 1..=3usize, b in 1..=3usize, c in 1..=3usize) {
        let mut rng = rng_from_seed(seed);
        let f = sample_gauss_channel_with(&mut rng, a, b, 0, 0.1);
        let g = sample_gauss_channel_with(&mut rng, b, c, 0, 0.1);
        let s = sample_gauss_state(&mut rng, a);
        let cc = g_copy_compose(&g, &f).unwrap();
        prop_assert!(g_discard(&cc).max_abs_diff(&g_compose(&g, &f).unwrap()).unwrap() < 1e-12);
        let via = g_push(&g, &g_push(&f, &s).unwrap()).unwrap();
        let direct = g_push(&g_compose(&g, &f).unwrap(), &s).unwrap();
        prop_assert!((via.mean() - direct.mean()).amax() < 1e-9);
        prop_assert!((via.cov() - direct.cov()).amax() < 1e-9);
    }
}
