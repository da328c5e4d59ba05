use std::sync::Arc;

use conclab_core::chaos::{centered_poly, tail_bound, CoefficientTensor, TailKind, TensorNorms};
use conclab_core::diff::{d_lower, h_upper, h_upper_one, Kernels};
use conclab_core::dynamics::{empirical_tail, run_chain, ChainKind, ChainSpec, Observable};
use conclab_core::functionals::{entropy, pi_constant_exact, Gradient, lsi_ratio};
use conclab_core::ising::{j_norm_1to1, opnorm_2to2, CouplingMode};
use conclab_core::space::{disintegrate, PermVector, SliceConfig, SpinConfig};
use conclab_core::tensorization::{
    entropy_chain_rule_check, rel_entropy, sandwich_check, tv, w2,
};
use conclab_core::{IndexFamily, IsingModel, SpaceKind, StateSpace, TabulatedMeasure};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weights(rng: &mut ChaCha8Rng, len: usize, zeros: bool) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..len)
            .map(|_| if zeros && rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(0.01..1.0) })
            .collect();
        if w.iter().any(|v| *v > 0.0) {
            return w;
        }
    }
}

fn measure(space: &Arc<StateSpace>, seed: u64, zeros: bool) -> TabulatedMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TabulatedMeasure::from_weights(space.clone(), weights(&mut rng, space.len(), zeros)).unwrap()
}

fn values(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn model(seed: u64, n: usize) -> IsingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = rng.random_range(0.0..0.9);
    IsingModel::random(n, j, 1.0, &mut rng)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn spin_codec_round_trips(spins in prop::collection::vec(prop::bool::ANY, 1..=24)) {
        let s: Vec<i8> = spins.iter().map(|b| if *b { 1 } else { -1 }).collect();
        let c = SpinConfig::from_spins(&s).unwrap();
        prop_assert_eq!(c.to_spins(), s);
        prop_assert_eq!(SpinConfig::new(c.bits(), c.n()).unwrap(), c);
    }

    #[test]
    fn slice_configs_keep_popcount(n in 1usize..=20, occ in any::<u64>()) {
        let occ = occ & ((1u64 << n) - 1);
        let r = occ.count_ones() as usize;
        prop_assert!(SliceConfig::new(occ, n, r).is_ok());
        prop_assert!(SliceConfig::new(occ, n, (r + 1) % (n + 1)).is_err() || r + 1 > n);
    }

    #[test]
    fn perm_vectors_need_distinct_entries(entries in prop::collection::vec(1u8..=5, 5)) {
        let mut sorted = entries.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(PermVector::new(entries).is_ok(), sorted.len() == 5);
    }

    #[test]
    fn measures_are_normalized(n in 1usize..=8, seed in any::<u64>()) {
        let space = StateSpace::enumerate(SpaceKind::Spins { n }).unwrap();
        let mu = measure(&space, seed, true);
        prop_assert!((mu.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (p, lp) in mu.probs().iter().zip(mu.log_probs()) {
            if *p > 0.0 {
                prop_assert!((p - lp.exp()).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn disintegration_reconstructs(n in 1usize..=6, seed in any::<u64>(), mask in any::<u8>()) {
        let space = StateSpace::enumerate(SpaceKind::Spins { n }).unwrap();
        let mu = measure(&space, seed, true);
        let subset: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let subset = if subset.is_empty() { vec![n - 1] } else { subset };
        let d = disintegrate(&mu, &subset).unwrap();
        let f = values(seed, mu.len());
        prop_assert!((d.iterated_expectation(&f) - mu.expect(&f)).abs() <= 1e-12);
        let total: f64 = d.marginal.iter().map(|(_, m)| m).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for fb in d.kernel.fibers().iter().filter(|fb| fb.has_row()) {
            prop_assert!((fb.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn conditionals_and_coupling_matrix(n in 2usize..=7, seed in any::<u64>()) {
        let m = model(seed, n);
        let mu = m.gibbs_measure().unwrap();
        for x in 0..mu.len() as u64 {
            for i in 0..n {
                let plus = mu.probs()[(x | 1 << i) as usize];
                let minus = mu.probs()[(x & !(1 << i)) as usize];
                prop_assert!((m.conditional_plus(i, x) - plus / (plus + minus)).abs() <= 1e-13);
            }
        }
        let a = m.coupling_matrix(CouplingMode::Exact { max_n: 8 }).unwrap();
        prop_assert!((&a - m.j().abs()).max() <= 1e-12);
        prop_assert!(opnorm_2to2(&a).unwrap() <= j_norm_1to1(m.j()) + 1e-10);
    }

    #[test]
    fn strong_fields_stay_normalized(n in 1usize..=10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 30.0 } else { -30.0 });
        let m = IsingModel::curie_weiss(n, 0.3, h).unwrap();
        let mu = m.gibbs_measure().unwrap();
        prop_assert!((mu.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn lower_gradient_is_below_upper(n in 1usize..=6, seed in any::<u64>()) {
        let mu = model(seed, n).gibbs_measure().unwrap();
        let kernels = Kernels::new(&mu, &IndexFamily::singletons(n)).unwrap();
        let f = values(seed, mu.len());
        let lo = d_lower(&f, &kernels).unwrap().pointwise_norm();
        let hi = h_upper(&f, &kernels).unwrap().pointwise_norm();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(*a <= b + 1e-12);
        }
    }

    #[test]
    fn transposition_difference_is_idempotent(seed in any::<u64>()) {
        let space = StateSpace::enumerate(SpaceKind::Perms { n: 4 }).unwrap();
        let mu = measure(&space, seed, false);
        let kernels = Kernels::new(&mu, &IndexFamily::pairs(4)).unwrap();
        let f = values(seed, mu.len());
        for k in kernels.iter() {
            let once = h_upper_one(&f, k);
            let twice = h_upper_one(&once, k);
            prop_assert!(twice.iter().all(|v| v.abs() <= 1e-15));
        }
    }

    #[test]
    fn entropy_is_nonnegative_and_homogeneous(n in 1usize..=6, seed in any::<u64>(), lambda in 0.01f64..100.0) {
        let space = StateSpace::enumerate(SpaceKind::Spins { n }).unwrap();
        let mu = measure(&space, seed, true);
        let g: Vec<f64> = values(seed, mu.len()).iter().map(|v| v.abs()).collect();
        let e = entropy(&mu, &g).unwrap();
        prop_assert!(e >= -1e-15);
        let scaled: Vec<f64> = g.iter().map(|v| lambda * v).collect();
        let es = entropy(&mu, &scaled).unwrap();
        prop_assert!((es - lambda * e).abs() <= 1e-10 * (1.0 + lambda * e));
    }

    #[test]
    fn certified_constant_dominates_ratios(n in 1usize..=5, seed in any::<u64>()) {
        let m = model(seed, n);
        let sigma2 = m.lsi_certificate(CouplingMode::auto(n)).unwrap().sigma2_cert;
        let mu = m.gibbs_measure().unwrap();
        let kernels = Kernels::new(&mu, &IndexFamily::singletons(n)).unwrap();
        let f = values(seed, mu.len());
        let ratio = lsi_ratio(&mu, &kernels, Gradient::Lower, &f).unwrap();
        prop_assert!(ratio <= sigma2 * (1.0 + 1e-12));
        let pi = pi_constant_exact(&mu, &kernels).unwrap();
        prop_assert!(pi.sigma2 <= sigma2 * (1.0 + 1e-12));
    }

    #[test]
    fn chain_rule_on_three_spins(seed in any::<u64>()) {
        let space = StateSpace::enumerate(SpaceKind::Spins { n: 3 }).unwrap();
        let p = measure(&space, seed, true);
        let q = measure(&space, seed.wrapping_add(1), false);
        prop_assert!(entropy_chain_rule_check(&p, &q).unwrap() <= 1e-12);
    }

    #[test]
    fn w2_is_a_symmetric_sandwiched_distance(seed in any::<u64>(), n in 1usize..=3) {
        let space = StateSpace::enumerate(SpaceKind::Spins { n }).unwrap();
        let mu = measure(&space, seed, true);
        let nu = measure(&space, seed.wrapping_mul(31).wrapping_add(7), true);
        let tol = 1e-6;
        let fwd = w2(&mu, &nu, tol).unwrap();
        let back = w2(&nu, &mu, tol).unwrap();
        prop_assert!((fwd.value - back.value).abs() <= 2.0 * tol);
        prop_assert!(w2(&mu, &mu, tol).unwrap().value <= tol);
        if tv(&mu, &nu).unwrap() > 1e-3 {
            prop_assert!(fwd.value > tol);
        }
        for (x, y) in fwd.plan.row_marginal().iter().zip(mu.probs()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
        for (x, y) in fwd.plan.col_marginal().iter().zip(nu.probs()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
        prop_assert!(fwd.plan.entries().iter().all(|(_, _, v)| *v >= 0.0));
        let s = sandwich_check(&mu, &nu, tol).unwrap();
        prop_assert!(s.lower <= s.w2 + tol && s.w2 <= s.w1_hamming + tol);
        prop_assert!(s.w2 <= (n as f64).sqrt() * s.upper + tol);
    }

    #[test]
    fn pinsker(seed in any::<u64>(), n in 1usize..=5) {
        let space = StateSpace::enumerate(SpaceKind::Spins { n }).unwrap();
        let p = measure(&space, seed, true);
        let q = measure(&space, seed ^ 0xabc, false);
        let h = rel_entropy(&p, &q).unwrap();
        let d = tv(&p, &q).unwrap();
        prop_assert!(h >= 2.0 * d * d - 1e-12);
    }

    #[test]
    fn tensor_validation(n in 3usize..=6, v in -5.0f64..5.0) {
        prop_assert!(CoefficientTensor::new(n, 2, vec![(vec![0, 0], v)]).is_err());
        let mut dense = vec![0.0; n * n];
        dense[1] = v + 1.0;
        prop_assert!(CoefficientTensor::from_dense(n, 2, &dense).is_err());
        dense[n] = v + 1.0;
        prop_assert!(CoefficientTensor::from_dense(n, 2, &dense).is_ok());
        dense[0] = 1.0;
        prop_assert!(CoefficientTensor::from_dense(n, 2, &dense).is_err());
    }

    #[test]
    fn centered_polynomials_have_zero_mean(n in 3usize..=6, seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = if d == 3 {
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let base = IsingModel::random(n, 0.6, 0.0, &mut r2);
            IsingModel::new(base.j().clone(), DVector::zeros(n)).unwrap()
        } else {
            model(seed, n)
        };
        let mu = m.gibbs_measure().unwrap();
        let dense_entries: Vec<(Vec<usize>, f64)> = subsets(n, d)
            .into_iter()
            .map(|s| (s, rng.random_range(-1.0..1.0)))
            .collect();
        let a = CoefficientTensor::new(n, d, dense_entries).unwrap();
        let f = centered_poly(&mu, &a).unwrap();
        prop_assert!(mu.expect(f.values()).abs() <= 1e-12);
    }

    #[test]
    fn tail_bound_monotone_and_rescaling_invariant(
        d in 1usize..=4,
        n in 1usize..=100,
        hs in 0.1f64..50.0,
        sup in 0.01f64..5.0,
        c in 0.01f64..10.0,
        t0 in 0.0f64..100.0,
        dt in 0.0f64..100.0,
        lambda in 0.01f64..100.0,
    ) {
        for kind in [TailKind::Thm13, TailKind::Thm14] {
            let norms = TensorNorms { hs, sup };
            let a = tail_bound(kind, d, n, norms, c, t0);
            let b = tail_bound(kind, d, n, norms, c, t0 + dt);
            prop_assert!(b <= a);
            let scaled = TensorNorms { hs: lambda * hs, sup: lambda * sup };
            let s = tail_bound(kind, d, n, scaled, c, lambda * t0);
            prop_assert!((s - a).abs() <= 1e-12);
        }
    }

    #[test]
    fn empirical_tail_is_monotone(seed in any::<u64>()) {
        let m = model(seed, 5).into_shared();
        let spec = ChainSpec { kind: ChainKind::Glauber(m), steps: 3_000, burn_in: 100, thinning: 3, seed };
        let batch = run_chain(&spec, &Observable::Elementary { d: 2 }).unwrap();
        let grid: Vec<f64> = (0..30).map(|k| k as f64 * 0.5).collect();
        let curve = empirical_tail(&batch.values, 0.0, &grid);
        let tails: Vec<f64> = curve.rows.iter().map(|r| r.empirical.unwrap()).collect();
        prop_assert!(tails.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(tails.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}
