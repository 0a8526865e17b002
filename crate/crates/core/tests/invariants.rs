use std::f64::consts::PI;

use dicke_core::dynamics::{
    integrate_cavity, integrate_lattice, Boundary, CavityState, IntegrationOptions, LatticeParams,
    LatticeState, SpinVariant,
};
use dicke_core::ensemble::largest_remainder;
use dicke_core::model::{EffectiveParams, SpinGroup};
use dicke_core::stability::{
    build_normal_matrix, critical_coupling_discrete, critical_coupling_lorentzian,
    lattice_critical, lattice_gk, max_real_eigenvalue, normal_characteristic_product,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn group() -> impl Strategy<Value = SpinGroup> {
    (0.1f64..3.0, 0.01f64..1.0, 2u64..100_000).prop_map(|(delta, gc, n)| SpinGroup {
        delta,
        g: gc / (n as f64).sqrt(),
        lambda: 0.0,
        n,
    })
}

fn ensemble() -> impl Strategy<Value = EffectiveParams> {
    (
        0.1f64..3.0,
        0.0f64..1.5,
        prop::collection::vec(group(), 1..6),
    )
        .prop_map(|(dc, kappa, groups)| EffectiveParams::new(dc, kappa, groups).unwrap())
}

fn lattice_state(n: usize) -> impl Strategy<Value = LatticeState> {
    (any::<u64>(), 0.01f64..0.3)
        .prop_map(move |(seed, amp)| LatticeState::random(n, amp, seed, Boundary::Periodic))
}

fn lattice_params() -> impl Strategy<Value = LatticeParams> {
    (
        0.0f64..0.8,
        0.5f64..1.5,
        0.5f64..1.5,
        0.0f64..0.8,
        0.0f64..1.0,
    )
        .prop_map(|(t, dc, ds, kappa, g)| LatticeParams {
            hopping: t,
            delta_c: dc,
            delta_s: ds,
            kappa,
            g,
        })
}

fn max_state_diff(a: &LatticeState, b: &LatticeState) -> f64 {
    let mut d: f64 = 0.0;
    for l in 0..a.n_sites() {
        d = d
            .max((a.a[l] - b.a[l]).norm())
            .max((a.jm[l] - b.jm[l]).norm())
            .max((a.jz[l] - b.jz[l]).abs());
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splitting_a_group_changes_nothing(ens in ensemble(), frac in 0.1f64..0.9, re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let first = ens.groups[0];
        let n1 = ((first.n as f64 * frac).round() as u64).clamp(1, first.n - 1);
        let mut split = ens.clone();
        split.groups[0].n = n1;
        split.groups.push(SpinGroup { n: first.n - n1, ..first });
        let a = critical_coupling_discrete(&ens, None).unwrap().g_crit;
        let b = critical_coupling_discrete(&split, None).unwrap().g_crit;
        prop_assert!((a - b).abs() <= 1e-12 * a);
        // the characteristic product gains one spin factor but keeps its zeros
        let lam = Complex64::new(re, im);
        let eps = 1e-6;
        let pa = normal_characteristic_product(&ens, eps, lam);
        let pb = normal_characteristic_product(&split, eps, lam);
        let extra = first.delta * first.delta + (lam + eps) * (lam + eps);
        prop_assert!((pa * extra - pb).norm() <= 1e-10 * pb.norm().max(1e-300));
    }

    #[test]
    fn group_order_is_irrelevant(ens in ensemble(), seed in any::<u64>()) {
        let mut shuffled = ens.clone();
        let n = shuffled.groups.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
            shuffled.groups.swap(i, j);
        }
        let a = critical_coupling_discrete(&ens, None).unwrap().g_crit;
        let b = critical_coupling_discrete(&shuffled, None).unwrap().g_crit;
        prop_assert!((a - b).abs() <= 1e-12 * a);
        let ra = max_real_eigenvalue(&build_normal_matrix(&ens, 1e-6), 1e-6).unwrap().max_real_part;
        let rb = max_real_eigenvalue(&build_normal_matrix(&shuffled, 1e-6), 1e-6).unwrap().max_real_part;
        prop_assert!((ra - rb).abs() <= 1e-9);
    }

    #[test]
    fn gk_is_even(k in -PI..PI, t in 0.0f64..1.0, dc in 0.1f64..2.0, ds in 0.1f64..2.0, kappa in 0.0f64..1.0) {
        prop_assert_eq!(lattice_gk(k, t, dc, ds, kappa), lattice_gk(-k, t, dc, ds, kappa));
    }

    #[test]
    fn critical_coupling_grows_with_loss(ens in ensemble(), extra in 0.01f64..1.0) {
        let mut lossy = ens.clone();
        lossy.kappa += extra;
        let a = critical_coupling_discrete(&ens, None).unwrap().g_crit;
        let b = critical_coupling_discrete(&lossy, None).unwrap().g_crit;
        prop_assert!(b > a);
    }

    #[test]
    fn broadening_raises_lorentzian_threshold(g1 in 0.0f64..3.0, dg in 0.01f64..3.0, kappa in 0.0f64..1.0) {
        let a = critical_coupling_lorentzian(1.0, 1.0, kappa, g1).unwrap();
        let b = critical_coupling_lorentzian(1.0, 1.0, kappa, g1 + dg).unwrap();
        prop_assert!(b > a);
    }

    #[test]
    fn hopping_never_raises_lattice_threshold(t1 in 0.0f64..0.49, dt in 0.0f64..0.01, kappa in 0.0f64..0.8) {
        let t2 = (t1 + dt).min(0.5);
        let a = lattice_critical(t1, 1.0, 1.0, kappa).unwrap().g_crit.unwrap();
        let b = lattice_critical(t2, 1.0, 1.0, kappa).unwrap().g_crit.unwrap();
        prop_assert!(b <= a * (1.0 + 1e-14));
    }

    #[test]
    fn largest_remainder_conserves_total(total in 0u64..10_000_000, w in prop::collection::vec(0.0f64..1.0, 1..20)) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let parts = largest_remainder(total, &w);
        prop_assert_eq!(parts.iter().sum::<u64>(), total);
        for (p, wi) in parts.iter().zip(&w) {
            if *wi == 0.0 {
                prop_assert_eq!(*p, 0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn z2_flip_commutes_with_evolution(p in lattice_params(), init in lattice_state(6)) {
        let opts = IntegrationOptions::new(5.0, 0.01, 500);
        let mut flipped = init.clone();
        for l in 0..6 {
            flipped.a[l] = -flipped.a[l];
            flipped.jm[l] = -flipped.jm[l];
        }
        let a = integrate_lattice(&p, &init, &opts).unwrap();
        let b = integrate_lattice(&p, &flipped, &opts).unwrap();
        let (a, mut b) = (a.last().unwrap().clone(), b.last().unwrap().clone());
        for l in 0..6 {
            b.a[l] = -b.a[l];
            b.jm[l] = -b.jm[l];
        }
        prop_assert!(max_state_diff(&a, &b) <= 1e-12);
    }

    #[test]
    fn translation_commutes_with_evolution(p in lattice_params(), init in lattice_state(7), shift in 1usize..7) {
        let opts = IntegrationOptions::new(5.0, 0.01, 500);
        let a = integrate_lattice(&p, &init, &opts).unwrap();
        let b = integrate_lattice(&p, &init.shifted(shift), &opts).unwrap();
        let expect = a.last().unwrap().shifted(shift);
        prop_assert!(max_state_diff(&expect, b.last().unwrap()) <= 1e-12);
    }

    #[test]
    fn uniform_lattice_is_a_single_cavity(
        p in lattice_params(),
        re in -0.5f64..0.5,
        im in -0.5f64..0.5,
        theta in 2.0f64..3.1,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        prop_assume!(p.delta_c - 2.0 * p.hopping > 0.05);
        let a0 = Complex64::new(re, im);
        let jm0 = Complex64::from_polar(0.5 * theta.sin(), phi);
        let jz0 = 0.5 * theta.cos();
        let lattice = LatticeState::uniform(5, a0, jm0, jz0, Boundary::Periodic);
        let n = 1_000u64;
        let ens = EffectiveParams::new(
            p.delta_c - 2.0 * p.hopping,
            p.kappa,
            vec![SpinGroup { delta: p.delta_s, g: p.g / (n as f64).sqrt(), lambda: 0.0, n }],
        )
        .unwrap();
        let cavity = CavityState { time: 0.0, alpha: a0, betas: vec![2.0 * jm0], z: vec![2.0 * jz0] };
        let opts = IntegrationOptions::new(10.0, 0.01, 10);
        let lt = integrate_lattice(&p, &lattice, &opts).unwrap();
        let ct = integrate_cavity(&ens, &cavity, &opts, SpinVariant::Unconstrained).unwrap();
        prop_assert_eq!(lt.len(), ct.len());
        for (l, c) in lt.iter().zip(&ct) {
            for site in 0..5 {
                prop_assert!((l.a[site] - c.alpha).norm() <= 1e-10);
                prop_assert!((2.0 * l.jm[site] - c.betas[0]).norm() <= 1e-10);
                prop_assert!((2.0 * l.jz[site] - c.z[0]).abs() <= 1e-10);
            }
        }
    }
}
