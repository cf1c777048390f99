use proptest::prelude::*;

use cone_green::asymptotics::{martin_ratio_scan, profile_integral, Solver};
use cone_green::exact_dp::{KernelOptions, KilledKernel};
use cone_green::monte_carlo::mc_green;
use cone_green::one_dim::{harmonicity_residual, LadderLaw};
use cone_green::{Cone, Lattice, Pmf1d, StepDistribution};

fn cones() -> impl Strategy<Value = Cone> {
    prop_oneof![
        Just(Cone::half_space(2).unwrap()),
        Just(Cone::orthant(2).unwrap()),
        (0.3f64..6.0).prop_map(|b| Cone::wedge(b).unwrap()),
    ]
}

/// Small 2D laws with a full-rank step lattice.
fn laws() -> impl Strategy<Value = StepDistribution> {
    prop::collection::vec(((-2i64..=2, -2i64..=2), 1u32..10), 1..5).prop_map(|extra| {
        let mut atoms: Vec<(Vec<i64>, f64)> = vec![(vec![1, 0], 3.0), (vec![0, 1], 3.0), (vec![-1, -1], 3.0)];
        for ((a, b), w) in extra {
            atoms.push((vec![a, b], w as f64));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        for a in &mut atoms {
            a.1 /= total;
        }
        StepDistribution::from_atoms(2, atoms).unwrap()
    })
}

fn inside(cone: &Cone) -> impl Strategy<Value = Vec<i64>> {
    let c = cone.clone();
    (0i64..8, 0i64..8)
        .prop_map(|(a, b)| vec![a, b])
        .prop_filter("start inside the cone", move |x| c.contains(x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn conservation_and_bounds((cone, x) in cones().prop_flat_map(|c| (Just(c.clone()), inside(&c))), dist in laws(), n in 0usize..30) {
        let opts = KernelOptions { snapshots: (0..=n).collect(), ..Default::default() };
        let k: KilledKernel<f64> = KilledKernel::build(&dist, &cone, &x, n, &opts).unwrap();
        let s = k.survival();
        for m in 0..=n {
            let layer = k.snapshot(m).unwrap();
            let mut total = 0.0;
            for (y, v) in layer.iter() {
                prop_assert!(cone.contains(&y));
                prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
                total += v;
            }
            prop_assert!((total - s[m]).abs() < 1e-12);
            if m > 0 {
                prop_assert!(s[m] <= s[m - 1] + 1e-15);
            }
        }
    }

    #[test]
    fn killed_below_free((cone, x) in cones().prop_flat_map(|c| (Just(c.clone()), inside(&c))), dist in laws(), n in 1usize..25) {
        let killed: KilledKernel<f64> = KilledKernel::build(&dist, &cone, &x, n, &KernelOptions::default()).unwrap();
        let free: KilledKernel<f64> = KilledKernel::build_free(&dist, &x, n, &KernelOptions::default()).unwrap();
        for (y, v) in killed.final_layer().iter() {
            prop_assert!(v <= free.final_layer().get(&y) + 1e-15);
        }
        for (y, g) in killed.green_points() {
            prop_assert!(g <= free.green_at(&y) + 1e-12);
        }
    }

    #[test]
    fn green_monotone_in_horizon(dist in laws(), y in (0i64..6, 1i64..6), n in 1usize..30) {
        let cone = Cone::half_space(2).unwrap();
        let y = vec![y.0, y.1];
        let a: KilledKernel<f64> = KilledKernel::build(&dist, &cone, &[0, 2], n, &KernelOptions::default()).unwrap();
        let b: KilledKernel<f64> = KilledKernel::build(&dist, &cone, &[0, 2], n + 1, &KernelOptions::default()).unwrap();
        prop_assert!(a.green_at(&y) <= b.green_at(&y));
    }

    #[test]
    fn duality_on_random_laws(dist in laws(), x in (0i64..5, 1i64..5), y in (0i64..5, 1i64..5), n in 0usize..20) {
        let cone = Cone::half_space(2).unwrap();
        let (x, y) = (vec![x.0, x.1], vec![y.0, y.1]);
        let fwd: KilledKernel<f64> = KilledKernel::build(&dist, &cone, &x, n, &KernelOptions { track: vec![y.clone()], ..Default::default() }).unwrap();
        let bwd: KilledKernel<f64> = KilledKernel::build(&dist.reversed(), &cone, &y, n, &KernelOptions { track: vec![x.clone()], ..Default::default() }).unwrap();
        for (a, b) in fwd.tracked(&y).unwrap().iter().zip(bwd.tracked(&x).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_points_are_zero(x in (0i64..6, 1i64..6), y in (-6i64..6, 1i64..8), n in 0usize..20) {
        let dist = StepDistribution::product(&Pmf1d::rademacher(), 2).unwrap();
        let cone = Cone::half_space(2).unwrap();
        let (x, y) = (vec![x.0, x.1], vec![y.0, y.1]);
        let k: KilledKernel<f64> = KilledKernel::build(&dist, &cone, &x, n, &KernelOptions::default()).unwrap();
        if !dist.periodicity().reachable_at(&x, &y, n) {
            prop_assert_eq!(k.final_layer().get(&y), 0.0);
        }
        if !dist.periodicity().reachable(&x, &y) {
            prop_assert_eq!(k.green_at(&y), 0.0);
        }
    }

    #[test]
    fn lattice_reduction_is_canonical(gens in prop::collection::vec(prop::collection::vec(-4i64..=4, 2), 2..4), v in prop::collection::vec(-20i64..20, 2), w in prop::collection::vec(-3i64..3, 2)) {
        let l = Lattice::generated_by(2, &gens);
        prop_assume!(l.is_full_rank());
        let r = l.reduce(&v);
        prop_assert_eq!(l.reduce(&r), r.clone());
        let shifted: Vec<i64> = v.iter().zip(l.point(&w)).map(|(a, b)| a + b).collect();
        prop_assert_eq!(l.reduce(&shifted), r.clone());
        let diff: Vec<i64> = v.iter().zip(&r).map(|(a, b)| a - b).collect();
        prop_assert!(l.contains(&diff));
    }

    #[test]
    fn moments_are_consistent(dist in laws()) {
        prop_assert!((dist.moment(0.0) - 1.0).abs() < 1e-12);
        prop_assert!(dist.cached_moments_consistent());
    }

    #[test]
    fn profile_integral_decreases_in_eps(p in 0.5f64..3.0, d in 2usize..5, a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(profile_integral(p, d, lo).unwrap() >= profile_integral(p, d, hi).unwrap() - 1e-12);
    }

    #[test]
    fn martin_self_ratio_is_one(x in (-3i64..3, 1i64..5)) {
        let dist = StepDistribution::product(&Pmf1d::rademacher(), 2).unwrap();
        let cone = Cone::half_space(2).unwrap();
        let x = vec![x.0, x.1];
        let s = martin_ratio_scan(&dist, &cone, &x, &x, &[0.0, 1.0], &[5.0, 7.0], Some(1.0), &Solver::dp()).unwrap();
        for r in &s.rows {
            prop_assert_eq!(r.ratio, 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ladder_tables_are_harmonic(weights in prop::collection::vec(1u32..5, 3)) {
        // Mean-zero law on {-2, -1, 1, 2}-type supports built from the weights.
        let (a, b, c) = (weights[0] as f64, weights[1] as f64, weights[2] as f64);
        // Choose P(+2) so the mean vanishes: -2a - b + c + 2d = 0.
        let d = (2.0 * a + b - c) / 2.0;
        prop_assume!(d > 0.0);
        let total = a + b + c + d;
        let pmf = Pmf1d::new(vec![(-2, a / total), (-1, b / total), (1, c / total), (2, d / total)]).unwrap();
        let table = LadderLaw::<f64>::build(&pmf.reflected(), 40_000, 80).unwrap();
        let mut prev = 0.0;
        for x in 1..=70 {
            let v = table.harmonic(x).unwrap();
            prop_assert!(v >= prev);
            prev = v;
            prop_assert!(harmonicity_residual(&pmf, &table, x).unwrap() < 1e-5);
        }
        let total: f64 = table.heights().map(|(_, p)| p).sum();
        prop_assert!(total <= 1.0 + 1e-12);
    }

    #[test]
    fn mc_is_deterministic(seed in any::<u64>()) {
        let dist = StepDistribution::product(&Pmf1d::rademacher(), 2).unwrap();
        let cone = Cone::half_space(2).unwrap();
        let a = mc_green(&dist, &cone, &[0, 1], &[2, 3], 60, 500, seed).unwrap();
        let b = mc_green(&dist, &cone, &[0, 1], &[2, 3], 60, 500, seed).unwrap();
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert!(a.stderr >= 0.0);
    }
}
