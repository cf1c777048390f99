//! Worked examples across modules, checked against exact or independent values.

use cone_green::asymptotics::{
    boundary_exponent_fit, halfspace_ratio_scan, halfspace_v, interior_ratio_scan, llt_shape_check,
    martin_ratio_scan, vsigma_linearity, wall_point, Solver,
};
use cone_green::exact_dp::{
    expected_tau_from_survival, green_free_truncated, green_truncated, survival,
};
use cone_green::monte_carlo::{estimate_v, mc_green, mc_survival, v_lower_bound_check};
use cone_green::one_dim::{half_line_harmonic, reversed_harmonic};
use cone_green::stats::linear_fit;
use cone_green::{Cone, Pmf1d, StepDistribution};

fn rad2() -> StepDistribution {
    StepDistribution::product(&Pmf1d::rademacher(), 2).unwrap()
}

fn quadrant() -> Cone {
    Cone::wedge(std::f64::consts::FRAC_PI_2).unwrap()
}

fn half_plane() -> Cone {
    Cone::half_space(2).unwrap()
}

#[test]
fn mc_survival_matches_dp() {
    let dp = survival(&rad2(), &half_plane(), &[0, 1], 100).unwrap();
    let mc = mc_survival(&rad2(), &half_plane(), &[0, 1], 100, 50_000, 4).unwrap();
    assert!((mc.mean - dp[100]).abs() < 4.0 * mc.stderr);
}

#[test]
fn mc_green_half_line() {
    let walk = StepDistribution::simple(1).unwrap();
    let e = mc_green(&walk, &Cone::half_space(1).unwrap(), &[1], &[1], 10_000, 50_000, 8).unwrap();
    assert!((e.mean - 2.0).abs() < 4.0 * e.stderr, "{} ± {}", e.mean, e.stderr);
}

#[test]
fn mc_green_matches_dp_half_plane() {
    let dp = green_truncated(&rad2(), &half_plane(), &[0, 1], &[4, 3], 400).unwrap();
    let mc = mc_green(&rad2(), &half_plane(), &[0, 1], &[4, 3], 400, 100_000, 21).unwrap();
    assert!((mc.mean - dp.value).abs() < 4.0 * mc.stderr);
}

#[test]
fn estimate_v_in_quadrant() {
    let cone = quadrant();
    let schedule = [64, 256, 1024];
    // The stderr grows like sqrt(n), so a 5% plateau at n = 1024 needs many paths.
    let centre = estimate_v(&rad2(), &cone, &[3, 3], &schedule, 1_000_000, 1).unwrap();
    assert!(centre.plateau, "{:?}", centre.rows);
    // One-step harmonicity with V estimated on the neighbours of x.
    let mut lhs = 0.0;
    let mut var = centre.stderr.powi(2);
    for (s, p) in rad2().atoms() {
        let y = [3 + s[0], 3 + s[1]];
        if cone.contains(&y) {
            let v = estimate_v(&rad2(), &cone, &y, &schedule, 100_000, 2).unwrap();
            lhs += p * v.value;
            var += (p * v.stderr).powi(2);
        }
    }
    assert!((lhs - centre.value).abs() < 4.0 * var.sqrt());
}

#[test]
fn v_lower_bound_on_ray_grid() {
    let cone = quadrant();
    let mut values = Vec::new();
    for k in [2, 4, 6] {
        for y in [[k, k], [k + 2, k], [k, k + 4]] {
            let v = estimate_v(&rad2(), &cone, &y, &[256, 512], 4000, 3).unwrap();
            values.push((y.to_vec(), v.value));
        }
    }
    assert!(v_lower_bound_check(&cone, &values).unwrap().pass);
}

#[test]
fn free_green_grows_like_sqrt() {
    let walk = StepDistribution::simple(1).unwrap();
    let ns = [1000usize, 2000, 4000, 8000];
    let g: Vec<f64> = ns
        .iter()
        .map(|&n| green_free_truncated(&walk, &[0], &[0], n).unwrap().value.ln())
        .collect();
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let fit = linear_fit(&lx, &g).unwrap();
    assert!((fit.slope - 0.5).abs() < 0.05);
}

#[test]
fn expected_exit_time_grows_like_sqrt() {
    let walk = StepDistribution::simple(1).unwrap();
    let s = survival(&walk, &Cone::half_space(1).unwrap(), &[1], 10_000).unwrap();
    let a = expected_tau_from_survival(&s, 1000);
    let b = expected_tau_from_survival(&s, 10_000);
    let slope = (b / a).ln() / 10f64.ln();
    assert!((slope - 0.5).abs() < 0.05, "slope {slope}");
}

#[test]
fn survival_plateau_independent_of_start() {
    let walk = StepDistribution::simple(1).unwrap();
    let cone = Cone::half_space(1).unwrap();
    let n = 10_000;
    let a = survival(&walk, &cone, &[1], n).unwrap()[n] * (n as f64).sqrt() / half_line_harmonic(&Pmf1d::rademacher(), 1).unwrap();
    let b = survival(&walk, &cone, &[5], n).unwrap()[n] * (n as f64).sqrt() / half_line_harmonic(&Pmf1d::rademacher(), 5).unwrap();
    assert!((a / b - 1.0).abs() < 0.03);
}

#[test]
fn reversed_harmonic_examples() {
    for x in 1..20 {
        assert_eq!(reversed_harmonic(&Pmf1d::rademacher(), x).unwrap(), x as f64);
        assert_eq!(
            reversed_harmonic(&Pmf1d::lazy(), x).unwrap(),
            half_line_harmonic(&Pmf1d::lazy(), x).unwrap()
        );
    }
    let skewed = Pmf1d::new(vec![(-1, 2.0 / 3.0), (2, 1.0 / 3.0)]).unwrap();
    let differs = (2..10).any(|x| {
        (reversed_harmonic(&skewed, x).unwrap() - half_line_harmonic(&skewed, x).unwrap()).abs() > 1e-3
    });
    assert!(differs);
}

#[test]
fn interior_plateau_half_plane() {
    let scan = interior_ratio_scan(&rad2(), &half_plane(), &[0, 1], &[0.0, 1.0], &[10.0, 20.0, 40.0], 1.0, &Solver::dp()).unwrap();
    assert!(scan.plateau_last(0.15), "{:?}", scan.rows);
}

#[test]
fn boundary_fit_half_plane_matches_interior() {
    let walk = rad2();
    let cone = half_plane();
    let path: Vec<Vec<i64>> = (3..=8).map(|m| wall_point(&walk, &cone, &[0, 1], 4 * m, 3).unwrap()).collect();
    let fit = boundary_exponent_fit(&walk, &cone, &[0, 1], &path, 0.4, &Solver::dp()).unwrap();
    assert_eq!(fit.target, -2.0);
    assert!(fit.pass, "slope {}", fit.slope);
}

#[test]
fn half_space_scan_symmetry_and_uniformity() {
    let walk = rad2();
    // Fixed |y| ≈ 24, growing y_d up to |y|/4.
    let targets: Vec<Vec<i64>> = [1i64, 3, 5]
        .iter()
        .map(|&h| {
            let m = ((24.0f64 * 24.0 - (h * h) as f64).sqrt().round() as i64 / 2) * 2 + (h - 1) % 2;
            vec![m, h]
        })
        .collect();
    let scan = halfspace_ratio_scan(&walk, &[0, 1], &targets, &Solver::dp()).unwrap();
    let ratios: Vec<f64> = scan.rows.iter().map(|r| r.ratio).collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo - 1.0 < 0.25, "{ratios:?}");
    // V = V' for a symmetric walk.
    for h in 1..6 {
        assert_eq!(halfspace_v(&walk, h).unwrap(), cone_green::asymptotics::halfspace_v_reversed(&walk, h).unwrap());
    }
}

#[test]
fn martin_mirror_symmetry_in_quadrant() {
    let scan = martin_ratio_scan(&rad2(), &quadrant(), &[1, 3], &[3, 1], &[1.0, 1.0], &[8.0, 12.0], Some(1.0), &Solver::dp()).unwrap();
    for r in &scan.rows {
        assert!((r.ratio - 1.0).abs() < 1e-9, "{r:?}");
    }
}

#[test]
fn mirrored_directions_give_identical_rows() {
    let a = interior_ratio_scan(&rad2(), &half_plane(), &[0, 1], &[1.0, 2.0], &[6.0, 10.0], 1.0, &Solver::dp()).unwrap();
    let b = interior_ratio_scan(&rad2(), &half_plane(), &[0, 1], &[-1.0, 2.0], &[6.0, 10.0], 1.0, &Solver::dp()).unwrap();
    for (r, s) in a.rows.iter().zip(&b.rows) {
        assert_eq!(r.point[0], -s.point[0]);
        assert!((r.ratio - s.ratio).abs() < 1e-12 * r.ratio);
    }
}

#[test]
fn vsigma_profile_in_quadrant() {
    let t = vsigma_linearity(&rad2(), &quadrant(), &[1, 1], 30, &[2, 4, 6, 8], 1.0, &Solver::dp()).unwrap();
    assert!(t.increasing, "{:?}", t.rows);
    assert!(t.fit.r_squared >= 0.9);
    // On the wall the walk is already dead.
    let g = green_truncated(&rad2(), &quadrant(), &[1, 1], &[30, 0], 100).unwrap();
    assert_eq!(g.value, 0.0);
}

#[test]
fn llt_argmax_sits_on_profile_peak() {
    let c = llt_shape_check(&rad2(), &half_plane(), &[0, 1], 400).unwrap();
    assert!(c.argmax_in_peak);
    assert!(c.constant > 0.0);
}
