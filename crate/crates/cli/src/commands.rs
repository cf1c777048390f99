//! Subcommand implementations. Each builds one CSV table and a summary line.

use std::path::PathBuf;

use cone_green::asymptotics::{
    boundary_exponent_fit, halfspace_ratio_scan, halfspace_v, interior_exponent_fit,
    interior_ratio_scan, llt_shape_check, martin_ratio_scan, profile_integral,
    profile_integral_closed_form, wall_point, RatioScan, Solver,
};
use cone_green::exact_dp::{KernelOptions, KilledKernel};
use cone_green::monte_carlo::{estimate_v, mc_green, mc_green_tilted, McEstimate};
use cone_green::one_dim::harmonic_table;
use cone_green::step_models::validate_assumptions;
use cone_green::{Cone, ConeKind, StepDistribution};

use crate::config::{ExperimentConfig, MethodChoice};
use crate::output::{num, point, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] cone_green::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Input(String),
}

pub type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Pass,
    Fail,
}

pub struct Report {
    pub table: Table,
    pub summary: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    GreenExact,
    GreenMc,
    GreenTilted,
    EstimateV,
    Ladder,
    VerifyInterior,
    VerifyBoundary,
    VerifyHalfspace,
    VerifyMartin,
    VerifyLlt,
    Validate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::GreenExact => "green-exact",
            Task::GreenMc => "green-mc",
            Task::GreenTilted => "green-tilted",
            Task::EstimateV => "estimate-v",
            Task::Ladder => "ladder",
            Task::VerifyInterior => "verify-interior",
            Task::VerifyBoundary => "verify-boundary",
            Task::VerifyHalfspace => "verify-halfspace",
            Task::VerifyMartin => "verify-martin",
            Task::VerifyLlt => "verify-llt",
            Task::Validate => "validate",
        }
    }
}

fn verdict(pass: bool) -> (Outcome, &'static str) {
    if pass {
        (Outcome::Pass, "PASS")
    } else {
        (Outcome::Fail, "FAIL")
    }
}

/// Lattice point near the centre of the cone at distance about `k`.
fn central_point(cone: &Cone, dim: usize) -> Vec<i64> {
    match cone.kind() {
        ConeKind::HalfSpace { .. } => {
            let mut x = vec![0; dim];
            x[dim - 1] = 1;
            x
        }
        ConeKind::Orthant { .. } => vec![1; dim],
        ConeKind::Wedge { .. } => {
            let dir = central_direction(cone, dim);
            (1..)
                .map(|k| dir.iter().map(|c| (c * k as f64).round() as i64).collect::<Vec<_>>())
                .find(|x| cone.contains(x))
                .expect("an open wedge contains lattice points")
        }
    }
}

fn central_direction(cone: &Cone, dim: usize) -> Vec<f64> {
    match cone.kind() {
        ConeKind::HalfSpace { .. } => {
            let mut v = vec![0.0; dim];
            v[dim - 1] = 1.0;
            v
        }
        ConeKind::Orthant { .. } => vec![1.0; dim],
        ConeKind::Wedge { opening } => vec![(opening / 2.0).cos(), (opening / 2.0).sin()],
    }
}

struct Setup {
    dist: StepDistribution,
    cone: Cone,
    x: Vec<i64>,
}

fn setup(cfg: &ExperimentConfig) -> RunResult<Setup> {
    let dist = cfg.distribution()?;
    let cone = cfg.build_cone()?;
    let x = cfg.start.clone().unwrap_or_else(|| central_point(&cone, cfg.dim));
    if !cone.contains(&x) {
        return Err(cone_green::Error::OutsideCone(x).into());
    }
    Ok(Setup { dist, cone, x })
}

fn need<'a, T>(v: &'a Option<T>, key: &str, task: Task) -> RunResult<&'a T> {
    v.as_ref()
        .ok_or_else(|| RunError::Input(format!("{}: `{key}` is required", task.name())))
}

fn seed(cfg: &ExperimentConfig, task: Task) -> RunResult<u64> {
    cfg.seed
        .ok_or_else(|| RunError::Input(format!("{}: missing seed (set `seed` or pass --seed)", task.name())))
}

fn solver_for(cfg: &ExperimentConfig, method: MethodChoice, task: Task) -> RunResult<Solver> {
    Ok(match method {
        MethodChoice::Dp | MethodChoice::Auto => Solver::Dp {
            factor: cfg.horizon_factor,
            spread: cfg.spread,
            memory_cap: cfg.memory_cap,
        },
        MethodChoice::Mc => Solver::PlainMc {
            factor: cfg.horizon_factor,
            replicas: cfg.replicas,
            seed: seed(cfg, task)?,
        },
        MethodChoice::Tilted => Solver::TiltedMc {
            factor: cfg.horizon_factor,
            gamma: cfg.gamma,
            replicas: cfg.replicas,
            seed: seed(cfg, task)?,
        },
    })
}

/// Runs `f` with the configured solver. Under `auto`, a DP that would exceed
/// the memory cap falls back to tilted Monte Carlo.
fn with_solver<T>(
    cfg: &ExperimentConfig,
    task: Task,
    f: impl Fn(&Solver) -> cone_green::Result<T>,
) -> RunResult<(T, Solver)> {
    let first = solver_for(cfg, cfg.method, task)?;
    match f(&first) {
        Err(cone_green::Error::MemoryCap { .. }) if cfg.method == MethodChoice::Auto => {
            let s = solver_for(cfg, MethodChoice::Tilted, task)?;
            Ok((f(&s)?, s))
        }
        r => Ok((r?, first)),
    }
}

pub fn run(task: Task, cfg: &ExperimentConfig) -> RunResult<Report> {
    match task {
        Task::GreenExact => green_exact(cfg),
        Task::GreenMc | Task::GreenTilted => green_mc(task, cfg),
        Task::EstimateV => estimate(cfg),
        Task::Ladder => ladder(cfg),
        Task::VerifyInterior => verify_interior(cfg),
        Task::VerifyBoundary => verify_boundary(cfg),
        Task::VerifyHalfspace => verify_halfspace(cfg),
        Task::VerifyMartin => verify_martin(cfg),
        Task::VerifyLlt => verify_llt(cfg),
        Task::Validate => validate(cfg),
    }
}

fn green_exact(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::GreenExact;
    let s = setup(cfg)?;
    let y = need(&cfg.target, "target", task)?.clone();
    let opts = KernelOptions {
        memory_cap: cfg.memory_cap,
        track: vec![y.clone()],
        ..Default::default()
    };
    let k: KilledKernel<f64> = KilledKernel::build(&s.dist, &s.cone, &s.x, cfg.horizon, &opts)?;
    let mut t = Table::new(task.name(), "dp", "probability; partial_green in expected visits", &["n", "survival", "p_n_at_y", "partial_green"]);
    t.comment(format!("x = {}; y = {}", point(&s.x), point(&y)));
    let p_n = k.tracked(&y).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; cfg.horizon + 1]);
    let mut partial = 0.0;
    for (n, (surv, p)) in k.survival().iter().zip(&p_n).enumerate() {
        partial += p;
        t.row(vec![n.to_string(), num(*surv), num(*p), num(partial)]);
    }
    let g = k.green_estimate(&y, s.cone.exponent_p());
    Ok(Report {
        table: t,
        summary: format!(
            "green-exact: G_N(x,y) = {:.10} at N = {} (fitted tail {:.3e}, corrected {:.10})",
            g.value,
            cfg.horizon,
            g.tail_estimate,
            g.corrected()
        ),
        outcome: Outcome::Done,
    })
}

fn mc_row(t: &mut Table, e: &McEstimate) {
    t.row(vec![
        num(e.mean),
        num(e.stderr),
        e.replicas.to_string(),
        e.horizon.to_string(),
        e.seed.to_string(),
        e.method.tag().to_string(),
    ]);
}

const MC_COLUMNS: [&str; 6] = ["estimate", "stderr", "replicas", "horizon", "seed", "method"];

fn green_mc(task: Task, cfg: &ExperimentConfig) -> RunResult<Report> {
    let s = setup(cfg)?;
    let y = need(&cfg.target, "target", task)?;
    let seed = seed(cfg, task)?;
    let e = if task == Task::GreenTilted {
        mc_green_tilted(&s.dist, &s.cone, &s.x, y, cfg.horizon, cfg.gamma, cfg.replicas, seed)?
    } else {
        mc_green(&s.dist, &s.cone, &s.x, y, cfg.horizon, cfg.replicas, seed)?
    };
    let mut t = Table::new(task.name(), e.method.tag(), "expected visits", &MC_COLUMNS);
    t.comment(format!("x = {}; y = {}", point(&s.x), point(y)));
    if task == Task::GreenTilted {
        t.comment(format!("truncation remainder bound = {:e}; gamma = {}", e.remainder_bound, cfg.gamma));
    }
    mc_row(&mut t, &e);
    Ok(Report {
        table: t,
        summary: format!(
            "{}: G_N(x,y) = {:.6e} ± {:.2e} ({} replicas, N = {}, fitted tail {:.3e})",
            task.name(),
            e.mean,
            e.stderr,
            e.replicas,
            e.horizon,
            e.tail_estimate
        ),
        outcome: Outcome::Done,
    })
}

fn estimate(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::EstimateV;
    let s = setup(cfg)?;
    let seed = seed(cfg, task)?;
    let v = estimate_v(&s.dist, &s.cone, &s.x, &cfg.schedule, cfg.replicas, seed)?;
    let mut t = Table::new(task.name(), "plain", "E[u(x+S(n)); tau > n], u with sup 1 on the unit sphere", &MC_COLUMNS);
    t.comment(format!("x = {}; horizon column is the schedule time n", point(&s.x)));
    for &(n, m, se) in &v.rows {
        t.row(vec![num(m), num(se), cfg.replicas.to_string(), n.to_string(), seed.to_string(), "plain".into()]);
    }
    Ok(Report {
        table: t,
        summary: format!(
            "estimate-v: V(x) ≈ {:.6} ± {:.2e}; plateau (last change < 5%): {}",
            v.value, v.stderr, v.plateau
        ),
        outcome: Outcome::Done,
    })
}

fn ladder(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::Ladder;
    let dist = cfg.distribution()?;
    let pmf = dist.marginal(cfg.dim - 1);
    let law = harmonic_table(&pmf, cfg.ladder_horizon, cfg.ladder_k_max)?;
    let mut t = Table::new(task.name(), "dp", "probability; U(k) in expected ladder epochs", &["k", "ladder_pmf", "U(k)"]);
    t.comment(format!("marginal along axis {}; horizon = {}", cfg.dim - 1, law.horizon()));
    for k in 0..=cfg.ladder_k_max {
        let h = if k == 0 { 0.0 } else { law.height_prob(k) };
        t.row(vec![k.to_string(), num(h), num(law.renewal(k)?)]);
    }
    let mut summary = format!(
        "ladder: missing mass {:.3e} allocated, residual {:.3e}",
        law.missing_mass(),
        law.residual()
    );
    if let Some(w) = law.warning() {
        summary.push_str(&format!("; warning: {w}"));
    }
    Ok(Report {
        table: t,
        summary,
        outcome: Outcome::Done,
    })
}

fn scan_table(task: Task, scan: &RatioScan, scale_units: &str) -> Table {
    let mut t = Table::new(
        task.name(),
        scan.method.tag(),
        &format!("green in expected visits; ratio = green * {scale_units}"),
        &["modulus", "y", "green", "stat_error", "scale", "ratio", "ratio_error", "flag"],
    );
    for r in &scan.rows {
        t.row(vec![
            num(r.modulus),
            point(&r.point),
            num(r.green),
            num(r.stat_error),
            num(r.scale),
            num(r.ratio),
            num(r.ratio_error),
            r.flag.clone().unwrap_or_default(),
        ]);
    }
    t
}

fn v_at(dist: &StepDistribution, cone: &Cone, x: &[i64], given: Option<f64>) -> RunResult<f64> {
    Ok(match (given, cone.kind()) {
        (Some(v), _) => v,
        (None, ConeKind::HalfSpace { .. }) => halfspace_v(dist, x[x.len() - 1])?,
        // Plateau checks are invariant under rescaling V(x).
        (None, _) => 1.0,
    })
}

fn verify_interior(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::VerifyInterior;
    let s = setup(cfg)?;
    let dir = cfg.direction.clone().unwrap_or_else(|| central_direction(&s.cone, cfg.dim));
    let moduli = if cfg.moduli.is_empty() { vec![10.0, 20.0, 40.0] } else { cfg.moduli.clone() };
    let v_x = v_at(&s.dist, &s.cone, &s.x, cfg.v_x)?;
    let (scan, _) = with_solver(cfg, task, |solver| {
        interior_ratio_scan(&s.dist, &s.cone, &s.x, &dir, &moduli, v_x, solver)
    })?;
    let tol = cfg.tolerances.plateau;
    let plateau = scan.plateau(tol);
    let fit = interior_exponent_fit(&scan, &s.cone, cfg.dim, cfg.tolerances.exponent.unwrap_or(0.3)).ok();
    let mut t = scan_table(task, &scan, "|y|^(2p+d-2) / (V(x) u(y))");
    let mut summary = format!("consecutive ratios within {:.0}% (max change {:.3})", tol * 100.0, scan.max_step_change());
    let mut pass = plateau;
    if let Some(f) = &fit {
        t.comment(format!("log-log slope of G/u(y) = {:.4}, target {:.4}; raw slope of G = {:.4}", f.slope, f.target, f.raw_slope.unwrap_or(f64::NAN)));
        summary.push_str(&format!("; slope of G/u {:.3} vs {:.3} ± {}", f.slope, f.target, f.tolerance));
        pass &= f.pass;
    }
    let (outcome, word) = verdict(pass);
    Ok(Report {
        table: t,
        summary: format!("{word} verify-interior: {summary}"),
        outcome,
    })
}

fn verify_boundary(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::VerifyBoundary;
    let s = setup(cfg)?;
    let along = if cfg.boundary_along.is_empty() { (4..=12).map(|m| 2 * m).collect() } else { cfg.boundary_along.clone() };
    let path: Vec<Vec<i64>> = along
        .iter()
        .map(|&a| {
            wall_point(&s.dist, &s.cone, &s.x, a, cfg.boundary_distance)
                .ok_or_else(|| RunError::Input(format!("no reachable point at distance {} near {a}", cfg.boundary_distance)))
        })
        .collect::<RunResult<_>>()?;
    let tol = cfg.tolerances.exponent.unwrap_or(0.4);
    let (fit, solver) = with_solver(cfg, task, |solver| boundary_exponent_fit(&s.dist, &s.cone, &s.x, &path, tol, solver))?;
    let mut t = Table::new(task.name(), solver.method().tag(), "modulus in lattice units; green in expected visits", &["modulus", "y", "green"]);
    t.comment(format!("distance from the wall = {}", cfg.boundary_distance));
    for (m, y, g) in &fit.rows {
        t.row(vec![num(*m), point(y), num(*g)]);
    }
    let (outcome, word) = verdict(fit.pass);
    Ok(Report {
        table: t,
        summary: format!(
            "{word} verify-boundary: log-log slope {:.3} vs target {:.3} ± {}",
            fit.slope, fit.target, fit.tolerance
        ),
        outcome,
    })
}

fn verify_halfspace(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::VerifyHalfspace;
    let dist = cfg.distribution()?;
    let d = cfg.dim;
    let mut x = vec![0; d];
    x[d - 1] = 1;
    let x = cfg.start.clone().unwrap_or(x);
    let targets = if cfg.targets.is_empty() {
        [10, 20, 40]
            .iter()
            .map(|&m| {
                let mut y = vec![0; d];
                y[0] = m;
                y[d - 1] = 3;
                y
            })
            .collect()
    } else {
        cfg.targets.clone()
    };
    let (scan, _) = with_solver(cfg, task, |solver| halfspace_ratio_scan(&dist, &x, &targets, solver))?;
    let tol = cfg.tolerances.plateau;
    let t = scan_table(task, &scan, "|y|^d / (V(x) V'(y_d))");
    let (outcome, word) = verdict(scan.plateau(tol));
    Ok(Report {
        table: t,
        summary: format!(
            "{word} verify-halfspace: consecutive ratios within {:.0}% (max change {:.3})",
            tol * 100.0,
            scan.max_step_change()
        ),
        outcome,
    })
}

fn verify_martin(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::VerifyMartin;
    let s = setup(cfg)?;
    let x_alt = cfg.start_alt.clone().unwrap_or_else(|| {
        let mut v = s.x.clone();
        *v.last_mut().expect("non-empty") += 2;
        v
    });
    if !s.cone.contains(&x_alt) {
        return Err(cone_green::Error::OutsideCone(x_alt).into());
    }
    let dir = cfg.direction.clone().unwrap_or_else(|| central_direction(&s.cone, cfg.dim));
    let moduli = if cfg.moduli.is_empty() { vec![20.0, 40.0] } else { cfg.moduli.clone() };
    let reference = match (cfg.v_x, cfg.v_alt, s.cone.kind()) {
        (Some(a), Some(b), _) => Some(a / b),
        (_, _, ConeKind::HalfSpace { .. }) => Some(v_at(&s.dist, &s.cone, &s.x, None)? / v_at(&s.dist, &s.cone, &x_alt, None)?),
        _ => None,
    };
    let (scan, _) = with_solver(cfg, task, |solver| {
        martin_ratio_scan(&s.dist, &s.cone, &s.x, &x_alt, &dir, &moduli, reference, solver)
    })?;
    let tol = cfg.tolerances.plateau;
    let mut t = scan_table(task, &scan, "G(x',y)^-1");
    t.comment(format!("x = {}; x' = {}", point(&s.x), point(&x_alt)));
    let last = scan.last_ratio().unwrap_or(f64::NAN);
    let (pass, detail) = match reference {
        Some(r) => {
            let rel = (last / r - 1.0).abs();
            (rel < tol, format!("ratio {last:.4} vs target V(x)/V(x') = {r:.4} (rel {rel:.3}, tolerance {tol})"))
        }
        None => (scan.plateau(tol), format!("ratio {last:.4}; no V reference, consecutive rows within {tol}")),
    };
    let (outcome, word) = verdict(pass);
    Ok(Report {
        table: t,
        summary: format!("{word} verify-martin: {detail}"),
        outcome,
    })
}

fn verify_llt(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::VerifyLlt;
    let s = setup(cfg)?;
    let c = llt_shape_check(&s.dist, &s.cone, &s.x, cfg.llt_n)?;
    let mut t = Table::new(task.name(), "dp", "constant is n^((p+d)/2) C; residual relative to the layer maximum", &["n", "constant", "max_residual", "region_size", "argmax_in_peak"]);
    t.row(vec![
        c.n.to_string(),
        num(c.constant),
        num(c.max_residual),
        c.region_size.to_string(),
        c.argmax_in_peak.to_string(),
    ]);
    let pass = c.max_residual < cfg.tolerances.llt && c.argmax_in_peak;
    let (outcome, word) = verdict(pass);
    Ok(Report {
        table: t,
        summary: format!(
            "{word} verify-llt: max residual {:.4} < {} at n = {} and argmax on the profile peak: {}",
            c.max_residual, cfg.tolerances.llt, c.n, c.argmax_in_peak
        ),
        outcome,
    })
}

fn validate(cfg: &ExperimentConfig) -> RunResult<Report> {
    let task = Task::Validate;
    let dist = cfg.distribution()?;
    let cone = cfg.build_cone()?;
    let r = validate_assumptions(&dist, &cone);
    let mut t = Table::new(task.name(), "exact", "dimensionless", &["check", "value"]);
    let mut add = |k: &str, v: String| t.row(vec![k.to_string(), v]);
    add("exponent_p", num(r.exponent_p));
    add("r1_threshold", num(r.r1_threshold));
    add("mean_ok", r.mean_ok.to_string());
    add("covariance_identity_ok", r.covariance_identity_ok.to_string());
    for (a, m) in &r.moment_values {
        add(&format!("moment_{a}"), num(*m));
    }
    add("r1_ok", r.r1_ok.to_string());
    add("r1_plus_one_ok", r.r1_plus_one_ok.to_string());
    add("full_space_moment_ok", r.full_space_moment_ok.to_string());
    add("local_condition_ok", r.local_condition_ok.to_string());
    add("lattice_full_rank", r.lattice_full_rank.to_string());
    add("aperiodic", r.period.is_aperiodic().to_string());
    let (outcome, word) = verdict(r.interior_ok());
    Ok(Report {
        table: t,
        summary: format!(
            "{word} validate: zero mean {}, identity covariance {}, moment or local condition {}, full-rank lattice {}",
            r.mean_ok,
            r.covariance_identity_ok,
            r.r1_ok || r.local_condition_ok,
            r.lattice_full_rank
        ),
        outcome,
    })
}

/// `∫ z^{-p-d/2} e^{-1/(2z)} dz` over `(ε, ∞)`.
pub fn integral(p: f64, d: usize, eps: f64) -> RunResult<Report> {
    let v = profile_integral(p, d, eps)?;
    let closed = profile_integral_closed_form(p, d, eps)?;
    let mut t = Table::new("integral", "quadrature", "dimensionless", &["p", "d", "eps", "value", "closed_form"]);
    t.row(vec![num(p), d.to_string(), num(eps), num(v), num(closed)]);
    Ok(Report {
        table: t,
        summary: format!("{v:.10}"),
        outcome: Outcome::Done,
    })
}

pub fn output_path(cfg: Option<&ExperimentConfig>, flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| cfg.and_then(|c| c.output.clone()).map(PathBuf::from))
}
