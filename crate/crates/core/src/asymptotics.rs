//! Scaled-ratio scans, exponent fits and local-limit shape checks.
//!
//! Constants in the large-`|y|` laws are never asserted; scans report ratios
//! whose stability (plateaus) and log–log slopes are what gets checked.

use statrs::function::gamma::{gamma, gamma_lr};

use crate::cone_geometry::{Cone, ConeKind};
use crate::error::{Error, Result};
use crate::exact_dp::{GreenEstimate, KernelOptions, KilledKernel, Method, DEFAULT_MEMORY_CAP};
use crate::monte_carlo::{choose_tilt, estimate_v, mc_green, mc_green_tilted_with};
use crate::one_dim::{harmonic_table, reversed_harmonic_table, DEFAULT_HORIZON};
use crate::quadrature::integrate;
use crate::scalar::Real;
use crate::stats::{linear_fit, LinearFit};
use crate::step_models::StepDistribution;

const PROFILE_TOL: f64 = 1e-12;
const PROFILE_INTERVALS: usize = 4000;

fn profile_order(p: f64, dim: usize) -> f64 {
    p + dim as f64 / 2.0
}

/// `∫_a^b z^{-q} e^{-1/(2z)} dz` with `q = p + d/2`, for `0 <= a <= b <= ∞`.
///
/// Below 1 the integrand is smooth and is integrated directly; above 1 the
/// substitution `z = s^{-m}` turns the slowly decaying tail into a bounded
/// integrand on a finite interval.
pub fn profile_integral_between(p: f64, dim: usize, a: f64, b: f64) -> Result<f64> {
    let q = profile_order(p, dim);
    if !(a >= 0.0) || !(b >= a) {
        return Err(Error::OutOfRange(format!("bad integration range [{a}, {b}]")));
    }
    if b.is_infinite() && q <= 1.0 {
        return Err(Error::OutOfRange(format!(
            "integral diverges at infinity for p + d/2 = {q}"
        )));
    }
    let f = |z: f64| {
        if z <= 0.0 {
            0.0
        } else {
            z.powf(-q) * (-0.5 / z).exp()
        }
    };
    let mut total = 0.0;
    if a < 1.0 {
        let hi = b.min(1.0);
        total += integrate(f, a, hi, PROFILE_TOL, PROFILE_INTERVALS)?.value;
    }
    if b > 1.0 {
        // z = s^{-m}: dz = m s^{-m-1} ds, integrand m s^{m(q-1)-1} e^{-s^m/2}.
        let m = if q > 1.0 { (1.0 / (q - 1.0)).ceil().max(1.0) } else { 1.0 };
        let g = |s: f64| {
            if s <= 0.0 {
                0.0
            } else {
                m * s.powf(m * (q - 1.0) - 1.0) * (-0.5 * s.powf(m)).exp()
            }
        };
        let s_lo = if b.is_infinite() { 0.0 } else { b.powf(-1.0 / m) };
        let s_hi = a.max(1.0).powf(-1.0 / m);
        if s_hi > s_lo {
            total += integrate(g, s_lo, s_hi, PROFILE_TOL, PROFILE_INTERVALS)?.value;
        }
    }
    Ok(total)
}

/// `∫_ε^∞ z^{-p-d/2} e^{-1/(2z)} dz` by adaptive quadrature.
pub fn profile_integral(p: f64, dim: usize, eps: f64) -> Result<f64> {
    profile_integral_between(p, dim, eps, f64::INFINITY)
}

/// The same integral through the incomplete gamma function:
/// `2^{q-1} Γ(q-1) P(q-1, 1/(2ε))` with `q = p + d/2`.
pub fn profile_integral_closed_form(p: f64, dim: usize, eps: f64) -> Result<f64> {
    let q = profile_order(p, dim);
    if q <= 1.0 {
        return Err(Error::OutOfRange(format!(
            "integral diverges at infinity for p + d/2 = {q}"
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::OutOfRange(format!("eps must be >= 0, got {eps}")));
    }
    let full = 2f64.powf(q - 1.0) * gamma(q - 1.0);
    if eps == 0.0 {
        Ok(full)
    } else if eps.is_infinite() {
        Ok(0.0)
    } else {
        Ok(full * gamma_lr(q - 1.0, 0.5 / eps))
    }
}

/// Nearest lattice point to `target` that lies in the cone and is reachable
/// from `x`; ties go to the lexicographically smallest point.
pub fn snap_to_lattice(dist: &StepDistribution, cone: &Cone, x: &[i64], target: &[f64]) -> Option<Vec<i64>> {
    let d = dist.dim();
    if target.len() != d {
        return None;
    }
    let per = dist.periodicity();
    let radius = 2 * per.steps.basis().iter().map(|r| r.iter().map(|v| v.abs()).max().unwrap_or(1)).max().unwrap_or(1);
    let centre: Vec<i64> = target.iter().map(|t| t.round() as i64).collect();
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut offset = vec![-radius; d];
    loop {
        let y: Vec<i64> = centre.iter().zip(&offset).map(|(c, o)| c + o).collect();
        if cone.contains(&y) && per.reachable(x, &y) {
            let dist2: f64 = y.iter().zip(target).map(|(a, b)| (*a as f64 - b).powi(2)).sum();
            let better = match &best {
                None => true,
                Some((bd, by)) => dist2 < *bd - 1e-12 || ((dist2 - bd).abs() <= 1e-12 && y < *by),
            };
            if better {
                best = Some((dist2, y));
            }
        }
        let mut i = d;
        loop {
            if i == 0 {
                return best.map(|b| b.1);
            }
            i -= 1;
            offset[i] += 1;
            if offset[i] <= radius {
                break;
            }
            offset[i] = -radius;
        }
    }
}

/// How Green values are computed for a scan.
#[derive(Debug, Clone)]
pub enum Solver {
    /// Exact DP from `x` with horizon `factor · max |y|²`, pruned at
    /// `spread` Hoeffding radii when set.
    Dp {
        factor: f64,
        spread: Option<f64>,
        memory_cap: u64,
    },
    PlainMc {
        factor: f64,
        replicas: usize,
        seed: u64,
    },
    TiltedMc {
        factor: f64,
        gamma: f64,
        replicas: usize,
        seed: u64,
    },
}

impl Solver {
    /// DP with horizon `2|y|²` and a 10-radius prune.
    pub fn dp() -> Self {
        Solver::Dp {
            factor: 2.0,
            spread: Some(10.0),
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Solver::Dp { .. } => Method::ExactDp,
            Solver::PlainMc { .. } => Method::PlainMc,
            Solver::TiltedMc { .. } => Method::TiltedMc,
        }
    }

    fn horizon(factor: f64, y: &[i64]) -> usize {
        let r2: f64 = y.iter().map(|&c| (c * c) as f64).sum();
        (factor * r2).ceil().max(1.0) as usize
    }

    /// Green values `G(x, y)` for each `y` (truncated value plus fitted tail).
    pub fn green_many(
        &self,
        dist: &StepDistribution,
        cone: &Cone,
        x: &[i64],
        ys: &[Vec<i64>],
    ) -> Result<Vec<GreenEstimate<f64>>> {
        match self {
            Solver::Dp {
                factor,
                spread,
                memory_cap,
            } => {
                let horizon = ys.iter().map(|y| Self::horizon(*factor, y)).max().unwrap_or(1);
                let opts = KernelOptions {
                    memory_cap: *memory_cap,
                    spread_sigmas: *spread,
                    ..Default::default()
                };
                let k: KilledKernel<f64> = KilledKernel::build(dist, cone, x, horizon, &opts)?;
                Ok(ys
                    .iter()
                    .map(|y| {
                        if cone.contains(y) {
                            k.green_estimate(y, cone.exponent_p())
                        } else {
                            GreenEstimate {
                                value: 0.0,
                                stat_error: 0.0,
                                horizon,
                                tail_estimate: 0.0,
                                method: Method::ExactDp,
                            }
                        }
                    })
                    .collect())
            }
            Solver::PlainMc {
                factor,
                replicas,
                seed,
            } => ys
                .iter()
                .map(|y| {
                    mc_green(dist, cone, x, y, Self::horizon(*factor, y), *replicas, *seed)
                        .map(|e| e.to_green())
                })
                .collect(),
            Solver::TiltedMc {
                factor,
                gamma,
                replicas,
                seed,
            } => ys
                .iter()
                .map(|y| {
                    let spec = choose_tilt(dist, cone, x, y, *gamma)?;
                    mc_green_tilted_with(
                        dist,
                        cone,
                        x,
                        y,
                        Self::horizon(*factor, y),
                        &spec,
                        *replicas,
                        *seed,
                    )
                    .map(|e| e.to_green())
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub modulus: f64,
    pub point: Vec<i64>,
    /// Green value used in the ratio (truncated sum plus tail).
    pub green: f64,
    pub stat_error: f64,
    pub scale: f64,
    pub ratio: f64,
    pub ratio_error: f64,
    /// Set when the row could not be computed as asked.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioScan {
    pub tag: String,
    pub direction: Vec<f64>,
    pub method: Method,
    /// Value the ratios should approach, when one is known.
    pub reference: Option<f64>,
    pub rows: Vec<RatioRow>,
}

impl RatioScan {
    fn usable(&self) -> Vec<&RatioRow> {
        self.rows
            .iter()
            .filter(|r| r.flag.is_none() && r.ratio.is_finite() && r.ratio > 0.0)
            .collect()
    }

    /// Every pair of consecutive usable rows differs by less than `tol`
    /// relative to the earlier one.
    pub fn plateau(&self, tol: f64) -> bool {
        let rows = self.usable();
        rows.len() >= 2 && rows.windows(2).all(|w| ((w[1].ratio - w[0].ratio) / w[0].ratio).abs() < tol)
    }

    /// The last two usable rows differ by less than `tol`.
    pub fn plateau_last(&self, tol: f64) -> bool {
        let rows = self.usable();
        rows.len() >= 2 && {
            let (a, b) = (rows[rows.len() - 2].ratio, rows[rows.len() - 1].ratio);
            ((b - a) / a).abs() < tol
        }
    }

    pub fn last_ratio(&self) -> Option<f64> {
        self.usable().last().map(|r| r.ratio)
    }

    /// Largest consecutive relative change.
    pub fn max_step_change(&self) -> f64 {
        self.usable()
            .windows(2)
            .map(|w| ((w[1].ratio - w[0].ratio) / w[0].ratio).abs())
            .fold(0.0, f64::max)
    }
}

/// Fitted log–log slope against a target exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Slope of the raw Green values when the fit used rescaled values.
    pub raw_slope: Option<f64>,
    pub rows: Vec<(f64, Vec<i64>, f64)>,
}

fn fit_log_log(moduli: &[f64], values: &[f64]) -> Result<LinearFit> {
    let pts: Vec<(f64, f64)> = moduli
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(m, v)| (m.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable rows, need at least 3",
            pts.len()
        )));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&lx, &ly).ok_or_else(|| Error::InsufficientData("moduli do not vary".into()))
}

fn modulus(y: &[i64]) -> f64 {
    y.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt()
}

fn unit(direction: &[f64]) -> Result<Vec<f64>> {
    let n = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::OutOfRange("direction must be nonzero".into()));
    }
    Ok(direction.iter().map(|v| v / n).collect())
}

/// Points `snap(r σ)` for the given moduli; `None` where no reachable point
/// exists nearby.
pub fn ray_points(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    direction: &[f64],
    moduli: &[f64],
) -> Result<Vec<Option<Vec<i64>>>> {
    let sigma = unit(direction)?;
    Ok(moduli
        .iter()
        .map(|r| {
            let t: Vec<f64> = sigma.iter().map(|s| s * r).collect();
            snap_to_lattice(dist, cone, x, &t)
        })
        .collect())
}

fn check_increasing(moduli: &[f64]) -> Result<()> {
    if moduli.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::OutOfRange("moduli must be strictly increasing".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn build_scan(
    tag: &str,
    direction: Vec<f64>,
    solver: &Solver,
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    points: Vec<Option<Vec<i64>>>,
    reference: Option<f64>,
    scale: impl Fn(&[i64]) -> f64,
) -> Result<RatioScan> {
    let found: Vec<Vec<i64>> = points.iter().flatten().cloned().collect();
    let greens = solver.green_many(dist, cone, x, &found)?;
    let mut it = greens.into_iter();
    let mut rows = Vec::with_capacity(points.len());
    let mut last_modulus = f64::NEG_INFINITY;
    for p in points {
        match p {
            Some(y) => {
                let g = it.next().expect("one estimate per point");
                let s = scale(&y);
                let m = modulus(&y);
                let flag = if m <= last_modulus {
                    Some("snapped modulus not increasing".to_string())
                } else {
                    None
                };
                last_modulus = last_modulus.max(m);
                rows.push(RatioRow {
                    modulus: m,
                    green: g.corrected(),
                    stat_error: g.stat_error,
                    scale: s,
                    ratio: g.corrected() * s,
                    ratio_error: g.stat_error * s,
                    point: y,
                    flag,
                });
            }
            None => rows.push(RatioRow {
                modulus: f64::NAN,
                point: Vec::new(),
                green: 0.0,
                stat_error: 0.0,
                scale: 0.0,
                ratio: f64::NAN,
                ratio_error: 0.0,
                flag: Some("no reachable lattice point".into()),
            }),
        }
    }
    Ok(RatioScan {
        tag: tag.into(),
        direction,
        method: solver.method(),
        reference,
        rows,
    })
}

/// `R(y) = G(x, y) |y|^{2p+d-2} / (V(x) u(y))` along a ray.
#[allow(clippy::too_many_arguments)]
pub fn interior_ratio_scan(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    direction: &[f64],
    moduli: &[f64],
    v_x: f64,
    solver: &Solver,
) -> Result<RatioScan> {
    check_increasing(moduli)?;
    let sigma = unit(direction)?;
    if !cone.contains_real(&sigma) {
        return Err(Error::OutsideCone(direction.iter().map(|v| v.round() as i64).collect()));
    }
    let points = ray_points(dist, cone, x, &sigma, moduli)?;
    let e = 2.0 * cone.exponent_p() + dist.dim() as f64 - 2.0;
    build_scan("interior", sigma, solver, dist, cone, x, points, None, |y| {
        modulus(y).powf(e) / (v_x * cone.harmonic_u_lattice(y))
    })
}

/// Log–log slope of `G / u(y)` along an interior ray, target `-(2p+d-2)`.
/// The raw slope of `G` is recorded alongside.
pub fn interior_exponent_fit(scan: &RatioScan, cone: &Cone, dim: usize, tolerance: f64) -> Result<ExponentFit> {
    let rows: Vec<&RatioRow> = scan.rows.iter().filter(|r| r.flag.is_none() && r.green > 0.0).collect();
    let moduli: Vec<f64> = rows.iter().map(|r| r.modulus).collect();
    let scaled: Vec<f64> = rows.iter().map(|r| r.green / cone.harmonic_u_lattice(&r.point)).collect();
    let raw: Vec<f64> = rows.iter().map(|r| r.green).collect();
    let fit = fit_log_log(&moduli, &scaled)?;
    let raw_fit = fit_log_log(&moduli, &raw)?;
    let target = -(2.0 * cone.exponent_p() + dim as f64 - 2.0);
    Ok(ExponentFit {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        target,
        tolerance,
        pass: (fit.slope - target).abs() <= tolerance,
        raw_slope: Some(raw_fit.slope),
        rows: rows.iter().map(|r| (r.modulus, r.point.clone(), r.green)).collect(),
    })
}

/// `G(x, y) / G(x', y)` along a ray, with reference `V(x)/V(x')`.
#[allow(clippy::too_many_arguments)]
pub fn martin_ratio_scan(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    x_alt: &[i64],
    direction: &[f64],
    moduli: &[f64],
    reference: Option<f64>,
    solver: &Solver,
) -> Result<RatioScan> {
    check_increasing(moduli)?;
    let sigma = unit(direction)?;
    let points = ray_points(dist, cone, x, &sigma, moduli)?;
    let found: Vec<Vec<i64>> = points.iter().flatten().cloned().collect();
    let g = solver.green_many(dist, cone, x, &found)?;
    let g_alt = if x == x_alt {
        g.clone()
    } else {
        solver.green_many(dist, cone, x_alt, &found)?
    };
    let mut rows = Vec::with_capacity(points.len());
    let mut k = 0;
    for p in points {
        let Some(y) = p else {
            rows.push(RatioRow {
                modulus: f64::NAN,
                point: Vec::new(),
                green: 0.0,
                stat_error: 0.0,
                scale: 0.0,
                ratio: f64::NAN,
                ratio_error: 0.0,
                flag: Some("no reachable lattice point".into()),
            });
            continue;
        };
        let (a, b) = (g[k], g_alt[k]);
        k += 1;
        let (num, den) = (a.corrected(), b.corrected());
        let (ratio, err, flag) = if den <= 0.0 {
            (f64::NAN, 0.0, Some("zero denominator".to_string()))
        } else if x == x_alt {
            (1.0, 0.0, None)
        } else {
            let r = num / den;
            let rel = ((a.stat_error / num.max(f64::MIN_POSITIVE)).powi(2)
                + (b.stat_error / den).powi(2))
            .sqrt();
            (r, r * rel, None)
        };
        rows.push(RatioRow {
            modulus: modulus(&y),
            point: y,
            green: num,
            stat_error: a.stat_error,
            scale: 1.0 / den.max(f64::MIN_POSITIVE),
            ratio,
            ratio_error: err,
            flag,
        });
    }
    Ok(RatioScan {
        tag: "martin".into(),
        direction: sigma,
        method: solver.method(),
        reference,
        rows,
    })
}

/// `V(x)` for a half-space from the ladder heights of the last coordinate.
pub fn halfspace_v(dist: &StepDistribution, x_d: i64) -> Result<f64> {
    let pmf = dist.marginal(dist.dim() - 1);
    let k = (x_d.max(1) as usize) + 1;
    harmonic_table(&pmf, DEFAULT_HORIZON, k)?.harmonic(x_d)
}

/// `V'(y_d)`, the half-space harmonic function of the reversed walk.
pub fn halfspace_v_reversed(dist: &StepDistribution, y_d: i64) -> Result<f64> {
    let pmf = dist.marginal(dist.dim() - 1);
    let k = (y_d.max(1) as usize) + 1;
    reversed_harmonic_table(&pmf, DEFAULT_HORIZON, k)?.harmonic(y_d)
}

/// `V(x)` for any supported cone: exact ladder renewal for half-spaces,
/// otherwise `E[u(x + S(n)); τ_x > n]` at the end of `schedule`.
pub fn harmonic_v(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    schedule: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<f64> {
    match cone.kind() {
        ConeKind::HalfSpace { .. } => halfspace_v(dist, x[x.len() - 1]),
        _ => Ok(estimate_v(dist, cone, x, schedule, replicas, seed)?.value),
    }
}

/// `G(x, y) |y|^d / (V(x) V'(y_d))` over explicit half-space targets.
pub fn halfspace_ratio_scan(
    dist: &StepDistribution,
    x: &[i64],
    targets: &[Vec<i64>],
    solver: &Solver,
) -> Result<RatioScan> {
    let d = dist.dim();
    let cone = Cone::half_space(d)?;
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let v_x = halfspace_v(dist, x[d - 1])?;
    let ladder_max = targets.iter().map(|y| y.get(d - 1).copied().unwrap_or(1)).max().unwrap_or(1);
    let pmf = dist.marginal(d - 1);
    let table = reversed_harmonic_table(&pmf, DEFAULT_HORIZON, ladder_max.max(1) as usize + 1)?;
    let points: Vec<Option<Vec<i64>>> = targets
        .iter()
        .map(|y| (y.len() == d && cone.contains(y) && dist.periodicity().reachable(x, y)).then(|| y.clone()))
        .collect();
    let mut direction = vec![0.0; d];
    direction[0] = 1.0;
    build_scan("halfspace", direction, solver, dist, &cone, x, points, None, |y| {
        let vr = table.harmonic(y[d - 1]).unwrap_or(f64::NAN);
        modulus(y).powf(d as f64) / (v_x * vr)
    })
}

/// A point at lattice distance `t` from the first wall of the cone with
/// along-wall coordinate near `along`, reachable from `x`.
pub fn wall_point(dist: &StepDistribution, cone: &Cone, x: &[i64], along: i64, t: i64) -> Option<Vec<i64>> {
    let d = cone.dim();
    let make = |a: i64| -> Vec<i64> {
        match cone.kind() {
            ConeKind::HalfSpace { .. } => {
                let mut y = vec![0; d];
                y[0] = a;
                y[d - 1] = t;
                y
            }
            ConeKind::Wedge { .. } => vec![a, t],
            ConeKind::Orthant { .. } => {
                let mut y = vec![a; d];
                y[d - 1] = t;
                y
            }
        }
    };
    for k in 0..8 {
        for a in [along + k, along - k] {
            let y = make(a);
            if cone.contains(&y) && dist.periodicity().reachable(x, &y) {
                return Some(y);
            }
        }
    }
    None
}

/// Log–log slope of `G` along a path at fixed distance from the boundary,
/// target `-(p+d-1)`.
pub fn boundary_exponent_fit(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    path: &[Vec<i64>],
    tolerance: f64,
    solver: &Solver,
) -> Result<ExponentFit> {
    let moduli: Vec<f64> = path.iter().map(|y| modulus(y)).collect();
    if path.len() < 3 {
        return Err(Error::InsufficientData(format!("{} path points, need at least 3", path.len())));
    }
    if moduli.iter().all(|m| (m - moduli[0]).abs() < 1e-9) {
        return Err(Error::InsufficientData("path has constant modulus".into()));
    }
    let g = solver.green_many(dist, cone, x, path)?;
    let values: Vec<f64> = g.iter().map(|e| e.corrected()).collect();
    let fit = fit_log_log(&moduli, &values)?;
    let target = -(cone.exponent_p() + dist.dim() as f64 - 1.0);
    Ok(ExponentFit {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        target,
        tolerance,
        pass: (fit.slope - target).abs() <= tolerance,
        raw_slope: None,
        rows: path.iter().cloned().zip(&values).map(|(y, v)| (modulus(&y), y, *v)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VSigmaTable {
    /// `(t, y, G(x, y), w(t) = G M^{p+d-1} / V(x))`.
    pub rows: Vec<(i64, Vec<i64>, f64, f64)>,
    pub fit: LinearFit,
    pub increasing: bool,
}

/// Profile `w(t) = G(x, y(t)) M^{p+d-1} / V(x)` across distances `t` from the
/// first wall at along-wall coordinate `M`, with a linear fit in `t`.
pub fn vsigma_linearity(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    along: i64,
    distances: &[i64],
    v_x: f64,
    solver: &Solver,
) -> Result<VSigmaTable> {
    let mut points = Vec::new();
    let mut ts = Vec::new();
    for &t in distances {
        if let Some(y) = wall_point(dist, cone, x, along, t) {
            points.push(y);
            ts.push(t);
        }
    }
    if points.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 reachable profile points".into()));
    }
    let g = solver.green_many(dist, cone, x, &points)?;
    let e = cone.exponent_p() + dist.dim() as f64 - 1.0;
    let scale = (along as f64).powf(e) / v_x;
    let rows: Vec<(i64, Vec<i64>, f64, f64)> = ts
        .iter()
        .zip(points)
        .zip(&g)
        .map(|((t, y), est)| (*t, y, est.corrected(), est.corrected() * scale))
        .collect();
    let tf: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let wf: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let fit = linear_fit(&tf, &wf).ok_or_else(|| Error::InsufficientData("distances do not vary".into()))?;
    let increasing = wf.windows(2).all(|w| w[1] > w[0]);
    Ok(VSigmaTable { rows, fit, increasing })
}

/// Fit of one layer to `C u(y/√n) exp(-Σ y_i²/(2σ_i² n))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LltCheck {
    pub n: usize,
    /// `n^{(p+d)/2} C`, the fitted prefactor.
    pub constant: f64,
    pub max_residual: f64,
    pub region_size: usize,
    /// The largest cell of the layer sits where the profile is within 5% of
    /// its maximum.
    pub argmax_in_peak: bool,
}

/// Profile values of the layer's support, normalised to a maximum of 1.
fn llt_profile(dist: &StepDistribution, cone: &Cone, n: usize, ys: &[Vec<i64>]) -> Vec<f64> {
    let cov = dist.covariance();
    let sn = (n as f64).sqrt();
    let raw: Vec<f64> = ys
        .iter()
        .map(|y| {
            let scaled: Vec<f64> = y.iter().map(|&c| c as f64 / sn).collect();
            let gauss: f64 = y
                .iter()
                .enumerate()
                .map(|(i, &c)| (c as f64).powi(2) / (2.0 * cov[i][i] * n as f64))
                .sum();
            cone.harmonic_u(&scaled) * (-gauss).exp()
        })
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    raw.into_iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect()
}

/// Least-squares fit of layer `n` to the local-limit profile over the cells
/// where the profile is at least 10% of its maximum.
pub fn llt_shape_check(dist: &StepDistribution, cone: &Cone, x: &[i64], n: usize) -> Result<LltCheck> {
    let k: KilledKernel<f64> = KilledKernel::build(dist, cone, x, n, &KernelOptions::default())?;
    llt_shape_from_layer(dist, cone, n, k.final_layer().iter().collect())
}

fn llt_shape_from_layer(
    dist: &StepDistribution,
    cone: &Cone,
    n: usize,
    cells: Vec<(Vec<i64>, f64)>,
) -> Result<LltCheck> {
    if cells.is_empty() {
        return Err(Error::InsufficientData("layer is empty".into()));
    }
    let ys: Vec<Vec<i64>> = cells.iter().map(|c| c.0.clone()).collect();
    let prof = llt_profile(dist, cone, n, &ys);
    let region: Vec<usize> = (0..cells.len()).filter(|&i| prof[i] >= 0.1).collect();
    if region.is_empty() {
        return Err(Error::InsufficientData("empty high-mass region".into()));
    }
    let (mut pf, mut ff) = (0.0, 0.0);
    for &i in &region {
        pf += cells[i].1 * prof[i];
        ff += prof[i] * prof[i];
    }
    let c = pf / ff;
    let max_residual = region
        .iter()
        .map(|&i| ((cells[i].1 - c * prof[i]) / (c * prof[i])).abs())
        .fold(0.0, f64::max);
    let argmax = (0..cells.len())
        .max_by(|&a, &b| cells[a].1.total_cmp(&cells[b].1))
        .expect("non-empty");
    let e = (cone.exponent_p() + dist.dim() as f64) / 2.0;
    Ok(LltCheck {
        n,
        constant: c * (n as f64).powf(e),
        max_residual,
        region_size: region.len(),
        argmax_in_peak: prof[argmax] >= 0.95,
    })
}

/// Generic-precision version of the profile integral, for callers working in
/// `f32`.
pub fn profile_integral_as<T: Real>(p: f64, dim: usize, eps: f64) -> Result<T> {
    profile_integral(p, dim, eps).map(T::from_f64_lossy)
}
