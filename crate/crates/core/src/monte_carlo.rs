//! Replicated simulation estimators.
//!
//! Every replica draws from its own stream (see [`crate::rng`]) and per-replica
//! values are reduced in replica order, so estimates are bitwise identical for
//! any thread count.

use rand::distr::Distribution;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;

use crate::cone_geometry::Cone;
use crate::error::{Error, Result};
use crate::exact_dp::{fitted_tail, GreenEstimate, Method};
use crate::rng::replica_rng;
use crate::stats::{mean_stderr, pairwise_sum};
use crate::step_models::StepDistribution;

/// Path weights are `exp(log_w)`; this keeps them finite.
const LOG_WEIGHT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub horizon: usize,
    pub seed: u64,
    pub method: Method,
    /// Upper bound on the part of the target missed by step truncation.
    pub remainder_bound: f64,
    /// Visits in the late window `(horizon/2, horizon]`, averaged.
    pub late_mean: f64,
    /// Fitted contribution of times beyond the horizon.
    pub tail_estimate: f64,
}

impl McEstimate {
    pub fn to_green(&self) -> GreenEstimate<f64> {
        GreenEstimate {
            value: self.mean,
            stat_error: self.stderr,
            horizon: self.horizon,
            tail_estimate: self.tail_estimate,
            method: self.method,
        }
    }

    pub fn corrected(&self) -> f64 {
        self.mean + self.tail_estimate
    }
}

/// Exponentially tilted, truncated step law along one signed axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSpec {
    pub axis: usize,
    /// `+1` or `-1`: the target lies in this direction along `axis`.
    pub sign: i64,
    pub y1: f64,
    pub gamma: f64,
    /// Steps with `|s_axis| > truncation` are removed.
    pub truncation: f64,
    /// Time scale used in the tilt formula.
    pub n_ref: f64,
    pub h: f64,
    /// `E[e^{h X_1}; |X_1| <= truncation]`.
    pub phi: f64,
    /// `P(|X_1| <= truncation)`.
    pub kept_mass: f64,
    /// `E[X_1; |X_1| <= truncation]`, `X_1` oriented by `sign`.
    pub truncated_mean: f64,
    /// `E[X_1²; |X_1| <= truncation]`.
    pub truncated_second: f64,
    /// Mean and variance of `X_1` under the tilted law.
    pub tilted_mean: f64,
    pub tilted_variance: f64,
}

struct Truncated {
    mass: f64,
    m1: f64,
    m2: f64,
}

fn truncated(dist: &StepDistribution, axis: usize, sign: i64, level: f64) -> Truncated {
    let mut t = Truncated {
        mass: 0.0,
        m1: 0.0,
        m2: 0.0,
    };
    for (s, p) in dist.atoms() {
        let z = (sign * s[axis]) as f64;
        if z.abs() <= level {
            t.mass += p;
            t.m1 += p * z;
            t.m2 += p * z * z;
        }
    }
    t
}

fn check_tilt_inputs(dist: &StepDistribution, axis: usize, sign: i64, y1: f64, gamma: f64) -> Result<()> {
    if axis >= dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: axis + 1,
        });
    }
    if sign != 1 && sign != -1 {
        return Err(Error::DegenerateTilt(format!("sign must be ±1, got {sign}")));
    }
    if !(y1 > 0.0) {
        return Err(Error::DegenerateTilt(format!("y1 must be positive, got {y1}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::DegenerateTilt(format!("gamma must lie in (0,1), got {gamma}")));
    }
    Ok(())
}

/// Tilt `h = (1/(γ y1)) log(1 + γ y1² / (n E[X_1²; |X_1| <= γ y1]))` and the
/// truncated moment generating function at `h`.
pub fn tilt_parameters(
    dist: &StepDistribution,
    axis: usize,
    sign: i64,
    y1: f64,
    gamma: f64,
    n: f64,
) -> Result<TiltSpec> {
    check_tilt_inputs(dist, axis, sign, y1, gamma)?;
    if !(n > 0.0) {
        return Err(Error::DegenerateTilt(format!("time scale must be positive, got {n}")));
    }
    let level = gamma * y1;
    let t = truncated(dist, axis, sign, level);
    if t.mass <= 0.0 || t.m2 <= 0.0 {
        return Err(Error::DegenerateTilt(format!(
            "no movement along axis {axis} survives truncation at {level}"
        )));
    }
    let h = (1.0 + gamma * y1 * y1 / (n * t.m2)).ln() / level;
    tilt_with_h(dist, axis, sign, y1, gamma, n, h)
}

/// Tilt with a prescribed `h >= 0`.
pub fn tilt_with_h(
    dist: &StepDistribution,
    axis: usize,
    sign: i64,
    y1: f64,
    gamma: f64,
    n: f64,
    h: f64,
) -> Result<TiltSpec> {
    check_tilt_inputs(dist, axis, sign, y1, gamma)?;
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::DegenerateTilt(format!("tilt must be finite and >= 0, got {h}")));
    }
    let level = gamma * y1;
    let t = truncated(dist, axis, sign, level);
    if t.mass <= 0.0 {
        return Err(Error::DegenerateTilt(format!(
            "truncation at {level} removes every step"
        )));
    }
    let (mut phi, mut e1, mut e2) = (0.0, 0.0, 0.0);
    for (s, p) in dist.atoms() {
        let z = (sign * s[axis]) as f64;
        if z.abs() <= level {
            let w = p * (h * z).exp();
            phi += w;
            e1 += w * z;
            e2 += w * z * z;
        }
    }
    let tilted_mean = e1 / phi;
    Ok(TiltSpec {
        axis,
        sign,
        y1,
        gamma,
        truncation: level,
        n_ref: n,
        h,
        phi,
        kept_mass: t.mass,
        truncated_mean: t.m1,
        truncated_second: t.m2,
        tilted_mean,
        tilted_variance: e2 / phi - tilted_mean * tilted_mean,
    })
}

/// `exp{-h y1 + h n E[X_1; |X_1| <= γ y1]
///      + (e^{hγy1} - 1 - hγy1)/(γ y1)² · n E[X_1²; |X_1| <= γ y1]}`.
pub fn fuk_nagaev_bound(
    dist: &StepDistribution,
    axis: usize,
    sign: i64,
    y1: f64,
    gamma: f64,
    n: f64,
    h: f64,
) -> Result<f64> {
    check_tilt_inputs(dist, axis, sign, y1, gamma)?;
    let level = gamma * y1;
    let t = truncated(dist, axis, sign, level);
    if t.mass <= 0.0 {
        return Err(Error::DegenerateTilt(format!(
            "truncation at {level} removes every step"
        )));
    }
    let hl = h * level;
    let curvature = (hl.exp() - 1.0 - hl) / (level * level);
    Ok((-h * y1 + h * n * t.m1 + curvature * n * t.m2).exp())
}

/// Largest log-weight a visit to the target can carry within `horizon` steps.
///
/// At a visit the walk has moved exactly `y1` along the tilt axis, so its
/// log-weight is `n ln φ(h) - h y1`, the logarithm of [`tilted_mass`].
pub fn max_log_weight(spec: &TiltSpec, horizon: usize) -> f64 {
    (horizon as f64 * spec.phi.ln() - spec.h * spec.y1).max(0.0)
}

/// `e^{-h y1} φ(h)^n`, the quantity both bounds control.
pub fn tilted_mass(spec: &TiltSpec, n: f64) -> f64 {
    (-spec.h * spec.y1 + n * spec.phi.ln()).exp()
}

/// Tilt toward `y` from `x` along the dominant signed axis of `y - x`, with
/// time scale `|y - x|² / (2p + d)`.
pub fn choose_tilt(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    y: &[i64],
    gamma: f64,
) -> Result<TiltSpec> {
    let delta: Vec<i64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let (axis, d1) = delta
        .iter()
        .enumerate()
        .max_by_key(|(i, v)| (v.abs(), std::cmp::Reverse(*i)))
        .map(|(i, v)| (i, *v))
        .ok_or_else(|| Error::DegenerateTilt("empty point".into()))?;
    if d1 == 0 {
        return Err(Error::DegenerateTilt("target coincides with start".into()));
    }
    let r2: f64 = delta.iter().map(|v| (v * v) as f64).sum();
    let n_ref = (r2 / (2.0 * cone.exponent_p() + dist.dim() as f64)).max(1.0);
    tilt_parameters(dist, axis, d1.signum(), d1.unsigned_abs() as f64, gamma, n_ref)
}

fn check_walk(dist: &StepDistribution, cone: &Cone, x: &[i64], replicas: usize) -> Result<()> {
    if x.len() != dist.dim() || cone.dim() != dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: if x.len() != dist.dim() { x.len() } else { cone.dim() },
        });
    }
    if !cone.contains(x) {
        return Err(Error::OutsideCone(x.to_vec()));
    }
    if replicas < 2 {
        return Err(Error::OutOfRange("at least 2 replicas are needed".into()));
    }
    Ok(())
}

fn run_replicas<F>(replicas: usize, f: F) -> Vec<(f64, f64)>
where
    F: Fn(u64) -> (f64, f64) + Sync + Send,
{
    (0..replicas as u64).into_par_iter().map(f).collect()
}

/// Fraction of replicas still inside the cone after `n` steps.
pub fn mc_survival(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_walk(dist, cone, x, replicas)?;
    let values: Vec<f64> = run_replicas(replicas, |r| {
        let mut rng = replica_rng(seed, r);
        let mut pos = x.to_vec();
        for _ in 0..n {
            for (p, s) in pos.iter_mut().zip(dist.sample_step(&mut rng)) {
                *p += s;
            }
            if !cone.contains(&pos) {
                return (0.0, 0.0);
            }
        }
        (1.0, 0.0)
    })
    .into_iter()
    .map(|v| v.0)
    .collect();
    let (mean, stderr) = reduce(&values);
    Ok(McEstimate {
        mean,
        stderr,
        replicas,
        horizon: n,
        seed,
        method: Method::PlainMc,
        remainder_bound: 0.0,
        late_mean: 0.0,
        tail_estimate: 0.0,
    })
}

fn reduce(values: &[f64]) -> (f64, f64) {
    let mean = pairwise_sum(values) / values.len() as f64;
    let (_, stderr) = mean_stderr(values);
    (mean, stderr)
}

/// Step sampler for the Green estimators: either the law itself or a tilt.
struct Sampler<'a> {
    dist: &'a StepDistribution,
    tilt: Option<(WeightedAliasIndex<f64>, Vec<f64>)>,
}

impl<'a> Sampler<'a> {
    fn plain(dist: &'a StepDistribution) -> Self {
        Sampler { dist, tilt: None }
    }

    fn tilted(dist: &'a StepDistribution, spec: &TiltSpec) -> Result<Self> {
        let mut weights = Vec::with_capacity(dist.atoms().len());
        let mut log_ratio = Vec::with_capacity(dist.atoms().len());
        let ln_phi = spec.phi.ln();
        for (s, p) in dist.atoms() {
            let z = (spec.sign * s[spec.axis]) as f64;
            if z.abs() <= spec.truncation {
                weights.push(p * (spec.h * z).exp());
                log_ratio.push(-spec.h * z + ln_phi);
            } else {
                weights.push(0.0);
                log_ratio.push(f64::NEG_INFINITY);
            }
        }
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::DegenerateTilt(e.to_string()))?;
        Ok(Sampler {
            dist,
            tilt: Some((alias, log_ratio)),
        })
    }

    /// Draws an atom index and its log likelihood ratio.
    fn draw<R: rand::Rng>(&self, rng: &mut R) -> (usize, f64) {
        match &self.tilt {
            None => (self.dist.sample_index(rng), 0.0),
            Some((alias, lr)) => {
                let i = alias.sample(rng);
                (i, lr[i])
            }
        }
    }
}

/// Weighted visits to `y` over `0..=horizon` for one replica, total and in
/// the late window.
#[allow(clippy::too_many_arguments)]
fn green_replica<R: rand::Rng>(
    sampler: &Sampler<'_>,
    cone: &Cone,
    x: &[i64],
    y: &[i64],
    horizon: usize,
    late_from: usize,
    max_step: &[i64],
    rng: &mut R,
) -> (f64, f64) {
    let mut pos = x.to_vec();
    let mut log_w = 0.0f64;
    let weighted = sampler.tilt.is_some();
    let (mut total, mut late) = (0.0, 0.0);
    if pos == y {
        total += 1.0;
        if late_from == 0 {
            late += 1.0;
        }
    }
    let atoms = sampler.dist.atoms();
    for n in 1..=horizon {
        let (i, lr) = sampler.draw(rng);
        for (p, s) in pos.iter_mut().zip(&atoms[i].0) {
            *p += s;
        }
        if !cone.contains(&pos) {
            break;
        }
        if weighted {
            log_w += lr;
        }
        if pos == y {
            let w = if weighted { log_w.exp() } else { 1.0 };
            total += w;
            if n >= late_from {
                late += w;
            }
        }
        let left = (horizon - n) as i64;
        if pos
            .iter()
            .zip(y)
            .zip(max_step)
            .any(|((a, b), m)| (a - b).abs() > left.saturating_mul(*m))
        {
            break;
        }
    }
    (total, late)
}

#[allow(clippy::too_many_arguments)]
fn green_estimate(
    sampler: &Sampler<'_>,
    cone: &Cone,
    x: &[i64],
    y: &[i64],
    horizon: usize,
    replicas: usize,
    seed: u64,
    method: Method,
    remainder_bound: f64,
) -> Result<McEstimate> {
    let dist = sampler.dist;
    check_walk(dist, cone, x, replicas)?;
    if y.len() != dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: y.len(),
        });
    }
    let empty = McEstimate {
        mean: 0.0,
        stderr: 0.0,
        replicas,
        horizon,
        seed,
        method,
        remainder_bound,
        late_mean: 0.0,
        tail_estimate: 0.0,
    };
    if !cone.contains(y) {
        return Ok(empty);
    }
    let late_from = horizon / 2 + 1;
    let max_step = dist.max_step();
    let pairs = run_replicas(replicas, |r| {
        let mut rng = replica_rng(seed, r);
        green_replica(sampler, cone, x, y, horizon, late_from, &max_step, &mut rng)
    });
    let totals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let lates: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mean, stderr) = reduce(&totals);
    let late_mean = pairwise_sum(&lates) / replicas as f64;
    let modulus = y.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
    let tail_estimate = if late_mean > 0.0 && modulus > 0.0 {
        fitted_tail(late_mean, cone.exponent_p(), dist.dim(), modulus, late_from, horizon)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr,
        late_mean,
        tail_estimate,
        ..empty
    })
}

/// Mean number of visits to `y` over `n = 0..=horizon` before leaving the cone.
pub fn mc_green(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    y: &[i64],
    horizon: usize,
    replicas: usize,
    seed: u64,
) -> Result<McEstimate> {
    green_estimate(
        &Sampler::plain(dist),
        cone,
        x,
        y,
        horizon,
        replicas,
        seed,
        Method::PlainMc,
        0.0,
    )
}

/// Importance-sampled Green estimate under the tilt chosen by [`choose_tilt`].
#[allow(clippy::too_many_arguments)]
pub fn mc_green_tilted(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    y: &[i64],
    horizon: usize,
    gamma: f64,
    replicas: usize,
    seed: u64,
) -> Result<McEstimate> {
    let spec = choose_tilt(dist, cone, x, y, gamma)?;
    mc_green_tilted_with(dist, cone, x, y, horizon, &spec, replicas, seed)
}

/// Importance-sampled Green estimate under an explicit tilt.
///
/// The mean is unbiased for visits along paths that use only steps with
/// `|s_axis| <= truncation`; `remainder_bound` bounds what those paths miss
/// by `Σ_{n<=N} n P(|X_1| > truncation)`.
#[allow(clippy::too_many_arguments)]
pub fn mc_green_tilted_with(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    y: &[i64],
    horizon: usize,
    spec: &TiltSpec,
    replicas: usize,
    seed: u64,
) -> Result<McEstimate> {
    if spec.axis >= dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: spec.axis + 1,
        });
    }
    let big = 1.0 - spec.kept_mass;
    let n = horizon as f64;
    let remainder = (n * (n + 1.0) / 2.0 * big).max(0.0);
    if max_log_weight(spec, horizon) >= LOG_WEIGHT_LIMIT {
        return Err(Error::DegenerateTilt(format!(
            "log-weights could exceed {LOG_WEIGHT_LIMIT} within {horizon} steps"
        )));
    }
    green_estimate(
        &Sampler::tilted(dist, spec)?,
        cone,
        x,
        y,
        horizon,
        replicas,
        seed,
        Method::TiltedMc,
        remainder,
    )
}

/// Estimates of `E[u(x + S(n)); τ_x > n]` along a schedule of times.
#[derive(Debug, Clone, PartialEq)]
pub struct VEstimate {
    /// `(n, mean, stderr)` per schedule point.
    pub rows: Vec<(usize, f64, f64)>,
    pub value: f64,
    pub stderr: f64,
    /// Relative change between the last two schedule points is below 5%.
    pub plateau: bool,
}

/// Relative change that counts as a plateau in [`estimate_v`].
pub const PLATEAU_TOLERANCE: f64 = 0.05;

/// Harmonic function estimate `V(x) ≈ E[u(x + S(n)); τ_x > n]`.
pub fn estimate_v(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    schedule: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<VEstimate> {
    check_walk(dist, cone, x, replicas)?;
    if schedule.is_empty() {
        return Err(Error::InsufficientData("empty schedule".into()));
    }
    let mut sched = schedule.to_vec();
    sched.sort_unstable();
    sched.dedup();
    let last = *sched.last().expect("non-empty");
    let per_replica: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let mut pos = x.to_vec();
            let mut out = Vec::with_capacity(sched.len());
            let mut next = 0;
            let mut alive = true;
            for n in 0..=last {
                if n > 0 && alive {
                    for (p, s) in pos.iter_mut().zip(dist.sample_step(&mut rng)) {
                        *p += s;
                    }
                    alive = cone.contains(&pos);
                }
                while next < sched.len() && sched[next] == n {
                    out.push(if alive { cone.harmonic_u_lattice(&pos) } else { 0.0 });
                    next += 1;
                }
                if !alive && next < sched.len() {
                    out.resize(sched.len(), 0.0);
                    break;
                }
            }
            out
        })
        .collect();
    let rows: Vec<(usize, f64, f64)> = sched
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let col: Vec<f64> = per_replica.iter().map(|v| v[k]).collect();
            let (m, s) = reduce(&col);
            (n, m, s)
        })
        .collect();
    let (_, value, stderr) = *rows.last().expect("non-empty");
    let plateau = rows.len() >= 2 && {
        let prev = rows[rows.len() - 2].1;
        prev > 0.0 && ((value - prev) / prev).abs() < PLATEAU_TOLERANCE
    };
    Ok(VEstimate {
        rows,
        value,
        stderr,
        plateau,
    })
}

/// Outcome of the lower-bound check `V(y) >= c |y|^{p-1}(1 + dist(y, ∂K))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundCheck {
    pub ratios: Vec<f64>,
    pub median: f64,
    pub min: f64,
    /// Every ratio is at least half the median.
    pub pass: bool,
}

/// Checks `V(y) / (|y|^{p-1}(1 + dist(y, ∂K)))` against half its median.
pub fn v_lower_bound_check(cone: &Cone, values: &[(Vec<i64>, f64)]) -> Result<LowerBoundCheck> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no V values".into()));
    }
    let p = cone.exponent_p();
    let ratios: Vec<f64> = values
        .iter()
        .map(|(y, v)| {
            let yf: Vec<f64> = y.iter().map(|&c| c as f64).collect();
            let r = yf.iter().map(|c| c * c).sum::<f64>().sqrt();
            v / (r.powf(p - 1.0) * (1.0 + cone.dist_boundary(&yf)))
        })
        .collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let min = sorted[0];
    Ok(LowerBoundCheck {
        pass: min >= 0.5 * median,
        ratios,
        median,
        min,
    })
}
