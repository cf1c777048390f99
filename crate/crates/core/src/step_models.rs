//! Lattice step distributions.
//!
//! Every law here has finite support. The Williamson family is an infinite
//! heavy-tailed law in principle; it is truncated at `n_max` and renormalised,
//! and moment divergence is exhibited by letting `n_max` grow.

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;

use crate::cone_geometry::Cone;
use crate::error::{Error, Result};
use crate::lattice::Lattice;

const PROB_TOL: f64 = 1e-12;
const NORMALISATION_TOL: f64 = 1e-10;

/// One-dimensional integer pmf.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf1d {
    atoms: Vec<(i64, f64)>,
}

impl Pmf1d {
    pub fn new(atoms: Vec<(i64, f64)>) -> Result<Self> {
        let mut merged: Vec<(i64, f64)> = Vec::new();
        for (x, p) in atoms {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "probability {p} at {x} is not strictly positive"
                )));
            }
            match merged.iter_mut().find(|(y, _)| *y == x) {
                Some(slot) => slot.1 += p,
                None => merged.push((x, p)),
            }
        }
        merged.sort_by_key(|&(x, _)| x);
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if merged.is_empty() || (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Pmf1d { atoms: merged })
    }

    /// ±1 with probability 1/2 each.
    pub fn rademacher() -> Self {
        Pmf1d {
            atoms: vec![(-1, 0.5), (1, 0.5)],
        }
    }

    /// {-1: 1/4, 0: 1/2, +1: 1/4}. Variance 1/2.
    pub fn lazy() -> Self {
        Pmf1d {
            atoms: vec![(-1, 0.25), (0, 0.5), (1, 0.25)],
        }
    }

    /// {-2: 1/8, 0: 3/4, +2: 1/8}: aperiodic-at-zero law with mean 0 and variance 1.
    pub fn lazy_unit() -> Self {
        Pmf1d {
            atoms: vec![(-2, 0.125), (0, 0.75), (2, 0.125)],
        }
    }

    pub fn atoms(&self) -> &[(i64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, p)| x as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .map(|&(x, p)| (x as f64 - m).powi(2) * p)
            .sum()
    }

    pub fn reflected(&self) -> Self {
        let mut atoms: Vec<_> = self.atoms.iter().map(|&(x, p)| (-x, p)).collect();
        atoms.sort_by_key(|&(x, _)| x);
        Pmf1d { atoms }
    }

    pub fn max_up(&self) -> i64 {
        self.atoms.iter().map(|a| a.0).max().unwrap_or(0).max(0)
    }

    pub fn max_down(&self) -> i64 {
        (-self.atoms.iter().map(|a| a.0).min().unwrap_or(0)).max(0)
    }

    pub fn prob(&self, x: i64) -> f64 {
        self.atoms
            .iter()
            .find(|a| a.0 == x)
            .map_or(0.0, |a| a.1)
    }
}

/// How a distribution was built. Only the Williamson family needs its
/// parameters afterwards (moment finiteness is decided analytically for it).
#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    Simple,
    Product(Pmf1d),
    Williamson {
        tail_exponent: f64,
        n_max: u32,
        /// q_n for n = 1..=n_max.
        weights: Vec<f64>,
    },
    Custom,
}

/// Sublattice and parity bookkeeping of the reachable set.
///
/// At time `n` the walk started at `x` sits on `x + n * base_step + steps`,
/// where `steps` is the lattice spanned by atom differences. `period` is the
/// order of `base_step` in `Z^d / steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodicity {
    pub base_step: Vec<i64>,
    pub steps: Lattice,
    pub generated: Lattice,
    pub index: u64,
    pub period: usize,
}

impl Periodicity {
    fn new(dim: usize, atoms: &[(Vec<i64>, f64)]) -> Result<Self> {
        let base = atoms[0].0.clone();
        let diffs: Vec<Vec<i64>> = atoms
            .iter()
            .map(|(s, _)| s.iter().zip(&base).map(|(a, b)| a - b).collect())
            .collect();
        let steps = Lattice::generated_by(dim, &diffs);
        let Some(index) = steps.index() else {
            return Err(Error::InvalidDistribution(
                "step differences do not span a full-rank lattice (degenerate covariance)".into(),
            ));
        };
        let all: Vec<Vec<i64>> = atoms.iter().map(|(s, _)| s.clone()).collect();
        let generated = Lattice::generated_by(dim, &all);
        let mut period = 1;
        let mut acc = base.clone();
        while !steps.contains(&acc) {
            period += 1;
            acc.iter_mut().zip(&base).for_each(|(a, b)| *a += b);
        }
        Ok(Periodicity {
            base_step: base,
            steps,
            generated,
            index,
            period,
        })
    }

    /// Can the walk started at `x` be at `y` after exactly `n` steps
    /// (ignoring killing)?
    pub fn reachable_at(&self, x: &[i64], y: &[i64], n: usize) -> bool {
        let v: Vec<i64> = y
            .iter()
            .zip(x)
            .zip(&self.base_step)
            .map(|((yi, xi), s)| yi - xi - n as i64 * s)
            .collect();
        self.steps.contains(&v)
    }

    /// Can the walk started at `x` ever be at `y` (ignoring killing)?
    pub fn reachable(&self, x: &[i64], y: &[i64]) -> bool {
        (0..self.period).any(|n| self.reachable_at(x, y, n))
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period == 1 && self.index == 1
    }
}

/// A finite-support lattice step law with cached moments.
#[derive(Debug, Clone)]
pub struct StepDistribution {
    dim: usize,
    atoms: Vec<(Vec<i64>, f64)>,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    kind: StepKind,
    periodicity: Periodicity,
    sampler: WeightedAliasIndex<f64>,
}

impl PartialEq for StepDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.atoms == other.atoms && self.kind == other.kind
    }
}

impl StepDistribution {
    /// Builds a law from explicit atoms. Duplicate atoms are merged.
    pub fn from_atoms(dim: usize, atoms: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        Self::build(dim, atoms, StepKind::Custom)
    }

    fn build(dim: usize, atoms: Vec<(Vec<i64>, f64)>, kind: StepKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDistribution("dimension must be >= 1".into()));
        }
        let mut merged: Vec<(Vec<i64>, f64)> = Vec::with_capacity(atoms.len());
        for (s, p) in atoms {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "probability {p} at {s:?} is not strictly positive"
                )));
            }
            match merged.iter_mut().find(|(t, _)| *t == s) {
                Some(slot) => slot.1 += p,
                None => merged.push((s, p)),
            }
        }
        if merged.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let periodicity = Periodicity::new(dim, &merged)?;
        let (mean, covariance) = moments_of(dim, &merged);
        let sampler = WeightedAliasIndex::new(merged.iter().map(|a| a.1).collect())
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Ok(StepDistribution {
            dim,
            atoms: merged,
            mean,
            covariance,
            kind,
            periodicity,
            sampler,
        })
    }

    /// Simple random walk: `±e_k` with probability `1/(2d)` each.
    /// Its covariance is `I/d`, not the identity.
    pub fn simple(dim: usize) -> Result<Self> {
        let mut atoms = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            for sign in [1, -1] {
                let mut e = vec![0; dim];
                e[k] = sign;
                atoms.push((e, 1.0 / (2 * dim) as f64));
            }
        }
        Self::build(dim, atoms, StepKind::Simple)
    }

    /// Product of `dim` independent copies of a mean-zero, unit-variance pmf.
    pub fn product(pmf: &Pmf1d, dim: usize) -> Result<Self> {
        if pmf.mean().abs() > NORMALISATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "1D pmf has mean {} (must be 0)",
                pmf.mean()
            )));
        }
        if (pmf.variance() - 1.0).abs() > NORMALISATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "1D pmf has variance {} (must be 1)",
                pmf.variance()
            )));
        }
        let mut atoms: Vec<(Vec<i64>, f64)> = vec![(Vec::new(), 1.0)];
        for _ in 0..dim {
            atoms = atoms
                .into_iter()
                .flat_map(|(v, p)| {
                    pmf.atoms().iter().map(move |&(x, q)| {
                        let mut w = v.clone();
                        w.push(x);
                        (w, p * q)
                    })
                })
                .collect();
        }
        Self::build(dim, atoms, StepKind::Product(pmf.clone()))
    }

    /// Williamson-type heavy-tailed law: `P(X = ±2^n e_k) = q_n / (2d)` with
    /// `q_n ∝ log(n+1) / 2^{n β}`, truncated at `n_max` and renormalised.
    pub fn williamson(dim: usize, tail_exponent: f64, n_max: u32) -> Result<Self> {
        if !(tail_exponent > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "tail exponent must be positive, got {tail_exponent}"
            )));
        }
        if n_max < 2 {
            return Err(Error::InvalidDistribution("n_max must be >= 2".into()));
        }
        if n_max > 60 {
            return Err(Error::InvalidDistribution(
                "n_max above 60 overflows the integer lattice".into(),
            ));
        }
        // Accumulate in log space: 2^{-nβ} underflows for large nβ.
        let raw: Vec<f64> = (1..=n_max)
            .map(|n| ((n + 1) as f64).ln() * (-(n as f64) * tail_exponent * std::f64::consts::LN_2).exp())
            .collect();
        let c = 1.0 / raw.iter().sum::<f64>();
        let weights: Vec<f64> = raw.iter().map(|w| w * c).collect();
        let mut atoms = Vec::with_capacity(2 * dim * n_max as usize);
        for (i, q) in weights.iter().enumerate() {
            let n = i as u32 + 1;
            for k in 0..dim {
                for sign in [1i64, -1] {
                    let mut e = vec![0; dim];
                    e[k] = sign << n;
                    atoms.push((e, q / (2 * dim) as f64));
                }
            }
        }
        Self::build(
            dim,
            atoms,
            StepKind::Williamson {
                tail_exponent,
                n_max,
                weights,
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[(Vec<i64>, f64)] {
        &self.atoms
    }

    pub fn kind(&self) -> &StepKind {
        &self.kind
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[Vec<f64>] {
        &self.covariance
    }

    pub fn periodicity(&self) -> &Periodicity {
        &self.periodicity
    }

    /// Largest `|s_k|` over atoms, per coordinate.
    pub fn max_step(&self) -> Vec<i64> {
        (0..self.dim)
            .map(|k| self.atoms.iter().map(|(s, _)| s[k].abs()).max().unwrap_or(0))
            .collect()
    }

    /// `E|X|^α`, summed exactly over atoms.
    pub fn moment(&self, alpha: f64) -> f64 {
        self.atoms
            .iter()
            .map(|(s, p)| {
                let r2: f64 = s.iter().map(|&c| (c as f64).powi(2)).sum();
                if alpha == 0.0 {
                    *p
                } else {
                    r2.powf(alpha / 2.0) * p
                }
            })
            .sum()
    }

    /// `E[g(|X|)]` for an arbitrary radial function.
    pub fn radial_expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|(s, p)| g(s.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt()) * p)
            .sum()
    }

    /// Law of `-X`.
    pub fn reversed(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|(s, p)| (s.iter().map(|c| -c).collect(), *p))
            .collect();
        let kind = match &self.kind {
            StepKind::Product(pmf) => StepKind::Product(pmf.reflected()),
            other => other.clone(),
        };
        Self::build(self.dim, atoms, kind).expect("reflection preserves validity")
    }

    /// Marginal law of coordinate `axis`.
    pub fn marginal(&self, axis: usize) -> Pmf1d {
        let mut atoms: Vec<(i64, f64)> = Vec::new();
        for (s, p) in &self.atoms {
            match atoms.iter_mut().find(|a| a.0 == s[axis]) {
                Some(slot) => slot.1 += p,
                None => atoms.push((s[axis], *p)),
            }
        }
        atoms.sort_by_key(|a| a.0);
        Pmf1d { atoms }
    }

    /// Draws the index of one atom.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    /// Draws one step. The draw depends only on the generator state.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> &[i64] {
        &self.atoms[self.sample_index(rng)].0
    }

    /// Checks the cached moments against a fresh computation.
    pub fn cached_moments_consistent(&self) -> bool {
        let (m, c) = moments_of(self.dim, &self.atoms);
        let close = |a: f64, b: f64| (a - b).abs() <= PROB_TOL * (1.0 + b.abs());
        m.iter().zip(&self.mean).all(|(a, b)| close(*a, *b))
            && c.iter()
                .flatten()
                .zip(self.covariance.iter().flatten())
                .all(|(a, b)| close(*a, *b))
    }
}

fn moments_of(dim: usize, atoms: &[(Vec<i64>, f64)]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut mean = vec![0.0; dim];
    for (s, p) in atoms {
        for (m, &c) in mean.iter_mut().zip(s) {
            *m += c as f64 * p;
        }
    }
    let mut cov = vec![vec![0.0; dim]; dim];
    for (s, p) in atoms {
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += (s[i] as f64 - mean[i]) * (s[j] as f64 - mean[j]) * p;
            }
        }
    }
    (mean, cov)
}

/// Outcome of checking a law against the hypotheses of the cone Green-function
/// asymptotics.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub exponent_p: f64,
    pub mean_ok: bool,
    pub mean: Vec<f64>,
    pub covariance_identity_ok: bool,
    pub covariance: Vec<Vec<f64>>,
    /// `(α, E|X|^α)` for α ∈ {2, r1, r1 + 1}.
    pub moment_values: Vec<(f64, f64)>,
    /// `r1(p) = p + d - 2 + (2 - p)^+`.
    pub r1_threshold: f64,
    /// `E|X|^{r1} < ∞` (interior asymptotics).
    pub r1_ok: bool,
    /// `E|X|^{r1 + 1} < ∞` (boundary asymptotics).
    pub r1_plus_one_ok: bool,
    /// `E|X|^{d-2} < ∞` (free-space Green asymptotics, d >= 3).
    pub full_space_moment_ok: bool,
    /// `P(X = x) <= |x|^{-p-d+1} f(|x|)` with `u^{(3-p) ∨ 1} f(u) -> 0`.
    pub local_condition_ok: bool,
    pub lattice_full_rank: bool,
    pub period: Periodicity,
}

impl AssumptionReport {
    /// All hypotheses of the interior theorem hold, allowing the local
    /// condition to replace the moment condition.
    pub fn interior_ok(&self) -> bool {
        self.mean_ok
            && self.covariance_identity_ok
            && (self.r1_ok || self.local_condition_ok)
            && self.lattice_full_rank
    }
}

pub fn r1_threshold(p: f64, d: usize) -> f64 {
    p + d as f64 - 2.0 + (2.0 - p).max(0.0)
}

/// Validates `dist` against the moment, normalisation and lattice hypotheses
/// for the cone exponent of `cone`. Failures are carried in the report.
pub fn validate_assumptions(dist: &StepDistribution, cone: &Cone) -> AssumptionReport {
    let d = dist.dim();
    let p = cone.exponent_p();
    let r1 = r1_threshold(p, d);
    let mean_ok = dist.mean().iter().all(|m| m.abs() <= NORMALISATION_TOL);
    let cov = dist.covariance();
    let covariance_identity_ok = (0..d).all(|i| {
        (0..d).all(|j| {
            let target = if i == j { 1.0 } else { 0.0 };
            (cov[i][j] - target).abs() <= NORMALISATION_TOL
        })
    });
    // Finite support makes every moment finite; the Williamson law has
    // E|X|^α < ∞ iff α < β (the log(n+1) factor kills the boundary case).
    let finite = |alpha: f64| match dist.kind() {
        StepKind::Williamson { tail_exponent, .. } => alpha < *tail_exponent,
        _ => true,
    };
    let local_condition_ok = match dist.kind() {
        StepKind::Williamson { tail_exponent, .. } => {
            let growth = p + d as f64 - 1.0 + (3.0 - p).max(1.0);
            *tail_exponent > growth
        }
        _ => true,
    };
    AssumptionReport {
        exponent_p: p,
        mean_ok,
        mean: dist.mean().to_vec(),
        covariance_identity_ok,
        covariance: cov.to_vec(),
        moment_values: [2.0, r1, r1 + 1.0]
            .iter()
            .map(|&a| (a, dist.moment(a)))
            .collect(),
        r1_threshold: r1,
        r1_ok: finite(r1),
        r1_plus_one_ok: finite(r1 + 1.0),
        full_space_moment_ok: finite(d as f64 - 2.0),
        local_condition_ok,
        lattice_full_rank: dist.periodicity().generated.is_full_rank(),
        period: dist.periodicity().clone(),
    }
}
