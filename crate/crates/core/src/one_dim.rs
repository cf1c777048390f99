//! Ladder heights and renewal functions of one-dimensional walks.
//!
//! For a walk `S` killed on leaving `(0, ∞)` the positive harmonic function
//! is `V(x) = U(x - 1)`, where `U` is the renewal function of the strict
//! ascending ladder heights of `-S`. The reversed walk `-S` gets `V'` from
//! the ladder heights of `S` itself. Both are normalised by `U(0) = 1`.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::step_models::Pmf1d;

/// Horizon used when none is given.
pub const DEFAULT_HORIZON: usize = 40_000;
/// Renewal table length used when none is given.
pub const DEFAULT_TABLE: usize = 2_000;
/// Residuals at or above this level are reported in [`LadderLaw::warning`].
pub const RESIDUAL_WARNING: f64 = 1e-6;

/// Strict ascending ladder-height law with its renewal table.
#[derive(Debug, Clone)]
pub struct LadderLaw<T> {
    base: Pmf1d,
    horizon: usize,
    /// `heights[k] = P(H = k)`; index 0 is unused.
    heights: Vec<T>,
    /// `P(T > horizon)` before the tail allocation.
    missing_mass: T,
    /// Largest change of the corrected law between `horizon/2` and `horizon`.
    residual: T,
    renewal: Vec<T>,
    warning: Option<String>,
}

/// Per-height first-entry mass accumulated over a time range.
struct Entries<T> {
    total: Vec<T>,
    window: Vec<T>,
}

fn correct<T: Real>(e: &Entries<T>) -> Vec<T> {
    let got: T = e.total.iter().copied().sum();
    let missing = (T::one() - got).max(T::zero());
    let late: T = e.window.iter().copied().sum();
    e.total
        .iter()
        .zip(&e.window)
        .map(|(&t, &w)| if late > T::zero() { t + missing * w / late } else { t })
        .collect()
}

impl<T: Real> LadderLaw<T> {
    /// Runs the killed DP on `(-∞, 0]` for `horizon` steps and builds the
    /// renewal table `U(0..=k_max)`.
    ///
    /// Mass still alive at the horizon is spread over heights in proportion
    /// to the entries seen in `(horizon/2, horizon]`.
    pub fn build(pmf: &Pmf1d, horizon: usize, k_max: usize) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::OutOfRange("ladder horizon must be >= 1".into()));
        }
        if pmf.mean().abs() > 1e-10 {
            return Err(Error::InvalidDistribution(format!(
                "ladder heights need an oscillating walk, mean is {}",
                pmf.mean()
            )));
        }
        let up = pmf.max_up().max(0) as usize;
        let down = pmf.max_down().max(0) as usize;
        if up == 0 || down == 0 {
            return Err(Error::InvalidDistribution(
                "walk must move in both directions".into(),
            ));
        }
        // Depth beyond which the killed walk carries less than e^-70 of mass.
        let sd = pmf.variance().sqrt();
        let depth = (horizon * down).min((12.0 * sd * (horizon as f64).sqrt()) as usize + 4 * down);
        let atoms: Vec<(i64, T)> = pmf
            .atoms()
            .iter()
            .map(|&(s, p)| (s, T::from_f64_lossy(p)))
            .collect();
        // level[j] holds the mass at height -j.
        let mut level = vec![T::zero(); depth + 1];
        let mut next = vec![T::zero(); depth + 1];
        level[0] = T::one();
        let mut full = Entries {
            total: vec![T::zero(); up + 1],
            window: vec![T::zero(); up + 1],
        };
        let mut half = Entries {
            total: vec![T::zero(); up + 1],
            window: vec![T::zero(); up + 1],
        };
        let half_n = horizon / 2;
        let mut reach = 0usize;
        for n in 1..=horizon {
            next[..=(reach + down).min(depth)].iter_mut().for_each(|v| *v = T::zero());
            let mut entered = vec![T::zero(); up + 1];
            for j in 0..=reach {
                let m = level[j];
                if m == T::zero() {
                    continue;
                }
                for &(s, p) in &atoms {
                    let to = s - j as i64;
                    if to > 0 {
                        entered[to as usize] = entered[to as usize] + m * p;
                    } else if (-to) as usize <= depth {
                        let k = (-to) as usize;
                        next[k] = next[k] + m * p;
                    }
                }
            }
            reach = (reach + down).min(depth);
            std::mem::swap(&mut level, &mut next);
            for k in 1..=up {
                full.total[k] = full.total[k] + entered[k];
                if n > half_n {
                    full.window[k] = full.window[k] + entered[k];
                }
                if n <= half_n {
                    half.total[k] = half.total[k] + entered[k];
                    if n > half_n / 2 {
                        half.window[k] = half.window[k] + entered[k];
                    }
                }
            }
        }
        let got: T = full.total.iter().copied().sum();
        let missing_mass = (T::one() - got).max(T::zero());
        let heights = correct(&full);
        let residual = if half_n >= 1 {
            heights
                .iter()
                .zip(correct(&half))
                .map(|(a, b)| (*a - b).abs())
                .fold(T::zero(), T::max)
        } else {
            missing_mass
        };
        let warning = (residual.to_f64_lossy() >= RESIDUAL_WARNING).then(|| {
            format!(
                "ladder law not converged: residual {:.3e} at horizon {horizon}",
                residual.to_f64_lossy()
            )
        });
        let renewal = renewal_table(&heights, k_max);
        Ok(LadderLaw {
            base: pmf.clone(),
            horizon,
            heights,
            missing_mass,
            residual,
            renewal,
            warning,
        })
    }

    pub fn base(&self) -> &Pmf1d {
        &self.base
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P(H = k)`, zero outside the support.
    pub fn height_prob(&self, k: usize) -> T {
        self.heights.get(k).copied().unwrap_or(T::zero())
    }

    /// `(k, P(H = k))` for `k >= 1`.
    pub fn heights(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.heights.iter().copied().enumerate().skip(1)
    }

    pub fn missing_mass(&self) -> T {
        self.missing_mass
    }

    pub fn residual(&self) -> T {
        self.residual
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn k_max(&self) -> usize {
        self.renewal.len() - 1
    }

    /// `U(k)`.
    pub fn renewal(&self, k: usize) -> Result<T> {
        self.renewal.get(k).copied().ok_or_else(|| {
            Error::OutOfRange(format!("renewal index {k} exceeds table size {}", self.k_max()))
        })
    }

    /// `U(x - 1)`, the harmonic function at level `x >= 1`.
    pub fn harmonic(&self, x: i64) -> Result<T> {
        if x < 1 {
            return Err(Error::OutsideCone(vec![x]));
        }
        self.renewal(x as usize - 1)
    }
}

fn renewal_table<T: Real>(heights: &[T], k_max: usize) -> Vec<T> {
    let mut u = vec![T::zero(); k_max + 1];
    u[0] = T::one();
    for k in 1..=k_max {
        let mut acc = T::zero();
        for (j, &h) in heights.iter().enumerate().skip(1).take(k) {
            acc = acc + h * u[k - j];
        }
        u[k] = acc;
    }
    let mut total = T::zero();
    u.iter()
        .map(|&v| {
            total = total + v;
            total
        })
        .collect()
}

/// Strict ascending ladder-height law of `pmf` at the given horizon.
pub fn ladder_height_pmf(pmf: &Pmf1d, horizon: usize) -> Result<LadderLaw<f64>> {
    LadderLaw::build(pmf, horizon, DEFAULT_TABLE)
}

/// `U(k)` of a ladder law.
pub fn renewal_function<T: Real>(ladder: &LadderLaw<T>, k: usize) -> Result<T> {
    ladder.renewal(k)
}

/// Renewal table whose `harmonic(x)` is `V(x)` for the walk with steps `pmf`
/// killed on leaving `(0, ∞)`.
pub fn harmonic_table(pmf: &Pmf1d, horizon: usize, k_max: usize) -> Result<LadderLaw<f64>> {
    LadderLaw::build(&pmf.reflected(), horizon, k_max)
}

/// Renewal table for `V'`, the harmonic function of the reversed walk.
pub fn reversed_harmonic_table(pmf: &Pmf1d, horizon: usize, k_max: usize) -> Result<LadderLaw<f64>> {
    LadderLaw::build(pmf, horizon, k_max)
}

/// `V(x)` for the walk with steps `pmf`.
pub fn half_line_harmonic(pmf: &Pmf1d, x: i64) -> Result<f64> {
    let k = (x.max(1) as usize).max(DEFAULT_TABLE);
    harmonic_table(pmf, DEFAULT_HORIZON, k)?.harmonic(x)
}

/// `V'(x)`, the harmonic function of the reversed walk `-S`.
pub fn reversed_harmonic(pmf: &Pmf1d, x: i64) -> Result<f64> {
    let k = (x.max(1) as usize).max(DEFAULT_TABLE);
    reversed_harmonic_table(pmf, DEFAULT_HORIZON, k)?.harmonic(x)
}

/// `|E[V(x + X); x + X > 0] - V(x)| / V(x)` where `V` is `table.harmonic`
/// and `X` has law `pmf`.
pub fn harmonicity_residual(pmf: &Pmf1d, table: &LadderLaw<f64>, x: i64) -> Result<f64> {
    let v = table.harmonic(x)?;
    let mut e = 0.0;
    for &(s, p) in pmf.atoms() {
        if x + s > 0 {
            e += p * table.harmonic(x + s)?;
        }
    }
    Ok((e - v).abs() / v)
}
