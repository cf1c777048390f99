//! Exact layered dynamic programming for walks killed on leaving a cone.
//!
//! Layer `n` holds `p_n(y) = P(x + S(n) = y, τ_x > n)`. Each layer lives on
//! the coset of the step lattice the walk occupies at time `n`, stored densely
//! in lattice coordinates over the box `x ± N·maxstep` clipped to the cone.
//! Layers are produced by a pull sweep
//! `p_{n+1}(y) = Σ_s p_n(y - s) P(X = s)` restricted to `y ∈ K`, keeping
//! only two layers plus the running Green sums.
//!
//! The Green function includes the `n = 0` term.

use rayon::prelude::*;

use crate::asymptotics::profile_integral_between;
use crate::cone_geometry::Cone;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Real;
use crate::step_models::StepDistribution;

/// Default memory cap for a kernel build: 4 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

/// Where the walk is allowed to live.
#[derive(Debug, Clone, Copy)]
pub enum Domain<'a> {
    Killed(&'a Cone),
    Free,
}

impl Domain<'_> {
    fn contains(&self, y: &[i64]) -> bool {
        match self {
            Domain::Killed(c) => c.contains(y),
            Domain::Free => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ExactDp,
    PlainMc,
    TiltedMc,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::ExactDp => "dp",
            Method::PlainMc => "plain",
            Method::TiltedMc => "tilted",
        }
    }
}

/// A Green-function value with its error budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenEstimate<T> {
    /// Truncated sum over `n <= horizon`.
    pub value: T,
    /// Statistical standard error; zero for exact DP.
    pub stat_error: T,
    pub horizon: usize,
    /// Estimated contribution of `n > horizon` from the local-limit profile.
    pub tail_estimate: T,
    pub method: Method,
}

impl<T: Real> GreenEstimate<T> {
    /// Truncated value plus the tail surrogate.
    pub fn corrected(&self) -> T {
        self.value + self.tail_estimate
    }
}

#[derive(Debug, Clone)]
pub struct KernelOptions {
    pub memory_cap: u64,
    /// Layers to keep in full.
    pub snapshots: Vec<usize>,
    /// Points whose value `p_n(y)` is recorded for every `n`.
    pub track: Vec<Vec<i64>>,
    /// First layer of the late window used to fit the tail constant.
    /// Defaults to `N/2 + 1`.
    pub late_from: Option<usize>,
    /// When set to `k`, layer `n` is confined to `|y_i - x_i| <= k m_i sqrt(n) + m_i`
    /// with `m_i` the largest step along axis `i`. By Hoeffding's inequality
    /// each layer then drops at most `2d e^{-k²/2}` of its mass.
    pub spread_sigmas: Option<f64>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            memory_cap: DEFAULT_MEMORY_CAP,
            snapshots: Vec::new(),
            track: Vec::new(),
            late_from: None,
            spread_sigmas: None,
        }
    }
}

/// Dense storage in lattice coordinates.
#[derive(Debug, Clone)]
struct Grid {
    lo: Vec<i64>,
    len: Vec<usize>,
    stride: Vec<usize>,
    inner_lo: Vec<i64>,
    inner_hi: Vec<i64>,
}

impl Grid {
    fn cells(&self) -> usize {
        self.len.iter().product()
    }

    fn index(&self, c: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for (i, &ci) in c.iter().enumerate() {
            if ci < self.inner_lo[i] || ci > self.inner_hi[i] {
                return None;
            }
            idx += (ci - self.lo[i]) as usize * self.stride[i];
        }
        Some(idx)
    }

    fn coords(&self, mut idx: usize) -> Vec<i64> {
        let mut c = vec![0; self.lo.len()];
        for i in 0..c.len() {
            c[i] = self.lo[i] + (idx / self.stride[i]) as i64;
            idx %= self.stride[i];
        }
        c
    }
}

/// Per-phase data: layers with `n ≡ k (mod period)` share a coset.
#[derive(Debug, Clone)]
struct Phase {
    rep: Vec<i64>,
    mask: Vec<bool>,
    /// Flat offsets from a cell of this phase to its predecessor for each atom
    /// (predecessor in the previous phase).
    pull: Vec<isize>,
}

/// Shared geometry of a kernel build.
#[derive(Debug, Clone)]
struct Layout {
    dim: usize,
    start: Vec<i64>,
    lattice: Lattice,
    grid: Grid,
    phases: Vec<Phase>,
    max_step: Vec<i64>,
    window_lo: Vec<i64>,
    window_hi: Vec<i64>,
    spread: Option<f64>,
}

/// Largest displacement along an axis kept after `n` steps.
fn radius(n: usize, max_step: i64, spread: Option<f64>) -> i64 {
    let full = (n as i64).saturating_mul(max_step);
    match spread {
        Some(k) => full.min((k * max_step as f64 * (n as f64).sqrt()).ceil() as i64 + max_step),
        None => full,
    }
}

impl Layout {
    fn phase_of(&self, n: usize) -> usize {
        n % self.phases.len()
    }

    fn point(&self, phase: usize, idx: usize) -> Vec<i64> {
        let c = self.grid.coords(idx);
        let v = self.lattice.point(&c);
        v.iter()
            .zip(&self.phases[phase].rep)
            .zip(&self.start)
            .map(|((a, r), x)| a + r + x)
            .collect()
    }

    /// Cell holding `y`, with the phase it belongs to.
    fn locate(&self, y: &[i64]) -> Option<(usize, usize)> {
        for (k, ph) in self.phases.iter().enumerate() {
            let v: Vec<i64> = y
                .iter()
                .zip(&self.start)
                .zip(&ph.rep)
                .map(|((yi, xi), r)| yi - xi - r)
                .collect();
            if let Some(c) = self.lattice.coordinates(&v) {
                return self.grid.index(&c).map(|i| (k, i));
            }
        }
        None
    }

    /// Box of cells that may be nonzero at layer `n`.
    fn reach_box(&self, n: usize) -> (Vec<i64>, Vec<i64>) {
        let rep = &self.phases[self.phase_of(n)].rep;
        let mut vlo = Vec::with_capacity(self.dim);
        let mut vhi = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let r = radius(n, self.max_step[i], self.spread);
            let lo = (self.start[i] - r).max(self.window_lo[i]);
            let hi = (self.start[i] + r).min(self.window_hi[i]);
            vlo.push(lo - self.start[i] - rep[i]);
            vhi.push(hi - self.start[i] - rep[i]);
        }
        let (mut clo, mut chi) = self.lattice.coordinate_bounds(&vlo, &vhi);
        for i in 0..self.dim {
            clo[i] = clo[i].max(self.grid.inner_lo[i]);
            chi[i] = chi[i].min(self.grid.inner_hi[i]);
        }
        (clo, chi)
    }
}

/// Exact killed transition probabilities from a fixed start, up to a horizon.
#[derive(Debug, Clone)]
pub struct KilledKernel<T> {
    layout: Layout,
    horizon: usize,
    late_from: usize,
    final_layer: Vec<T>,
    green: Vec<Vec<T>>,
    late_green: Vec<Vec<T>>,
    survival: Vec<T>,
    snapshots: Vec<(usize, Vec<T>)>,
    tracked: Vec<(Vec<i64>, Vec<T>)>,
}

/// Values of one layer.
pub struct LayerView<'a, T> {
    layout: &'a Layout,
    phase: usize,
    values: &'a [T],
}

impl<T: Real> LayerView<'_, T> {
    /// Nonzero cells as `(y, p_n(y))`.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, T)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != T::zero())
            .map(|(i, v)| (self.layout.point(self.phase, i), *v))
    }

    pub fn get(&self, y: &[i64]) -> T {
        match self.layout.locate(y) {
            Some((k, i)) if k == self.phase => self.values[i],
            _ => T::zero(),
        }
    }

    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }
}

fn build_layout(
    dist: &StepDistribution,
    domain: Domain<'_>,
    x: &[i64],
    horizon: usize,
    scalar_bytes: usize,
    opts: &KernelOptions,
) -> Result<Layout> {
    let d = dist.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if let Domain::Killed(cone) = domain {
        if cone.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cone.dim(),
            });
        }
        if !cone.contains(x) {
            return Err(Error::OutsideCone(x.to_vec()));
        }
    }
    let per = dist.periodicity();
    let lattice = per.steps.clone();
    let max_step = dist.max_step();
    let mut window_lo: Vec<i64> = (0..d)
        .map(|i| x[i].saturating_sub(radius(horizon, max_step[i], opts.spread_sigmas)))
        .collect();
    let window_hi: Vec<i64> = (0..d)
        .map(|i| x[i].saturating_add(radius(horizon, max_step[i], opts.spread_sigmas)))
        .collect();
    if let Domain::Killed(cone) = domain {
        use crate::cone_geometry::ConeKind;
        match cone.kind() {
            ConeKind::HalfSpace { dim } => window_lo[dim - 1] = window_lo[dim - 1].max(1),
            ConeKind::Orthant { .. } => window_lo.iter_mut().for_each(|v| *v = (*v).max(1)),
            ConeKind::Wedge { .. } => {}
        }
    }
    let period = per.period;
    let reps: Vec<Vec<i64>> = (0..period)
        .map(|k| {
            let v: Vec<i64> = per.base_step.iter().map(|s| s * k as i64).collect();
            lattice.reduce(&v)
        })
        .collect();
    // Pull vectors: from a cell of phase k+1 to its predecessor in phase k.
    let mut pulls: Vec<Vec<Vec<i64>>> = Vec::with_capacity(period);
    for k in 0..period {
        let prev = &reps[(k + period - 1) % period];
        let cur = &reps[k];
        let mut per_atom = Vec::with_capacity(dist.atoms().len());
        for (s, _) in dist.atoms() {
            let v: Vec<i64> = (0..d).map(|i| cur[i] - prev[i] - s[i]).collect();
            per_atom.push(
                lattice
                    .coordinates(&v)
                    .expect("consecutive cosets differ by a step"),
            );
        }
        pulls.push(per_atom);
    }
    let pad: Vec<i64> = (0..d)
        .map(|i| {
            pulls
                .iter()
                .flatten()
                .map(|e| e[i].abs())
                .max()
                .unwrap_or(0)
                + 1
        })
        .collect();
    let vlo: Vec<i64> = (0..d)
        .map(|i| window_lo[i] - x[i] - (lattice.basis()[i][i] - 1))
        .collect();
    let vhi: Vec<i64> = (0..d).map(|i| window_hi[i] - x[i]).collect();
    let (inner_lo, inner_hi) = lattice.coordinate_bounds(&vlo, &vhi);
    let lo: Vec<i64> = (0..d).map(|i| inner_lo[i] - pad[i]).collect();
    let mut len = Vec::with_capacity(d);
    let mut cells: u128 = 1;
    for i in 0..d {
        let l = (inner_hi[i] + pad[i] - lo[i] + 1).max(1) as u128;
        cells = cells.saturating_mul(l);
        len.push(l);
    }
    let n_arrays = 2 + 2 * period as u128 + opts.snapshots.len() as u128;
    let required = cells
        .saturating_mul(n_arrays * scalar_bytes as u128 + period as u128)
        .min(u64::MAX as u128) as u64;
    if required > opts.memory_cap {
        return Err(Error::MemoryCap {
            required,
            cap: opts.memory_cap,
        });
    }
    let len: Vec<usize> = len.into_iter().map(|l| l as usize).collect();
    let mut stride = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        stride[i] = stride[i + 1] * len[i + 1];
    }
    let grid = Grid {
        lo,
        len,
        stride,
        inner_lo,
        inner_hi,
    };
    let total = grid.cells();
    let phases = reps
        .iter()
        .zip(&pulls)
        .map(|(rep, pull)| {
            let mut mask = vec![false; total];
            for (idx, m) in mask.iter_mut().enumerate() {
                let c = grid.coords(idx);
                if (0..d).any(|i| c[i] < grid.inner_lo[i] || c[i] > grid.inner_hi[i]) {
                    continue;
                }
                let v = lattice.point(&c);
                let y: Vec<i64> = (0..d).map(|i| x[i] + rep[i] + v[i]).collect();
                *m = (0..d).all(|i| y[i] >= window_lo[i] && y[i] <= window_hi[i])
                    && domain.contains(&y);
            }
            let pull = pull
                .iter()
                .map(|e| {
                    e.iter()
                        .zip(&grid.stride)
                        .map(|(&ei, &s)| ei as isize * s as isize)
                        .sum()
                })
                .collect();
            Phase {
                rep: rep.clone(),
                mask,
                pull,
            }
        })
        .collect();
    Ok(Layout {
        dim: d,
        start: x.to_vec(),
        lattice,
        grid,
        phases,
        max_step,
        window_lo,
        window_hi,
        spread: opts.spread_sigmas,
    })
}

fn bbox_union(a: &(Vec<i64>, Vec<i64>), b: &(Vec<i64>, Vec<i64>)) -> (Vec<i64>, Vec<i64>) {
    if a.0.iter().zip(&a.1).any(|(l, h)| l > h) {
        return b.clone();
    }
    (
        a.0.iter().zip(&b.0).map(|(x, y)| *x.min(y)).collect(),
        a.1.iter().zip(&b.1).map(|(x, y)| *x.max(y)).collect(),
    )
}

/// Computes one layer on `region`; returns per-slab sums.
#[allow(clippy::too_many_arguments)]
fn sweep<T: Real>(
    layout: &Layout,
    phase: usize,
    region: &(Vec<i64>, Vec<i64>),
    probs: &[T],
    prev: &[T],
    next: &mut [T],
    green: &mut [T],
    late: Option<&mut [T]>,
) -> T {
    let grid = &layout.grid;
    let d = layout.dim;
    let ph = &layout.phases[phase];
    let (rlo, rhi) = region;
    if rlo.iter().zip(rhi).any(|(l, h)| l > h) {
        return T::zero();
    }
    // One slab per value of the first coordinate (the whole array when d = 1).
    let slab_len = if d == 1 { grid.cells() } else { grid.stride[0] };
    let row = |slab_base: usize,
               next: &mut [T],
               green: &mut [T],
               mut late: Option<&mut [T]>,
               prefix: &[i64]|
     -> T {
        let mut start = slab_base;
        for (i, &ci) in prefix.iter().enumerate() {
            start += (ci - grid.lo[i]) as usize * grid.stride[i];
        }
        let last = d - 1;
        let k0 = (rlo[last] - grid.lo[last]) as usize;
        let k1 = (rhi[last] - grid.lo[last]) as usize;
        let mut sum = T::zero();
        for k in k0..=k1 {
            let idx = start + k;
            let local = idx - slab_base;
            let v = if ph.mask[idx] {
                let mut acc = T::zero();
                for (o, p) in ph.pull.iter().zip(probs) {
                    acc = acc + prev[(idx as isize + o) as usize] * *p;
                }
                acc
            } else {
                T::zero()
            };
            next[local] = v;
            if v != T::zero() {
                sum = sum + v;
                green[local] = green[local] + v;
                if let Some(l) = late.as_deref_mut() {
                    l[local] = l[local] + v;
                }
            }
        }
        sum
    };
    if d == 1 {
        return row(0, next, green, late, &[]);
    }
    let c0_lo = (rlo[0] - grid.lo[0]) as usize;
    let c0_hi = (rhi[0] - grid.lo[0]) as usize;
    let per_slab = |(s, ((nx, gr), lt)): (usize, ((&mut [T], &mut [T]), Option<&mut [T]>))| -> T {
        if s < c0_lo || s > c0_hi {
            return T::zero();
        }
        let base = s * slab_len;
        // Odometer over coordinates 1..d-1 (the last one is the inner loop).
        let mut prefix: Vec<i64> = rlo[1..d - 1].to_vec();
        let mut total = T::zero();
        let mut lt = lt;
        loop {
            total = total + row(base, nx, gr, lt.as_deref_mut(), &prefix);
            let mut i = prefix.len();
            loop {
                if i == 0 {
                    return total;
                }
                i -= 1;
                prefix[i] += 1;
                if prefix[i] <= rhi[i + 1] {
                    break;
                }
                prefix[i] = rlo[i + 1];
            }
        }
    };
    // The row closure wants coordinates without the first axis: shift.
    let sums: Vec<T> = match late {
        Some(l) => next
            .par_chunks_mut(slab_len)
            .zip(green.par_chunks_mut(slab_len))
            .zip(l.par_chunks_mut(slab_len).map(Some))
            .enumerate()
            .map(per_slab)
            .collect(),
        None => next
            .par_chunks_mut(slab_len)
            .zip(green.par_chunks_mut(slab_len))
            .enumerate()
            .map(|(s, pair)| per_slab((s, (pair, None))))
            .collect(),
    };
    sums.into_iter().sum()
}

fn run<T: Real>(
    dist: &StepDistribution,
    domain: Domain<'_>,
    x: &[i64],
    horizon: usize,
    opts: &KernelOptions,
) -> Result<KilledKernel<T>> {
    let layout = build_layout(dist, domain, x, horizon, std::mem::size_of::<T>(), opts)?;
    let cells = layout.grid.cells();
    let period = layout.phases.len();
    let probs: Vec<T> = dist.atoms().iter().map(|a| T::from_f64_lossy(a.1)).collect();
    let late_from = opts.late_from.unwrap_or(horizon / 2 + 1);
    let mut prev = vec![T::zero(); cells];
    let mut next = vec![T::zero(); cells];
    let mut green = vec![vec![T::zero(); cells]; period];
    let mut late_green = vec![vec![T::zero(); cells]; period];
    let mut survival = Vec::with_capacity(horizon + 1);
    let mut snapshots = Vec::new();
    let tracked_cells: Vec<Option<(usize, usize)>> =
        opts.track.iter().map(|y| layout.locate(y)).collect();
    let mut tracked: Vec<(Vec<i64>, Vec<T>)> = opts
        .track
        .iter()
        .map(|y| (y.clone(), Vec::with_capacity(horizon + 1)))
        .collect();

    let origin = layout
        .locate(x)
        .expect("start point is the origin of phase 0")
        .1;
    prev[origin] = T::one();
    green[0][origin] = T::one();
    if late_from == 0 {
        late_green[0][origin] = T::one();
    }
    survival.push(T::one());
    let record = |n: usize, layer: &[T], tracked: &mut Vec<(Vec<i64>, Vec<T>)>| {
        let ph = n % period;
        for ((_, series), cell) in tracked.iter_mut().zip(&tracked_cells) {
            series.push(match cell {
                Some((k, i)) if *k == ph => layer[*i],
                _ => T::zero(),
            });
        }
    };
    record(0, &prev, &mut tracked);
    if opts.snapshots.contains(&0) {
        snapshots.push((0, prev.clone()));
    }
    let empty = (vec![0i64; layout.dim], vec![-1i64; layout.dim]);
    // Region last written into each buffer; `prev` holds layer 0.
    let mut written = [layout.reach_box(0), empty];
    for n in 0..horizon {
        let layer = n + 1;
        let phase = layout.phase_of(layer);
        let region = bbox_union(&written[1], &layout.reach_box(layer));
        let late = (layer >= late_from).then(|| late_green[phase].as_mut_slice());
        let total = sweep(
            &layout,
            phase,
            &region,
            &probs,
            &prev,
            &mut next,
            &mut green[phase],
            late,
        );
        survival.push(total);
        record(layer, &next, &mut tracked);
        if opts.snapshots.contains(&layer) {
            snapshots.push((layer, next.clone()));
        }
        std::mem::swap(&mut prev, &mut next);
        written.swap(0, 1);
        written[0] = region;
    }
    Ok(KilledKernel {
        layout,
        horizon,
        late_from,
        final_layer: prev,
        green,
        late_green,
        survival,
        snapshots,
        tracked,
    })
}

impl<T: Real> KilledKernel<T> {
    /// Builds the kernel of `dist` killed on leaving `cone`, started at `x`.
    pub fn build(
        dist: &StepDistribution,
        cone: &Cone,
        x: &[i64],
        horizon: usize,
        opts: &KernelOptions,
    ) -> Result<Self> {
        run(dist, Domain::Killed(cone), x, horizon, opts)
    }

    /// Same recursion without killing.
    pub fn build_free(
        dist: &StepDistribution,
        x: &[i64],
        horizon: usize,
        opts: &KernelOptions,
    ) -> Result<Self> {
        run(dist, Domain::Free, x, horizon, opts)
    }

    pub fn start(&self) -> &[i64] {
        &self.layout.start
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P(τ_x > n)` for `n = 0..=N`.
    pub fn survival(&self) -> &[T] {
        &self.survival
    }

    pub fn final_layer(&self) -> LayerView<'_, T> {
        LayerView {
            layout: &self.layout,
            phase: self.layout.phase_of(self.horizon),
            values: &self.final_layer,
        }
    }

    /// A layer kept through [`KernelOptions::snapshots`].
    pub fn snapshot(&self, n: usize) -> Option<LayerView<'_, T>> {
        self.snapshots
            .iter()
            .find(|(m, _)| *m == n)
            .map(|(m, v)| LayerView {
                layout: &self.layout,
                phase: self.layout.phase_of(*m),
                values: v,
            })
    }

    /// Per-layer series of a tracked point.
    pub fn tracked(&self, y: &[i64]) -> Option<&[T]> {
        self.tracked
            .iter()
            .find(|(p, _)| p == y)
            .map(|(_, s)| s.as_slice())
    }

    /// `Σ_{n=0}^{N} p_n(y)`.
    pub fn green_at(&self, y: &[i64]) -> T {
        self.layout
            .locate(y)
            .map_or(T::zero(), |(k, i)| self.green[k][i])
    }

    /// `Σ_{n=late_from}^{N} p_n(y)`.
    pub fn late_green_at(&self, y: &[i64]) -> T {
        self.layout
            .locate(y)
            .map_or(T::zero(), |(k, i)| self.late_green[k][i])
    }

    pub fn late_from(&self) -> usize {
        self.late_from
    }

    /// Every point with positive truncated Green value.
    pub fn green_points(&self) -> Vec<(Vec<i64>, T)> {
        let mut out = Vec::new();
        for (k, table) in self.green.iter().enumerate() {
            for (i, v) in table.iter().enumerate() {
                if *v > T::zero() {
                    out.push((self.layout.point(k, i), *v));
                }
            }
        }
        out
    }

    /// Truncated Green value at `y` with a tail surrogate of exponent
    /// `p + d/2` fitted on the late window.
    pub fn green_estimate(&self, y: &[i64], p: f64) -> GreenEstimate<T> {
        let value = self.green_at(y);
        let late = self.late_green_at(y).to_f64_lossy();
        let modulus = y.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
        let tail = if late > 0.0 && modulus > 0.0 && self.late_from <= self.horizon {
            fitted_tail(
                late,
                p,
                self.layout.dim,
                modulus,
                self.late_from,
                self.horizon,
            )
        } else {
            0.0
        };
        GreenEstimate {
            value,
            stat_error: T::zero(),
            horizon: self.horizon,
            tail_estimate: T::from_f64_lossy(tail),
            method: Method::ExactDp,
        }
    }
}

/// Tail `Σ_{n>N} C n^{-p-d/2} e^{-|y|²/2n}` with `C` fitted so that the same
/// profile reproduces `late_sum` over `late_from..=N`.
pub fn fitted_tail(late_sum: f64, p: f64, dim: usize, modulus: f64, late_from: usize, horizon: usize) -> f64 {
    let r2 = modulus * modulus;
    let lo = (late_from as f64 - 0.5).max(0.0) / r2;
    let hi = (horizon as f64 + 0.5) / r2;
    let window = profile_integral_between(p, dim, lo, hi);
    let tail = profile_integral_between(p, dim, hi, f64::INFINITY);
    match (window, tail) {
        (Ok(w), Ok(t)) if w > 0.0 => late_sum * t / w,
        _ => 0.0,
    }
}

/// `constant · V(x) u(y) |y|^{-2p-d+2} ∫_{N/|y|²}^∞ z^{-p-d/2} e^{-1/(2z)} dz`.
pub fn llt_tail(
    p: f64,
    dim: usize,
    v_x: f64,
    u_y: f64,
    modulus: f64,
    horizon: usize,
    constant: f64,
) -> Result<f64> {
    if horizon < 1 {
        return Err(Error::OutOfRange("horizon must be >= 1".into()));
    }
    let r2 = modulus * modulus;
    let integral = profile_integral_between(p, dim, horizon as f64 / r2, f64::INFINITY)?;
    Ok(constant * v_x * u_y * modulus.powf(-2.0 * p - dim as f64 + 2.0) * integral)
}

/// Exact killed kernel with default options.
pub fn killed_kernel(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    horizon: usize,
) -> Result<KilledKernel<f64>> {
    KilledKernel::build(dist, cone, x, horizon, &KernelOptions::default())
}

/// `Σ_{n=0}^{N} P(x + S(n) = y, τ_x > n)` with the fitted tail attached.
pub fn green_truncated(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    y: &[i64],
    horizon: usize,
) -> Result<GreenEstimate<f64>> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !cone.contains(y) {
        // Every term vanishes.
        return Ok(GreenEstimate {
            value: 0.0,
            stat_error: 0.0,
            horizon,
            tail_estimate: 0.0,
            method: Method::ExactDp,
        });
    }
    let k = killed_kernel(dist, cone, x, horizon)?;
    Ok(k.green_estimate(y, cone.exponent_p()))
}

/// Unkilled truncated Green function `Σ_{n=0}^{N} P(x + S(n) = y)`.
pub fn green_free_truncated(
    dist: &StepDistribution,
    x: &[i64],
    y: &[i64],
    horizon: usize,
) -> Result<GreenEstimate<f64>> {
    let k: KilledKernel<f64> =
        KilledKernel::build_free(dist, x, horizon, &KernelOptions::default())?;
    Ok(GreenEstimate {
        value: k.green_at(y),
        stat_error: 0.0,
        horizon,
        tail_estimate: 0.0,
        method: Method::ExactDp,
    })
}

/// `P(τ_x > n)` for `n = 0..=N`.
pub fn survival(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    horizon: usize,
) -> Result<Vec<f64>> {
    Ok(killed_kernel(dist, cone, x, horizon)?.survival)
}

/// `E[τ_x; τ_x < T] = Σ_{1 <= n < T} n P(τ_x = n)`.
pub fn expected_tau_truncated(
    dist: &StepDistribution,
    cone: &Cone,
    x: &[i64],
    limit: usize,
) -> Result<f64> {
    if limit <= 1 {
        return Ok(0.0);
    }
    let s = survival(dist, cone, x, limit - 1)?;
    Ok(expected_tau_from_survival(&s, limit))
}

pub fn expected_tau_from_survival(survival: &[f64], limit: usize) -> f64 {
    (1..limit.min(survival.len()))
        .map(|n| n as f64 * (survival[n - 1] - survival[n]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::step_models::Pmf1d;

    fn srw1() -> StepDistribution {
        StepDistribution::simple(1).unwrap()
    }

    fn half_line() -> Cone {
        Cone::half_space(1).unwrap()
    }

    fn rad2() -> StepDistribution {
        StepDistribution::product(&Pmf1d::rademacher(), 2).unwrap()
    }

    #[test]
    fn half_line_three_steps() {
        let opts = KernelOptions {
            snapshots: vec![1, 2],
            ..Default::default()
        };
        let k: KilledKernel<f64> = KilledKernel::build(&srw1(), &half_line(), &[1], 2, &opts).unwrap();
        assert_eq!(k.snapshot(1).unwrap().get(&[2]), 0.5);
        assert_eq!(k.snapshot(2).unwrap().get(&[1]), 0.25);
        assert_eq!(k.snapshot(2).unwrap().get(&[3]), 0.25);
        assert_eq!(k.survival(), &[1.0, 0.5, 0.5]);
    }

    #[test]
    fn horizon_zero_is_delta() {
        let k = killed_kernel(&rad2(), &Cone::half_space(2).unwrap(), &[3, 2], 0).unwrap();
        assert_eq!(k.survival(), &[1.0]);
        let pts: Vec<_> = k.final_layer().iter().collect();
        assert_eq!(pts, vec![(vec![3, 2], 1.0)]);
    }

    #[test]
    fn rademacher_first_step_on_half_plane() {
        let k = killed_kernel(&rad2(), &Cone::half_space(2).unwrap(), &[0, 1], 1).unwrap();
        let mut pts: Vec<_> = k.final_layer().iter().collect();
        pts.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(pts, vec![(vec![-1, 2], 0.25), (vec![1, 2], 0.25)]);
        assert_eq!(k.survival()[1], 0.5);
    }

    #[test]
    fn starting_outside_is_an_error() {
        let err = killed_kernel(&srw1(), &half_line(), &[0], 3).unwrap_err();
        assert_eq!(err, Error::OutsideCone(vec![0]));
    }

    #[test]
    fn memory_cap_fails_fast() {
        let opts = KernelOptions {
            memory_cap: 1000,
            ..Default::default()
        };
        let err = KilledKernel::<f64>::build(&rad2(), &Cone::half_space(2).unwrap(), &[0, 1], 200, &opts)
            .unwrap_err();
        assert!(matches!(err, Error::MemoryCap { required, cap: 1000 } if required > 1000));
    }

    #[test]
    fn green_outside_and_diagonal() {
        let g = green_truncated(&rad2(), &Cone::half_space(2).unwrap(), &[0, 1], &[3, -1], 20).unwrap();
        assert_eq!(g.value, 0.0);
        let g = green_truncated(&rad2(), &Cone::half_space(2).unwrap(), &[0, 1], &[0, 1], 20).unwrap();
        assert!(g.value >= 1.0);
    }

    #[test]
    fn free_green_small_cases() {
        let g = green_free_truncated(&srw1(), &[0], &[0], 2).unwrap();
        assert_eq!(g.value, 1.5);
        let g = green_free_truncated(&rad2(), &[0, 0], &[0, 0], 1).unwrap();
        assert_eq!(g.value, 1.0);
        let g = green_free_truncated(&rad2(), &[0, 0], &[1, 1], 1).unwrap();
        assert_eq!(g.value, 0.25);
    }

    #[test]
    fn survival_ballot_values() {
        let s = survival(&srw1(), &half_line(), &[1], 3).unwrap();
        assert_eq!(s[1], 0.5);
        assert_eq!(s[3], 0.375);
    }

    #[test]
    fn deep_start_never_dies() {
        let s = survival(&rad2(), &Cone::half_space(2).unwrap(), &[0, 30], 25).unwrap();
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let t = expected_tau_truncated(&rad2(), &Cone::half_space(2).unwrap(), &[0, 30], 25).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn expected_tau_small() {
        assert_eq!(expected_tau_truncated(&srw1(), &half_line(), &[1], 2).unwrap(), 0.5);
    }

    #[test]
    fn llt_tail_closed_form() {
        // p = 1, d = 2, N = |y|^2: ∫_1^∞ z^{-2} e^{-1/(2z)} dz = 2(1 - e^{-1/2}).
        let t = llt_tail(1.0, 2, 1.5, 2.0, 10.0, 100, 3.0).unwrap();
        let expected = 3.0 * 1.5 * 2.0 / 100.0 * 2.0 * (1.0 - (-0.5f64).exp());
        assert!((t - expected).abs() < 1e-10);
        let t2 = llt_tail(1.0, 2, 1.5, 2.0, 10.0, 200, 3.0).unwrap();
        assert!(t2 < t);
        let far = llt_tail(1.0, 2, 1.0, 1.0, 1.0, 10_000_000, 1.0).unwrap();
        assert!(far < 1e-6);
    }

    #[test]
    fn wedge_and_orthant_kernels_agree() {
        let w = Cone::wedge(std::f64::consts::FRAC_PI_2).unwrap();
        let o = Cone::orthant(2).unwrap();
        let a = killed_kernel(&rad2(), &w, &[2, 1], 40).unwrap();
        let b = killed_kernel(&rad2(), &o, &[2, 1], 40).unwrap();
        for (sa, sb) in a.survival().iter().zip(b.survival()) {
            assert!((sa - sb).abs() < 1e-15);
        }
    }

    #[test]
    fn simple_walk_checkerboard_storage() {
        // Simple walk in 2D lives on a non-diagonal (checkerboard) lattice.
        let d = StepDistribution::simple(2).unwrap();
        let k: KilledKernel<f64> = KilledKernel::build_free(&d, &[0, 0], 6, &KernelOptions::default()).unwrap();
        let total = k.final_layer().total();
        assert!((total - 1.0).abs() < 1e-14);
        // P(S_2 = 0) = 4 * (1/4)^2 = 1/4.
        let k2: KilledKernel<f64> = KilledKernel::build_free(&d, &[0, 0], 2, &KernelOptions::default()).unwrap();
        assert!((k2.final_layer().get(&[0, 0]) - 0.25).abs() < 1e-15);
        assert!((k2.final_layer().get(&[1, 1]) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn single_precision_kernel_tracks_double() {
        let c = Cone::half_space(2).unwrap();
        let a: KilledKernel<f64> = KilledKernel::build(&rad2(), &c, &[0, 1], 60, &KernelOptions::default()).unwrap();
        let b: KilledKernel<f32> = KilledKernel::build(&rad2(), &c, &[0, 1], 60, &KernelOptions::default()).unwrap();
        for (x, y) in a.survival().iter().zip(b.survival()) {
            assert!((x - *y as f64).abs() < 1e-5);
        }
    }
}
