//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::from_f64_lossy(0.5);
    let c = (a + b) * half;
    let h = (b - a) * half;
    let fc = f(c);
    let mut k = fc * T::from_f64_lossy(WGK[7]);
    let mut g = fc * T::from_f64_lossy(WG[3]);
    for i in 0..7 {
        let dx = h * T::from_f64_lossy(XGK[i]);
        let s = f(c - dx) + f(c + dx);
        k = k + s * T::from_f64_lossy(WGK[i]);
        if i % 2 == 1 {
            g = g + s * T::from_f64_lossy(WG[i / 2]);
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]` by bisecting the worst interval until the
/// summed error estimate is below `abs_tol`.
pub fn integrate<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    abs_tol: T,
    max_intervals: usize,
) -> Result<Quadrature<T>> {
    let (v, e) = kronrod(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut evaluations = 15;
    loop {
        let total_err: T = intervals.iter().map(|i| i.3).sum();
        if total_err <= abs_tol {
            break;
        }
        if intervals.len() >= max_intervals {
            return Err(Error::OutOfRange(format!(
                "quadrature did not converge: error {total_err} after {max_intervals} intervals"
            )));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = (lo + hi) * T::from_f64_lossy(0.5);
        if mid <= lo || mid >= hi {
            // Interval collapsed at working precision.
            intervals.push((lo, hi, kronrod(&f, lo, hi).0, T::zero()));
            continue;
        }
        for (x, y) in [(lo, mid), (mid, hi)] {
            let (v, e) = kronrod(&f, x, y);
            intervals.push((x, y, v, e));
        }
        evaluations += 30;
    }
    // Sum small contributions first.
    let mut parts: Vec<(T, T)> = intervals.iter().map(|i| (i.2, i.3)).collect();
    parts.sort_by(|x, y| x.0.abs().partial_cmp(&y.0.abs()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Quadrature {
        value: parts.iter().map(|p| p.0).sum(),
        error: parts.iter().map(|p| p.1).sum(),
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x: f64| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, 1e-13, 100).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((q.value - exact).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity() {
        let q = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 2000).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn single_precision() {
        let q = integrate(|x: f32| x.exp(), 0.0, 1.0, 1e-5, 100).unwrap();
        assert!((q.value - (1f32.exp() - 1.0)).abs() < 1e-5);
    }
}
