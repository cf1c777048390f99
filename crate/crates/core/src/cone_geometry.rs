//! Analytic cones: half-spaces, planar wedges and orthants.
//!
//! Each cone carries its principal Dirichlet eigenvalue `λ₁` on the sphere,
//! the exponent `p`, and the positive harmonic function `u(x) = |x|^p m₁(x/|x|)`
//! vanishing on the boundary. `m₁` is scaled to have supremum 1 on the cap.
//! Points on the boundary are outside.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative tolerance for deciding that a point lies on a wedge wall.
const WALL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeKind {
    /// `{x : x_d > 0}`.
    HalfSpace { dim: usize },
    /// `{(r cos θ, r sin θ) : r > 0, 0 < θ < opening}` in the plane.
    Wedge { opening: f64 },
    /// `{x : x_i > 0 for all i}`.
    Orthant { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    kind: ConeKind,
    lambda1: f64,
    p: f64,
}

/// `p = sqrt(λ₁ + (d/2 - 1)²) - (d/2 - 1)`.
pub fn exponent_from_eigenvalue(lambda1: f64, dim: usize) -> f64 {
    let shift = dim as f64 / 2.0 - 1.0;
    (lambda1 + shift * shift).sqrt() - shift
}

impl Cone {
    fn with_lambda(kind: ConeKind, lambda1: f64) -> Self {
        let dim = match kind {
            ConeKind::HalfSpace { dim } | ConeKind::Orthant { dim } => dim,
            ConeKind::Wedge { .. } => 2,
        };
        Cone {
            kind,
            lambda1,
            p: exponent_from_eigenvalue(lambda1, dim),
        }
    }

    pub fn half_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCone("dimension must be >= 1".into()));
        }
        // The hemisphere: u(x) = x_d is the degree-1 harmonic, λ₁ = d - 1.
        Ok(Self::with_lambda(
            ConeKind::HalfSpace { dim },
            dim as f64 - 1.0,
        ))
    }

    pub fn wedge(opening: f64) -> Result<Self> {
        if !(opening > 0.0 && opening < 2.0 * PI) {
            return Err(Error::InvalidCone(format!(
                "wedge opening {opening} outside (0, 2π)"
            )));
        }
        Ok(Self::with_lambda(
            ConeKind::Wedge { opening },
            (PI / opening).powi(2),
        ))
    }

    pub fn orthant(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCone("dimension must be >= 1".into()));
        }
        // u = ∏ x_i is harmonic of degree d, so λ₁ = d (d + d - 2).
        let d = dim as f64;
        Ok(Self::with_lambda(
            ConeKind::Orthant { dim },
            d * (2.0 * d - 2.0),
        ))
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ConeKind::HalfSpace { dim } | ConeKind::Orthant { dim } => dim,
            ConeKind::Wedge { .. } => 2,
        }
    }

    pub fn exponent_p(&self) -> f64 {
        self.p
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// Convex and C²: only half-spaces and wedges with opening below π.
    /// Orthants in d >= 2 have corners.
    pub fn is_smooth_convex(&self) -> bool {
        match self.kind {
            ConeKind::HalfSpace { .. } => true,
            ConeKind::Wedge { opening } => opening <= PI,
            ConeKind::Orthant { dim } => dim == 1,
        }
    }

    fn check_dim(&self, len: usize) {
        assert_eq!(len, self.dim(), "point dimension does not match cone");
    }

    /// Strict membership of a lattice point.
    pub fn contains(&self, x: &[i64]) -> bool {
        self.check_dim(x.len());
        match self.kind {
            ConeKind::HalfSpace { dim } => x[dim - 1] > 0,
            ConeKind::Orthant { .. } => x.iter().all(|&c| c > 0),
            ConeKind::Wedge { opening } => {
                wedge_angle(x[0] as f64, x[1] as f64, opening).is_some()
            }
        }
    }

    /// Strict membership of a real point.
    pub fn contains_real<T: Real>(&self, x: &[T]) -> bool {
        self.check_dim(x.len());
        match self.kind {
            ConeKind::HalfSpace { dim } => x[dim - 1] > T::zero(),
            ConeKind::Orthant { .. } => x.iter().all(|&c| c > T::zero()),
            ConeKind::Wedge { opening } => {
                wedge_angle(x[0].to_f64_lossy(), x[1].to_f64_lossy(), opening).is_some()
            }
        }
    }

    /// Euclidean distance from `x` to the boundary of the cone.
    pub fn dist_boundary<T: Real>(&self, x: &[T]) -> T {
        self.check_dim(x.len());
        match self.kind {
            ConeKind::HalfSpace { dim } => x[dim - 1].abs(),
            ConeKind::Orthant { .. } => {
                if x.iter().all(|&c| c >= T::zero()) {
                    x.iter().fold(T::infinity(), |m, &c| m.min(c))
                } else {
                    // Outside: distance to the closed orthant's surface.
                    let neg: T = x
                        .iter()
                        .filter(|c| **c < T::zero())
                        .map(|&c| c * c)
                        .sum();
                    neg.sqrt()
                }
            }
            ConeKind::Wedge { opening } => {
                let (a, b) = (x[0].to_f64_lossy(), x[1].to_f64_lossy());
                let ray = |dx: f64, dy: f64| {
                    let along = a * dx + b * dy;
                    if along >= 0.0 {
                        (a * dy - b * dx).abs()
                    } else {
                        a.hypot(b)
                    }
                };
                T::from_f64_lossy(ray(1.0, 0.0).min(ray(opening.cos(), opening.sin())))
            }
        }
    }

    /// Harmonic function `u`, zero outside the cone and on its boundary.
    pub fn harmonic_u<T: Real>(&self, x: &[T]) -> T {
        self.check_dim(x.len());
        match self.kind {
            ConeKind::HalfSpace { dim } => x[dim - 1].max(T::zero()),
            ConeKind::Orthant { dim } => {
                if x.iter().any(|&c| c <= T::zero()) {
                    return T::zero();
                }
                // sup of ∏ x_i on the unit sphere is d^{-d/2}.
                let scale = T::from_f64_lossy((dim as f64).powf(dim as f64 / 2.0));
                x.iter().fold(scale, |acc, &c| acc * c)
            }
            ConeKind::Wedge { opening } => {
                let (a, b) = (x[0].to_f64_lossy(), x[1].to_f64_lossy());
                match wedge_angle(a, b, opening) {
                    Some(theta) => {
                        let r = a.hypot(b);
                        T::from_f64_lossy(r.powf(self.p) * (PI * theta / opening).sin())
                    }
                    None => T::zero(),
                }
            }
        }
    }

    /// `u` at a lattice point.
    pub fn harmonic_u_lattice(&self, x: &[i64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        self.harmonic_u(&xf)
    }
}

/// Polar angle of `(a, b)` if it lies strictly inside the wedge of the given
/// opening, measured from the positive first axis.
fn wedge_angle(a: f64, b: f64, opening: f64) -> Option<f64> {
    let r = a.hypot(b);
    if r == 0.0 {
        return None;
    }
    let mut theta = b.atan2(a);
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    // Wall 1 is θ = 0; test it through the sign of b so that lattice points
    // on the axis are excluded exactly.
    if b == 0.0 && a > 0.0 {
        return None;
    }
    // Wall 2: signed distance to the ray at angle `opening`.
    let cross = a * opening.sin() - b * opening.cos();
    let on_wall2 = cross.abs() <= WALL_TOL * r && (a * opening.cos() + b * opening.sin()) > 0.0;
    if on_wall2 || theta >= opening {
        return None;
    }
    Some(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn half_space_exponent_is_one() {
        for d in 1..=6 {
            let c = Cone::half_space(d).unwrap();
            assert!((c.exponent_p() - 1.0).abs() < 1e-14);
        }
        let c = Cone::half_space(2).unwrap();
        assert_eq!(c.harmonic_u(&[0.0, 5.0]), 5.0);
        assert_eq!(c.harmonic_u(&[3.0, 0.0]), 0.0);
    }

    #[test]
    fn wedge_pi_matches_half_plane() {
        let w = Cone::wedge(PI).unwrap();
        assert!((w.exponent_p() - 1.0).abs() < 1e-14);
        for x in [[3i64, 1], [-4, 2], [0, 7]] {
            assert!(w.contains(&x));
            let xf = [x[0] as f64, x[1] as f64];
            assert!((w.harmonic_u(&xf) - x[1] as f64).abs() < 1e-12);
        }
        assert!(!w.contains(&[-3, 0]));
    }

    #[test]
    fn quarter_plane() {
        let w = Cone::wedge(FRAC_PI_2).unwrap();
        assert!((w.lambda1() - 4.0).abs() < 1e-12);
        assert!((w.exponent_p() - 2.0).abs() < 1e-12);
        assert!((w.harmonic_u::<f64>(&[1.0, 1.0]) - 2.0).abs() < 1e-12);
        assert!((w.harmonic_u::<f64>(&[3.0, 2.0]) - 12.0).abs() < 1e-10);
        let o = Cone::orthant(2).unwrap();
        assert!((o.exponent_p() - 2.0).abs() < 1e-12);
        assert!((o.harmonic_u::<f64>(&[3.0, 2.0]) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn wedge_exponent_formula() {
        for beta in [0.3, 1.0, 2.0, 3.0, 4.5, 6.0] {
            let w = Cone::wedge(beta).unwrap();
            assert!((w.exponent_p() - PI / beta).abs() < 1e-12);
        }
        assert!(Cone::wedge(0.0).is_err());
        assert!(Cone::wedge(2.0 * PI).is_err());
    }

    #[test]
    fn membership() {
        let h = Cone::half_space(2).unwrap();
        assert!(!h.contains(&[5, 0]));
        assert!(h.contains(&[-3, 1]));
        let q = Cone::wedge(FRAC_PI_2).unwrap();
        assert!(q.contains(&[1, 1]));
        assert!(!q.contains(&[1, -1]));
        assert!(!q.contains(&[0, 4]));
        assert!(!q.contains(&[4, 0]));
        let reflex = Cone::wedge(1.5 * PI).unwrap();
        assert!(reflex.contains(&[-1, -1]));
        assert!(!reflex.contains(&[1, -1]));
        assert!(!reflex.contains(&[0, -2]));
    }

    #[test]
    fn boundary_distance() {
        let h = Cone::half_space(2).unwrap();
        assert_eq!(h.dist_boundary(&[7.0, 3.0]), 3.0);
        let q = Cone::wedge(FRAC_PI_2).unwrap();
        assert!((q.dist_boundary::<f64>(&[2.0, 1.0]) - 1.0).abs() < 1e-12);
        let o = Cone::orthant(3).unwrap();
        assert_eq!(o.dist_boundary(&[4.0, 2.0, 5.0]), 2.0);
    }

    #[test]
    fn u_vanishes_on_boundary() {
        for cone in [
            Cone::half_space(2).unwrap(),
            Cone::wedge(1.1).unwrap(),
            Cone::wedge(FRAC_PI_2).unwrap(),
            Cone::orthant(2).unwrap(),
        ] {
            let ConeKind::Wedge { opening } = cone.kind() else {
                assert_eq!(cone.harmonic_u(&[4.0, 0.0]), 0.0);
                continue;
            };
            for r in [1.0, 10.0, 100.0] {
                let on_wall = [r * opening.cos(), r * opening.sin()];
                assert!(cone.harmonic_u(&on_wall) <= 1e-12 * r.powf(cone.exponent_p()));
                assert_eq!(cone.harmonic_u(&[r, 0.0]), 0.0);
            }
        }
    }

    #[test]
    fn u_is_discrete_harmonic_for_rademacher_on_half_plane() {
        let h = Cone::half_space(2).unwrap();
        let steps = [[1, 1], [1, -1], [-1, 1], [-1, -1]];
        for x in [[0i64, 1], [5, 2], [-3, 9]] {
            let avg: f64 = steps
                .iter()
                .map(|s| h.harmonic_u_lattice(&[x[0] + s[0], x[1] + s[1]]) * 0.25)
                .sum();
            assert_eq!(avg, h.harmonic_u_lattice(&x));
        }
    }

    #[test]
    fn f32_points() {
        let q = Cone::wedge(FRAC_PI_2).unwrap();
        let v: f32 = q.harmonic_u(&[1.0f32, 1.0]);
        assert!((v - 2.0).abs() < 1e-5);
        assert!(q.contains_real(&[0.5f32, 0.5]));
    }
}
