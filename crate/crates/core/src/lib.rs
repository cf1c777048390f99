//! Green functions, survival probabilities and harmonic functions of lattice
//! random walks killed on leaving a cone, together with a harness that checks
//! their large-scale behaviour numerically.
//!
//! The exact kernels, quadrature and renewal tables are generic over
//! [`Real`] (`f32` or `f64`); Monte Carlo estimators work in `f64`.

pub mod asymptotics;
pub mod cone_geometry;
pub mod error;
pub mod exact_dp;
pub mod lattice;
pub mod monte_carlo;
pub mod one_dim;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod step_models;

pub use cone_geometry::{Cone, ConeKind};
pub use error::{Error, Result};
pub use exact_dp::{GreenEstimate, KernelOptions, KilledKernel, Method};
pub use lattice::Lattice;
pub use monte_carlo::{McEstimate, TiltSpec};
pub use one_dim::LadderLaw;
pub use scalar::Real;
pub use step_models::{AssumptionReport, Pmf1d, StepDistribution};

pub type KilledKernel64 = KilledKernel<f64>;
pub type KilledKernel32 = KilledKernel<f32>;
pub type GreenEstimate64 = GreenEstimate<f64>;
pub type GreenEstimate32 = GreenEstimate<f32>;
pub type LadderLaw64 = LadderLaw<f64>;
pub type LadderLaw32 = LadderLaw<f32>;
