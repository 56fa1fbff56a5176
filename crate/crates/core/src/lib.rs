//! Numerical simulation of quantum synchronization in the Schrödinger-Lohe
//! model and its two derived formulations.
//!
//! The crate integrates N coupled Schrödinger equations with the Lohe
//! coupling on a periodic box, maps the wave functions to phase space via the
//! Wigner transform, integrates the resulting Wigner-Lohe kinetic system
//! directly, and post-processes two-oscillator runs into quantum
//! hydrodynamic fields. The formulations are cross-checked against each
//! other, against the closed-form correlation dynamics, and against the
//! space-homogeneous Kuramoto reduction.
//!
//! Module map:
//!
//! - [`grid`], [`field`], [`potential`], [`state`], [`spectral`],
//!   [`snapshot`]: shared discretization primitives.
//! - [`sl`]: Strang-split integrator for the Schrödinger-Lohe system.
//! - [`corr`]: correlation matrices, the Riccati closure and decay checks.
//! - [`kuramoto`]: the phase-oscillator reduction.
//! - [`wigner`]: Wigner transforms, the operator Θ\[V\] and the Wigner-Lohe
//!   integrator.
//! - [`hydro`]: hydrodynamic fields and residual verification.
//! - [`fit`]: exponential rate fitting.
//! - [`harness`]: scenarios, runs, manifests.

pub mod corr;
pub mod error;
pub mod field;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod hydro;
pub mod kuramoto;
pub mod potential;
pub mod presets;
pub mod sl;
pub mod snapshot;
pub mod spectral;
pub mod state;
pub mod wigner;

pub use num_complex::Complex64 as C64;

pub use corr::{CorrelationMatrix, SyncReport, SyncStatus};
pub use error::{Error, Result};
pub use field::{h1_norm, inner_product, l2_norm, spectral_gradient, ComplexField};
pub use fit::{fit_rate, RateFit};
pub use grid::{PhaseGrid, SpatialGrid};
pub use potential::Potential;
pub use sl::{EvolveOptions, SLTrajectory};
pub use state::EnsembleState;
pub use wigner::{WignerField, WignerLoheState};
