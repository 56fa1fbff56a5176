//! Named initial conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{inner_product, ComplexField};
use crate::grid::SpatialGrid;
use crate::potential::periodic_displacement;
use crate::spectral::Spectral;
use crate::C64;

/// Normalized `e^{i phase} e^{i p.(x-c)} exp(-|x-c|^2 / 2 width^2)` with the
/// displacement taken to the nearest periodic image.
pub fn gaussian(
    grid: &SpatialGrid,
    center: &[f64],
    width: f64,
    phase: f64,
    momentum: &[f64],
) -> Result<ComplexField> {
    let d = grid.dim();
    if center.len() != d || momentum.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "center/momentum need {d} coordinates"
        )));
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "width {width} must be positive"
        )));
    }
    ComplexField::from_fn(*grid, |x| {
        let mut r2 = 0.0;
        let mut px = 0.0;
        for a in 0..d {
            let y = periodic_displacement(x[a], center[a], grid.extent(a));
            r2 += y * y;
            px += momentum[a] * y;
        }
        C64::from_polar((-r2 / (2.0 * width * width)).exp(), phase + px)
    })?
    .normalized()
}

#[derive(Debug, Clone, Default)]
pub struct GaussianOffsets {
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
    pub phases: Vec<f64>,
    pub momenta: Option<Vec<Vec<f64>>>,
}

/// One Gaussian per oscillator.
pub fn gaussian_offsets(grid: &SpatialGrid, spec: &GaussianOffsets) -> Result<Vec<ComplexField>> {
    let n = spec.centers.len();
    if spec.widths.len() != n || spec.phases.len() != n {
        return Err(Error::config(
            "initial",
            format!(
                "{} centers, {} widths, {} phases",
                n,
                spec.widths.len(),
                spec.phases.len()
            ),
        ));
    }
    let zero = vec![0.0; grid.dim()];
    (0..n)
        .map(|i| {
            let p = spec
                .momenta
                .as_ref()
                .map(|m| m[i].as_slice())
                .unwrap_or(&zero);
            gaussian(grid, &spec.centers[i], spec.widths[i], spec.phases[i], p)
        })
        .collect()
}

/// `z0 base + sqrt(1 - |z0|^2) chi` with `chi` the part of `aux` orthogonal
/// to `base`, normalized; the result has unit norm and `<base, .> = z0`.
pub fn with_overlap(base: &ComplexField, z0: C64, aux: &ComplexField) -> Result<ComplexField> {
    if z0.norm() > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "|z0| = {} exceeds 1",
            z0.norm()
        )));
    }
    let proj = inner_product(base, aux)?;
    let chi = aux.combine(C64::new(1.0, 0.0), base, -proj)?.normalized()?;
    base.combine(z0, &chi, C64::new((1.0 - z0.norm_sqr()).sqrt(), 0.0))
}

/// `psi_i = e^{-i theta_i} / sqrt(|box|)`.
pub fn homogeneous(grid: &SpatialGrid, thetas: &[f64]) -> Result<Vec<ComplexField>> {
    let amp = 1.0 / grid.volume().sqrt();
    thetas
        .iter()
        .map(|th| ComplexField::from_fn(*grid, |_| C64::from_polar(amp, -th)))
        .collect()
}

/// Smooth random periodic fields: complex Gaussian Fourier coefficients
/// damped by `exp(-|k|^2 smoothness^2 / 2)`, then normalized. Bitwise
/// reproducible for a given seed.
pub fn random(
    grid: &SpatialGrid,
    count: usize,
    seed: u64,
    smoothness: f64,
) -> Result<Vec<ComplexField>> {
    if !(smoothness.is_finite() && smoothness > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothness {smoothness} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = Spectral::new(grid);
    (0..count)
        .map(|_| {
            let mut coef: Vec<C64> = (0..grid.len())
                .map(|i| {
                    let (k, _) = spec.mode(i);
                    let k2 = k[0] * k[0] + k[1] * k[1];
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re, im) * (-0.5 * k2 * smoothness * smoothness).exp()
                })
                .collect();
            spec.inverse(&mut coef);
            ComplexField::new(*grid, coef)?.normalized()
        })
        .collect()
}
