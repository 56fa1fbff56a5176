//! Complex wave functions on a [`SpatialGrid`] and their L², H¹ geometry.
//!
//! The discrete inner product is `<f, g> = sum conj(f) g h^d`, conjugate
//! linear in the first slot. With this convention the phase-space integral
//! of the Wigner transform `w[f, g]` equals `<f, g>`.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::spectral::Spectral;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: SpatialGrid,
    data: Vec<C64>,
}

impl ComplexField {
    pub fn new(grid: SpatialGrid, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} nodes",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("complex field"));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            data: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn<F: Fn([f64; 2]) -> C64>(grid: SpatialGrid, f: F) -> Result<Self> {
        let data = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self::new(grid, data)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Copy rescaled to unit L² norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = l2_norm(self);
        if n == 0.0 {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero field".into(),
            ));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        check_same_grid(self, other)?;
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: C64, other: &ComplexField, b: C64) -> Result<Self> {
        check_same_grid(self, other)?;
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

fn check_same_grid(f: &ComplexField, g: &ComplexField) -> Result<()> {
    if f.grid != g.grid {
        return Err(Error::DimensionMismatch(format!(
            "fields live on different grids ({:?} vs {:?})",
            f.grid, g.grid
        )));
    }
    Ok(())
}

/// Raw `sum conj(f) g * dv` over two equally long slices.
pub fn dot(f: &[C64], g: &[C64], dv: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (a, b) in f.iter().zip(g) {
        acc += a.conj() * b;
    }
    acc * dv
}

pub fn norm_sqr(f: &[C64], dv: f64) -> f64 {
    f.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv
}

pub fn inner_product(f: &ComplexField, g: &ComplexField) -> Result<C64> {
    check_same_grid(f, g)?;
    Ok(dot(&f.data, &g.data, f.grid.cell_volume()))
}

pub fn l2_norm(f: &ComplexField) -> f64 {
    norm_sqr(&f.data, f.grid.cell_volume()).sqrt()
}

/// L² norm evaluated from Fourier coefficients (Parseval).
pub fn l2_norm_spectral(f: &ComplexField) -> f64 {
    let spec = Spectral::new(&f.grid);
    let mut c = f.data.clone();
    spec.forward(&mut c);
    let sum: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    (sum * f.grid.cell_volume() / f.grid.len() as f64).sqrt()
}

/// Gradient of the trigonometric interpolant, one field per axis.
pub fn spectral_gradient(f: &ComplexField) -> Vec<ComplexField> {
    Spectral::new(&f.grid)
        .gradient(&f.data)
        .into_iter()
        .map(|d| ComplexField {
            grid: f.grid,
            data: d,
        })
        .collect()
}

/// `sqrt(||f||^2 + ||grad f||^2)` with a spectral gradient.
pub fn h1_norm(f: &ComplexField) -> f64 {
    h1_norm_with(&Spectral::new(&f.grid), &f.data)
}

pub(crate) fn h1_norm_with(spec: &Spectral, f: &[C64]) -> f64 {
    let dv = spec.grid().cell_volume();
    let grad = spec.gradient(f);
    let g2: f64 = grad.iter().map(|d| norm_sqr(d, dv)).sum();
    (norm_sqr(f, dv) + g2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gaussian(grid: SpatialGrid, c: f64, s: f64) -> ComplexField {
        ComplexField::from_fn(grid, |x| {
            C64::new((-(x[0] - c).powi(2) / (2.0 * s * s)).exp(), 0.0)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    #[test]
    fn constant_field_has_unit_product() {
        let g = SpatialGrid::line(64, 5.0).unwrap();
        let f = ComplexField::from_fn(g, |_| C64::new(1.0 / 5f64.sqrt(), 0.0)).unwrap();
        let ip = inner_product(&f, &f).unwrap();
        assert!((ip - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn distinct_fourier_modes_are_orthogonal() {
        let l = 7.0;
        let g = SpatialGrid::line(64, l).unwrap();
        let f = ComplexField::from_fn(g, |x| C64::from_polar(1.0 / l.sqrt(), 2.0 * PI * x[0] / l))
            .unwrap();
        let h = ComplexField::from_fn(g, |x| C64::from_polar(1.0 / l.sqrt(), 4.0 * PI * x[0] / l))
            .unwrap();
        assert!(inner_product(&f, &h).unwrap().norm() < 1e-14);
    }

    #[test]
    fn conjugate_linear_in_first_slot() {
        let g = SpatialGrid::line(64, 10.0).unwrap();
        let f = gaussian(g, 4.0, 1.0);
        let h = gaussian(g, 5.0, 1.0);
        let i = C64::new(0.0, 1.0);
        let a = inner_product(&f.scaled(i), &h).unwrap();
        let b = inner_product(&f, &h).unwrap();
        assert!((a - (-i) * b).norm() < 1e-14);
    }

    #[test]
    fn gaussian_overlap_matches_refined_quadrature() {
        // oracle: same functions at 4x resolution, and the closed form
        // exp(-d^2 / 4) for unit-width normalized Gaussians a distance d apart
        let g = SpatialGrid::line(128, 20.0).unwrap();
        let fine = g.refined(4).unwrap();
        let coarse = inner_product(&gaussian(g, 9.0, 1.0), &gaussian(g, 10.5, 1.0)).unwrap();
        let refined = inner_product(&gaussian(fine, 9.0, 1.0), &gaussian(fine, 10.5, 1.0)).unwrap();
        assert!((coarse - refined).norm() < 1e-12);
        assert!((coarse.re - (-1.5f64 * 1.5 / 4.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_is_unit_norm() {
        let g = SpatialGrid::line(256, 30.0).unwrap();
        assert!((l2_norm(&gaussian(g, 15.0, 1.3)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn plane_wave_h1_norm() {
        let l = 2.0 * PI;
        let g = SpatialGrid::line(32, l).unwrap();
        for m in [0.0, 1.0, 3.0, -5.0] {
            let f =
                ComplexField::from_fn(g, |x| C64::from_polar(1.0 / l.sqrt(), m * x[0])).unwrap();
            let h1 = h1_norm(&f);
            assert!((h1 * h1 - (1.0 + m * m)).abs() < 1e-12, "mode {m}");
        }
    }

    #[test]
    fn h1_norm_converges_under_refinement() {
        // smooth periodic field; oracle is the 4x refined evaluation
        let f = |g: SpatialGrid| {
            ComplexField::from_fn(g, |x| {
                let t = 2.0 * PI * x[0] / 3.0;
                C64::new((t.sin()).exp(), (2.0 * t).cos() * 0.3)
            })
            .unwrap()
        };
        let g = SpatialGrid::line(64, 3.0).unwrap();
        let coarse = h1_norm(&f(g));
        let fine = h1_norm(&f(g.refined(4).unwrap()));
        assert!((coarse - fine).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_constant_and_mode() {
        let l = 4.0;
        let g = SpatialGrid::line(32, l).unwrap();
        let c = ComplexField::from_fn(g, |_| C64::new(0.7, -0.2)).unwrap();
        assert!(spectral_gradient(&c)[0]
            .values()
            .iter()
            .all(|v| v.norm() < 1e-15));
        let k = 2.0 * PI / l;
        let m = ComplexField::from_fn(g, |x| C64::from_polar(1.0, k * x[0])).unwrap();
        let d = &spectral_gradient(&m)[0];
        for (a, b) in d.values().iter().zip(m.values()) {
            assert!((a - C64::new(0.0, k) * b).norm() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_gaussian_matches_analytic() {
        let g = SpatialGrid::line(256, 30.0).unwrap();
        let f = ComplexField::from_fn(g, |x| C64::new((-(x[0] - 15.0).powi(2) / 2.0).exp(), 0.0))
            .unwrap();
        let d = &spectral_gradient(&f)[0];
        for i in 0..g.len() {
            let x = g.node(i)[0] - 15.0;
            let exact = -x * (-x * x / 2.0).exp();
            assert!((d.values()[i].re - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_mismatched_and_non_finite() {
        let g = SpatialGrid::line(16, 1.0).unwrap();
        let h = SpatialGrid::line(32, 1.0).unwrap();
        assert!(ComplexField::new(g, vec![C64::new(0.0, 0.0); 8]).is_err());
        let mut v = vec![C64::new(0.0, 0.0); 16];
        v[3].re = f64::NAN;
        assert!(matches!(ComplexField::new(g, v), Err(Error::NonFinite(_))));
        let a = ComplexField::zeros(g);
        let b = ComplexField::zeros(h);
        assert!(matches!(
            inner_product(&a, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn arb_field() -> impl Strategy<Value = ComplexField> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16).prop_map(|v| {
            let g = SpatialGrid::line(16, 3.0).unwrap();
            ComplexField::new(g, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn inner_product_is_hermitian(f in arb_field(), g in arb_field()) {
            let fg = inner_product(&f, &g).unwrap();
            let gf = inner_product(&g, &f).unwrap();
            prop_assert!((fg - gf.conj()).norm() < 1e-14);
            let ff = inner_product(&f, &f).unwrap();
            prop_assert!(ff.re >= 0.0 && ff.im == 0.0);
        }

        #[test]
        fn parseval_holds(f in arb_field()) {
            prop_assert!((l2_norm(&f) - l2_norm_spectral(&f)).abs() < 1e-12);
        }
    }
}
