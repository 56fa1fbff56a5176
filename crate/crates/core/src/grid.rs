//! Periodic uniform grids for position space and phase space.
//!
//! A [`SpatialGrid`] covers the box `[0, L_1) x ... x [0, L_d)` with `n_a`
//! nodes per axis, `d` in `{1, 2}`. Node counts are powers of two, so the
//! spacing `h = L / n` is exact in binary floating point and `h * n == L`.
//!
//! A [`PhaseGrid`] pairs a spatial grid with a momentum lattice of `m_a`
//! nodes per axis, `m_a <= n_a`. The momentum spacing is `2 pi / (m_a h_a)`,
//! the Fourier dual of the lattice `y = j h` (`-m/2 <= j < m/2`) used in the
//! Wigner kernel, so `p` runs over `[-pi/h, pi/h)` when `m = n`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    dim: usize,
    points: [usize; 2],
    extent: [f64; 2],
}

fn check_axis(points: usize, extent: f64) -> Result<()> {
    if points < MIN_POINTS || !points.is_power_of_two() {
        return Err(Error::InvalidGrid(format!(
            "{points} points per axis; need a power of two >= {MIN_POINTS}"
        )));
    }
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "extent {extent} must be positive"
        )));
    }
    Ok(())
}

impl SpatialGrid {
    pub fn new(points: &[usize], extent: &[f64]) -> Result<Self> {
        let dim = points.len();
        if !(1..=2).contains(&dim) || extent.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} with {} extents; only d = 1, 2 supported",
                extent.len()
            )));
        }
        let mut p = [1usize; 2];
        let mut e = [1.0f64; 2];
        for a in 0..dim {
            check_axis(points[a], extent[a])?;
            p[a] = points[a];
            e[a] = extent[a];
        }
        Ok(Self {
            dim,
            points: p,
            extent: e,
        })
    }

    pub fn line(points: usize, extent: f64) -> Result<Self> {
        Self::new(&[points], &[extent])
    }

    pub fn square(points: usize, extent: f64) -> Result<Self> {
        Self::new(&[points, points], &[extent, extent])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    /// Axis lengths, `dim` entries.
    pub fn shape(&self) -> Vec<usize> {
        self.points[..self.dim].to_vec()
    }

    pub fn extents(&self) -> Vec<f64> {
        self.extent[..self.dim].to_vec()
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measure of one cell, `h_1 * ... * h_d`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    /// Multi-index of a flat (row-major) node index.
    pub fn index(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.points[1], flat % self.points[1]]
        }
    }

    pub fn flat(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.points[1] + idx[1]
        }
    }

    /// Coordinates of a node; unused axes are zero.
    pub fn node(&self, flat: usize) -> [f64; 2] {
        let idx = self.index(flat);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Angular wavenumbers along `axis` in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        fft_frequencies(self.points[axis], self.extent[axis])
    }

    /// Same box with `factor` times as many nodes per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let points: Vec<usize> = self.shape().iter().map(|n| n * factor).collect();
        Self::new(&points, &self.extents())
    }

    pub fn same_as(&self, other: &SpatialGrid) -> bool {
        self == other
    }
}

/// `2 pi k / L` for `k = 0, 1, .., n/2 - 1, -n/2, .., -1`.
pub fn fft_frequencies(n: usize, extent: f64) -> Vec<f64> {
    let dk = 2.0 * PI / extent;
    (0..n)
        .map(|i| {
            let k = if i < n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            k * dk
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    x: SpatialGrid,
    momentum_points: [usize; 2],
}

impl PhaseGrid {
    /// Momentum lattice with as many nodes as the spatial grid.
    pub fn new(x: SpatialGrid) -> Self {
        Self {
            x,
            momentum_points: x.points,
        }
    }

    pub fn with_momentum_points(x: SpatialGrid, points: &[usize]) -> Result<Self> {
        if points.len() != x.dim() {
            return Err(Error::InvalidGrid(format!(
                "{} momentum axes for a {}-d grid",
                points.len(),
                x.dim()
            )));
        }
        let mut m = [1usize; 2];
        for a in 0..x.dim() {
            check_axis(points[a], 1.0)?;
            if points[a] > x.points(a) {
                return Err(Error::InvalidGrid(format!(
                    "{} momentum points exceed {} spatial points on axis {a}",
                    points[a],
                    x.points(a)
                )));
            }
            m[a] = points[a];
        }
        Ok(Self {
            x,
            momentum_points: m,
        })
    }

    pub fn spatial(&self) -> &SpatialGrid {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn momentum_points(&self, axis: usize) -> usize {
        self.momentum_points[axis]
    }

    pub fn momentum_shape(&self) -> Vec<usize> {
        self.momentum_points[..self.dim()].to_vec()
    }

    pub fn momentum_spacing(&self, axis: usize) -> f64 {
        2.0 * PI / (self.momentum_points[axis] as f64 * self.x.spacing(axis))
    }

    /// Span `m * dp` of the momentum lattice along `axis`.
    pub fn momentum_extent(&self, axis: usize) -> f64 {
        self.momentum_points[axis] as f64 * self.momentum_spacing(axis)
    }

    /// Largest representable |p| (the lattice is `[-p_max, p_max)`).
    pub fn p_max(&self, axis: usize) -> f64 {
        0.5 * self.momentum_extent(axis)
    }

    /// Momentum values along `axis` in natural (ascending) order.
    pub fn momenta(&self, axis: usize) -> Vec<f64> {
        let m = self.momentum_points[axis];
        let dp = self.momentum_spacing(axis);
        (0..m).map(|k| (k as f64 - (m / 2) as f64) * dp).collect()
    }

    pub fn momentum_len(&self) -> usize {
        self.momentum_shape().iter().product()
    }

    /// Total number of phase-space nodes.
    pub fn len(&self) -> usize {
        self.x.len() * self.momentum_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `prod_a h_a dp_a`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.x.spacing(a) * self.momentum_spacing(a))
            .product()
    }

    /// Array shape `[n_1, .., n_d, m_1, .., m_d]`; the momentum block of
    /// each spatial node is contiguous.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = self.x.shape();
        s.extend(self.momentum_shape());
        s
    }

    pub fn momentum_index(&self, flat: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [flat, 0]
        } else {
            [
                flat / self.momentum_points[1],
                flat % self.momentum_points[1],
            ]
        }
    }

    /// Momentum vector of a flat momentum index.
    pub fn momentum(&self, flat: usize) -> [f64; 2] {
        let idx = self.momentum_index(flat);
        let mut p = [0.0; 2];
        for a in 0..self.dim() {
            let m = self.momentum_points[a];
            p[a] = (idx[a] as f64 - (m / 2) as f64) * self.momentum_spacing(a);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_point_counts() {
        assert!(SpatialGrid::line(4, 1.0).is_err());
        assert!(SpatialGrid::line(12, 1.0).is_err());
        assert!(SpatialGrid::line(16, 0.0).is_err());
        assert!(SpatialGrid::new(&[8, 8, 8], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn spacing_times_points_is_exact() {
        for &(n, l) in &[(8usize, 1.0f64), (256, 40.0), (1024, 31.7), (128, 0.3)] {
            let g = SpatialGrid::line(n, l).unwrap();
            assert_eq!(g.spacing(0) * n as f64, l);
        }
    }

    #[test]
    fn flat_index_roundtrip_2d() {
        let g = SpatialGrid::new(&[8, 16], &[1.0, 2.0]).unwrap();
        for f in 0..g.len() {
            assert_eq!(g.flat(g.index(f)), f);
        }
        assert_eq!(g.node(17), [0.125, 0.125]);
    }

    #[test]
    fn momentum_lattice_is_dual_of_y_lattice() {
        let g = SpatialGrid::line(64, 16.0).unwrap();
        let pg = PhaseGrid::new(g);
        // y = j h, p = k dp: y p = 2 pi j k / m
        let h = g.spacing(0);
        assert!((h * pg.momentum_spacing(0) * 64.0 - 2.0 * PI).abs() < 1e-12);
        assert!((pg.p_max(0) - PI / h).abs() < 1e-12);
        let p = pg.momenta(0);
        assert_eq!(p[32], 0.0);
        assert!(PhaseGrid::with_momentum_points(g, &[128]).is_err());
    }
}
