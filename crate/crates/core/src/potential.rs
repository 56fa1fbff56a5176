//! One-body potentials shared by all oscillators.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::spectral::{to_complex, Spectral};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Constant {
        value: f64,
    },
    /// `omega^2 |x - center|^2 / 2` with the displacement taken to the
    /// nearest periodic image, so the quadratic folds at `center +- L/2`.
    Harmonic {
        omega: f64,
        center: Vec<f64>,
    },
    /// Values at the grid nodes; off-grid values use the trigonometric
    /// interpolant.
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    grid: SpatialGrid,
    values: Vec<f64>,
}

/// Displacement from `c` to `x` along an axis of length `l`, wrapped into
/// `[-l/2, l/2)`.
pub fn periodic_displacement(x: f64, c: f64, l: f64) -> f64 {
    (x - c + 0.5 * l).rem_euclid(l) - 0.5 * l
}

impl Potential {
    pub fn zero(grid: &SpatialGrid) -> Self {
        Self {
            kind: PotentialKind::Zero,
            grid: *grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &SpatialGrid, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("potential"));
        }
        Ok(Self {
            kind: PotentialKind::Constant { value },
            grid: *grid,
            values: vec![value; grid.len()],
        })
    }

    pub fn harmonic(grid: &SpatialGrid, omega: f64, center: &[f64]) -> Result<Self> {
        if center.len() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "harmonic center has {} coordinates on a {}-d grid",
                center.len(),
                grid.dim()
            )));
        }
        if !omega.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("potential"));
        }
        let kind = PotentialKind::Harmonic {
            omega,
            center: center.to_vec(),
        };
        let mut pot = Self {
            kind,
            grid: *grid,
            values: Vec::new(),
        };
        pot.values = (0..grid.len())
            .map(|i| pot.eval_analytic(grid.node(i)))
            .collect();
        Ok(pot)
    }

    pub fn tabulated(grid: &SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} potential values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential"));
        }
        Ok(Self {
            kind: PotentialKind::Tabulated,
            grid: *grid,
            values,
        })
    }

    /// Reads whitespace-separated values in row-major node order.
    pub fn from_file(grid: &SpatialGrid, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let values = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| {
                    Error::config("potential.file", format!("{}: {e}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::tabulated(grid, values)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when all sampled values agree to `tol`.
    pub fn is_constant(&self, tol: f64) -> bool {
        let v0 = self.values[0];
        self.values.iter().all(|v| (v - v0).abs() <= tol)
    }

    fn eval_analytic(&self, x: [f64; 2]) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Constant { value } => *value,
            PotentialKind::Harmonic { omega, center } => {
                let mut r2 = 0.0;
                for a in 0..self.grid.dim() {
                    let d = periodic_displacement(x[a], center[a], self.grid.extent(a));
                    r2 += d * d;
                }
                0.5 * omega * omega * r2
            }
            PotentialKind::Tabulated => unreachable!("tabulated potentials are not analytic"),
        }
    }

    /// Samples the potential on the grid refined twice per axis.
    pub fn sample_refined(&self) -> Vec<f64> {
        let fine = self
            .grid
            .refined(2)
            .expect("refining a valid grid stays valid");
        match self.kind {
            PotentialKind::Tabulated => Spectral::new(&self.grid)
                .upsample2(&to_complex(&self.values))
                .into_iter()
                .map(|v| v.re)
                .collect(),
            _ => (0..fine.len())
                .map(|i| self.eval_analytic(fine.node(i)))
                .collect(),
        }
    }

    /// Gradient at the grid nodes, one component per axis.
    pub fn gradient(&self) -> Vec<Vec<f64>> {
        let dim = self.grid.dim();
        match &self.kind {
            PotentialKind::Zero | PotentialKind::Constant { .. } => {
                vec![vec![0.0; self.grid.len()]; dim]
            }
            PotentialKind::Harmonic { omega, center } => (0..dim)
                .map(|a| {
                    (0..self.grid.len())
                        .map(|i| {
                            let x = self.grid.node(i)[a];
                            omega * omega * periodic_displacement(x, center[a], self.grid.extent(a))
                        })
                        .collect()
                })
                .collect(),
            PotentialKind::Tabulated => Spectral::new(&self.grid)
                .gradient(&to_complex(&self.values))
                .into_iter()
                .map(|d| d.into_iter().map(|v| v.re).collect())
                .collect(),
        }
    }
}
