use crate::error::{Error, Result};
use crate::field::{l2_norm, ComplexField};
use crate::grid::SpatialGrid;
use crate::potential::Potential;
use crate::C64;

pub const NORM_TOLERANCE: f64 = 1e-8;

/// The tuple `(psi_1, .., psi_N)` at time `t` with coupling `K` and the
/// common potential `V`.
///
/// `detuning` holds per-oscillator constant offsets `Omega_i` added to
/// `V`; they are zero except in the space-homogeneous Kuramoto setting.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub(crate) t: f64,
    pub(crate) psi: Vec<ComplexField>,
    pub(crate) coupling: f64,
    pub(crate) potential: Potential,
    pub(crate) detuning: Vec<f64>,
}

impl EnsembleState {
    pub fn new(psi: Vec<ComplexField>, coupling: f64, potential: Potential) -> Result<Self> {
        let n = psi.len();
        Self::with_detuning(psi, coupling, potential, vec![0.0; n])
    }

    pub fn with_detuning(
        psi: Vec<ComplexField>,
        coupling: f64,
        potential: Potential,
        detuning: Vec<f64>,
    ) -> Result<Self> {
        if psi.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 oscillators, got {}",
                psi.len()
            )));
        }
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling K = {coupling} must be finite and >= 0"
            )));
        }
        if detuning.len() != psi.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} detunings for {} oscillators",
                detuning.len(),
                psi.len()
            )));
        }
        if detuning.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("detuning"));
        }
        let grid = *psi[0].grid();
        for f in &psi {
            if f.grid() != &grid {
                return Err(Error::DimensionMismatch(
                    "oscillators on different grids".into(),
                ));
            }
        }
        if potential.grid() != &grid {
            return Err(Error::DimensionMismatch(
                "potential sampled on a different grid".into(),
            ));
        }
        for (index, f) in psi.iter().enumerate() {
            let norm = l2_norm(f);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized {
                    index,
                    norm,
                    tolerance: NORM_TOLERANCE,
                });
            }
        }
        Ok(Self {
            t: 0.0,
            psi,
            coupling,
            potential,
            detuning,
        })
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.psi[0].grid()
    }

    pub fn psi(&self) -> &[ComplexField] {
        &self.psi
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn detuning(&self) -> &[f64] {
        &self.detuning
    }

    pub fn norms(&self) -> Vec<f64> {
        self.psi.iter().map(l2_norm).collect()
    }

    /// Reorders the oscillators: new slot `i` holds old oscillator `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len()
            || perm
                .iter()
                .any(|&p| p >= self.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        Ok(Self {
            t: self.t,
            psi: perm.iter().map(|&p| self.psi[p].clone()).collect(),
            coupling: self.coupling,
            potential: self.potential.clone(),
            detuning: perm.iter().map(|&p| self.detuning[p]).collect(),
        })
    }

    /// Multiplies every oscillator by the same unit phase `e^{i alpha}`.
    pub fn rotated(&self, alpha: f64) -> Self {
        let c = C64::from_polar(1.0, alpha);
        Self {
            psi: self.psi.iter().map(|f| f.scaled(c)).collect(),
            ..self.clone()
        }
    }
}
