//! The space-homogeneous reduction: `psi_i = e^{-i theta_i}` with constant
//! potentials `Omega_i` turns the Schrödinger-Lohe system into the
//! Kuramoto model `theta_i' = Omega_i + (K/N) sum_k sin(theta_k - theta_i)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::state::EnsembleState;
use crate::C64;

/// Relative spread below which a field counts as constant in space.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoState {
    pub t: f64,
    /// Unwrapped phases.
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub coupling: f64,
}

impl KuramotoState {
    pub fn new(theta: Vec<f64>, omega: Vec<f64>, coupling: f64) -> Result<Self> {
        if theta.len() != omega.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} phases for {} frequencies",
                theta.len(),
                omega.len()
            )));
        }
        if theta.is_empty() {
            return Err(Error::InvalidArgument("no oscillators".into()));
        }
        if theta.iter().chain(&omega).any(|v| !v.is_finite()) || !coupling.is_finite() {
            return Err(Error::NonFinite("kuramoto state"));
        }
        Ok(Self {
            t: 0.0,
            theta,
            omega,
            coupling,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Phases reduced to `[0, 2 pi)`.
    pub fn wrapped(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t.rem_euclid(2.0 * PI)).collect()
    }
}

fn rhs(theta: &[f64], omega: &[f64], k: f64, out: &mut [f64]) {
    let n = theta.len();
    let c = k / n as f64;
    for i in 0..n {
        let s: f64 = theta.iter().map(|tk| (tk - theta[i]).sin()).sum();
        out[i] = omega[i] + c * s;
    }
}

pub fn kuramoto_rhs(s: &KuramotoState) -> Vec<f64> {
    let mut out = vec![0.0; s.len()];
    rhs(&s.theta, &s.omega, s.coupling, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoTrajectory {
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub dt: f64,
}

impl KuramotoTrajectory {
    /// `theta_j - theta_i` series.
    pub fn difference(&self, i: usize, j: usize) -> Vec<f64> {
        self.thetas.iter().map(|th| th[j] - th[i]).collect()
    }

    /// `max_{i,j} |theta_i - theta_j|` per sample.
    pub fn phase_diameter(&self) -> Vec<f64> {
        self.thetas
            .iter()
            .map(|th| {
                let lo = th.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = th.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .collect()
    }
}

/// Classical RK4 over a duration `t_final`, sampled every step.
pub fn evolve_kuramoto(s: &KuramotoState, t_final: f64, dt: f64) -> Result<KuramotoTrajectory> {
    let (steps, dt) = crate::sl::step_plan(t_final, dt)?;
    let n = s.len();
    let mut theta = s.theta.clone();
    let mut times = vec![s.t];
    let mut thetas = vec![theta.clone()];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 1..=steps {
        rhs(&theta, &s.omega, s.coupling, &mut k1);
        for i in 0..n {
            tmp[i] = theta[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &s.omega, s.coupling, &mut k2);
        for i in 0..n {
            tmp[i] = theta[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &s.omega, s.coupling, &mut k3);
        for i in 0..n {
            tmp[i] = theta[i] + dt * k3[i];
        }
        rhs(&tmp, &s.omega, s.coupling, &mut k4);
        for i in 0..n {
            theta[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure {
                t: s.t + step as f64 * dt,
                reason: "non-finite phase".into(),
            });
        }
        times.push(s.t + step as f64 * dt);
        thetas.push(theta.clone());
    }
    Ok(KuramotoTrajectory { times, thetas, dt })
}

/// Exact phase difference of two identical oscillators.
pub fn pair_difference_exact(d0: f64, k: f64, t: f64) -> f64 {
    2.0 * ((0.5 * d0).tan() * (-k * t).exp()).atan()
}

fn mean(values: &[C64]) -> C64 {
    values.iter().sum::<C64>() / values.len() as f64
}

/// Phases `theta_i = -arg psi_i` of a space-homogeneous ensemble, with
/// `Omega_i` the constant potential plus the oscillator's detuning.
pub fn reduce_homogeneous(state: &EnsembleState) -> Result<KuramotoState> {
    let v = state.potential();
    if !v.is_constant(0.0) {
        return Err(Error::ReductionInapplicable(
            "potential is not constant".into(),
        ));
    }
    let v0 = v.values()[0];
    let mut theta = Vec::with_capacity(state.len());
    for (i, f) in state.psi().iter().enumerate() {
        let m = mean(f.values());
        let spread = f
            .values()
            .iter()
            .map(|z| (z - m).norm())
            .fold(0.0, f64::max);
        if m.norm() == 0.0 || spread > HOMOGENEITY_TOLERANCE * m.norm() {
            return Err(Error::ReductionInapplicable(format!(
                "oscillator {i} varies in space (relative spread {:e})",
                spread / m.norm()
            )));
        }
        theta.push(-m.arg());
    }
    let omega = state.detuning().iter().map(|d| v0 + d).collect();
    let mut s = KuramotoState::new(theta, omega, state.coupling())?;
    s.t = state.t();
    Ok(s)
}

/// Removes `2 pi` jumps from a phase series.
pub fn unwrap(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut offset = 0.0;
    for (i, &v) in series.iter().enumerate() {
        if i > 0 {
            let prev = series[i - 1];
            let d = v - prev;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(v + offset);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ComplexField;
    use crate::grid::SpatialGrid;
    use crate::potential::Potential;
    use proptest::prelude::*;

    #[test]
    fn rhs_examples() {
        let s = KuramotoState::new(vec![0.4; 3], vec![1.0, -2.0, 0.5], 3.0).unwrap();
        assert_eq!(kuramoto_rhs(&s), vec![1.0, -2.0, 0.5]);
        let s = KuramotoState::new(vec![0.0, PI / 2.0], vec![0.0, 0.0], 1.0).unwrap();
        let r = kuramoto_rhs(&s);
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn rhs_matches_direct_summation() {
        let theta = vec![0.3, -1.7, 2.9];
        let omega = vec![0.1, 0.2, -0.4];
        let k = 1.3;
        let s = KuramotoState::new(theta.clone(), omega.clone(), k).unwrap();
        let r = kuramoto_rhs(&s);
        for i in 0..3 {
            let mut acc = omega[i];
            for j in 0..3 {
                acc += k / 3.0 * (theta[j] - theta[i]).sin();
            }
            assert!((r[i] - acc).abs() < 1e-14);
        }
    }

    #[test]
    fn two_oscillators_follow_exact_solution() {
        let d0 = 2.0;
        let s = KuramotoState::new(vec![0.0, d0], vec![0.0, 0.0], 1.0).unwrap();
        let tr = evolve_kuramoto(&s, 10.0, 1e-3).unwrap();
        for (t, th) in tr.times.iter().zip(&tr.thetas) {
            assert!((th[1] - th[0] - pair_difference_exact(d0, 1.0, *t)).abs() < 1e-8);
        }
    }

    #[test]
    fn antipodal_pair_is_stationary() {
        let s = KuramotoState::new(vec![0.0, PI], vec![0.0, 0.0], 1.0).unwrap();
        let tr = evolve_kuramoto(&s, 5.0, 1e-2).unwrap();
        let d = tr.difference(0, 1);
        assert!(d.iter().all(|v| (v - PI).abs() < 1e-12));
    }

    #[test]
    fn small_spread_shrinks_monotonically() {
        let s = KuramotoState::new(vec![0.1, -0.2, 0.3, 0.05, -0.15], vec![0.7; 5], 1.0).unwrap();
        let tr = evolve_kuramoto(&s, 5.0, 1e-2).unwrap();
        let d = tr.phase_diameter();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn reduction_reads_phases() {
        let g = SpatialGrid::line(8, 3.0).unwrap();
        let l: f64 = 3.0;
        let f = ComplexField::from_fn(g, |_| C64::from_polar(1.0 / l.sqrt(), -PI / 3.0)).unwrap();
        let v = Potential::constant(&g, 0.25).unwrap();
        let st = EnsembleState::new(vec![f.clone(), f], 1.0, v).unwrap();
        let k = reduce_homogeneous(&st).unwrap();
        assert!((k.theta[0] - PI / 3.0).abs() < 1e-15);
        assert_eq!(k.omega, vec![0.25, 0.25]);
    }

    #[test]
    fn reduction_rejects_gaussians() {
        let g = SpatialGrid::line(32, 10.0).unwrap();
        let f = ComplexField::from_fn(g, |x| C64::new((-(x[0] - 5.0).powi(2)).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let st = EnsembleState::new(vec![f.clone(), f], 1.0, Potential::zero(&g)).unwrap();
        assert!(matches!(
            reduce_homogeneous(&st),
            Err(Error::ReductionInapplicable(_))
        ));
    }

    #[test]
    fn unwrap_removes_jumps() {
        let raw = [3.0, -3.0, -2.5, 3.1];
        let u = unwrap(&raw);
        assert!((u[1] - (2.0 * PI - 3.0)).abs() < 1e-15);
        assert!(u.windows(2).all(|w| (w[1] - w[0]).abs() < PI));
    }

    proptest! {
        #[test]
        fn mean_phase_velocity_is_mean_frequency(
            theta in prop::collection::vec(-10.0f64..10.0, 2..8),
            k in 0.0f64..5.0,
        ) {
            let omega: Vec<f64> = theta.iter().map(|t| (t * 1.7).cos()).collect();
            let s = KuramotoState::new(theta, omega.clone(), k).unwrap();
            let total: f64 = kuramoto_rhs(&s).iter().sum();
            prop_assert!((total - omega.iter().sum::<f64>()).abs() < 1e-13 * (1.0 + k * s.len() as f64));
        }

        #[test]
        fn rotating_frame_shifts_phases(c in -2.0f64..2.0) {
            let base = KuramotoState::new(vec![0.2, 1.1, -0.7], vec![0.3, -0.1, 0.0], 1.5).unwrap();
            let shifted = KuramotoState::new(base.theta.clone(), base.omega.iter().map(|w| w + c).collect(), 1.5).unwrap();
            let a = evolve_kuramoto(&base, 2.0, 1e-2).unwrap();
            let b = evolve_kuramoto(&shifted, 2.0, 1e-2).unwrap();
            for ((t, x), y) in a.times.iter().zip(&a.thetas).zip(&b.thetas) {
                for i in 0..3 {
                    prop_assert!((y[i] - x[i] - c * t).abs() < 1e-10);
                }
                prop_assert!(((y[1] - y[0]) - (x[1] - x[0])).abs() < 1e-10);
            }
        }
    }
}
