//! Correlation matrices `z_jk = <psi_j, psi_k>`, the two-oscillator
//! Riccati closure `z' = (K/2)(1 - z^2)`, and synchronization checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::dot;
use crate::fit::{fit_rate, RateFit, FLOOR};
use crate::sl::SLTrajectory;
use crate::state::EnsembleState;
use crate::C64;

/// Relative slack applied to pointwise bound checks.
pub const BOUND_SLACK: f64 = 1e-6;
/// Fitted rates must reach this fraction of the target.
pub const RATE_LOWER: f64 = 0.9;
pub const RATE_UPPER: f64 = 1.1;
/// Largest acceptable RMS log-residual of a rate fit.
pub const RESIDUAL_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    n: usize,
    z: Vec<C64>,
}

impl CorrelationMatrix {
    pub fn from_entries(n: usize, z: Vec<C64>) -> Result<Self> {
        if z.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for {n}x{n}",
                z.len()
            )));
        }
        Ok(Self { n, z })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.z[j * self.n + k]
    }

    pub fn r(&self, j: usize, k: usize) -> f64 {
        self.get(j, k).re
    }

    pub fn s(&self, j: usize, k: usize) -> f64 {
        self.get(j, k).im
    }

    /// `max |z_kj - conj(z_jk)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.n {
            for k in 0..self.n {
                m = m.max((self.get(k, j) - self.get(j, k).conj()).norm());
            }
        }
        m
    }

    pub fn max_modulus(&self) -> f64 {
        self.z.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max_j |z_jj - 1|`.
    pub fn diagonal_defect(&self) -> f64 {
        (0..self.n)
            .map(|j| (self.get(j, j) - 1.0).norm())
            .fold(0.0, f64::max)
    }

    /// Whether `sum_k Re z_jk > 0` for every row `j`.
    pub fn row_sums_positive(&self) -> bool {
        (0..self.n).all(|j| (0..self.n).map(|k| self.r(j, k)).sum::<f64>() > 0.0)
    }

    /// Pairs `(j, k)` with `j < k` in lexicographic order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        pairs(self.n)
    }
}

pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
        .collect()
}

/// All `N^2` inner products, each computed directly.
pub fn correlations(state: &EnsembleState) -> CorrelationMatrix {
    let n = state.len();
    let dv = state.grid().cell_volume();
    let psi = state.psi();
    let mut z = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            z.push(dot(psi[j].values(), psi[k].values(), dv));
        }
    }
    CorrelationMatrix { n, z }
}

pub fn z12_rhs(z: C64, k: f64) -> C64 {
    0.5 * k * (1.0 - z * z)
}

/// Exact solution of `z' = (K/2)(1 - z^2)` from `z(0) = z0`.
pub fn z12_closed_form(z0: C64, k: f64, t: f64) -> Result<C64> {
    if z0 == C64::new(-1.0, 0.0) {
        return Err(Error::ExcludedInitialDatum {
            re: z0.re,
            im: z0.im,
        });
    }
    let e = (k * t).exp();
    let a = (1.0 + z0) * e;
    let b = 1.0 - z0;
    Ok((a - b) / (a + b))
}

/// Classical RK4 integration of the Riccati closure, sampled every step.
pub fn z12_rk4(z0: C64, k: f64, t_final: f64, dt: f64) -> Vec<(f64, C64)> {
    let steps = (t_final / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut z = z0;
    out.push((0.0, z));
    for i in 1..=steps {
        let k1 = z12_rhs(z, k);
        let k2 = z12_rhs(z + 0.5 * dt * k1, k);
        let k3 = z12_rhs(z + 0.5 * dt * k2, k);
        let k4 = z12_rhs(z + dt * k3, k);
        z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push((i as f64 * dt, z));
    }
    out
}

/// Printed diameter envelope `D0 / (D0 + (1 - 2 D0) e^{Kt})`.
pub fn diameter_bound(d0: f64, k: f64, t: f64) -> f64 {
    d0 / (d0 + (1.0 - 2.0 * d0) * (k * t).exp())
}

/// Solution of `D' = K D (D - 1/2)` from `D0`, which decays at `K/2`.
pub fn diameter_riccati(d0: f64, k: f64, t: f64) -> f64 {
    d0 / (2.0 * d0 + (1.0 - 2.0 * d0) * (0.5 * k * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncStatus {
    Pass,
    Fail,
    /// The series reached round-off before the fit window.
    BelowFloor,
    PreconditionUnmet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub observable: String,
    pub pair: Option<(usize, usize)>,
    pub fitted_rate: Option<f64>,
    pub target_rate: f64,
    pub amplitude: Option<f64>,
    pub residual: Option<f64>,
    pub window: (f64, f64),
    pub pass: bool,
    pub status: SyncStatus,
    pub hypothesis_flags: BTreeMap<String, bool>,
    /// Asymptotic value of the observable (the final sample), when
    /// meaningful.
    pub limit: Option<(f64, f64)>,
    pub details: BTreeMap<String, f64>,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl SyncReport {
    pub fn new(observable: &str, target_rate: f64, times: &[f64], values: &[f64]) -> Self {
        let t_end = times.last().copied().unwrap_or(0.0);
        Self {
            observable: observable.to_string(),
            pair: None,
            fitted_rate: None,
            target_rate,
            amplitude: None,
            residual: None,
            window: (0.5 * t_end, t_end),
            pass: false,
            status: SyncStatus::Fail,
            hypothesis_flags: BTreeMap::new(),
            limit: None,
            details: BTreeMap::new(),
            times: times.to_vec(),
            values: values.to_vec(),
        }
    }

    pub fn set_status(&mut self, status: SyncStatus) {
        self.status = status;
        self.pass = matches!(status, SyncStatus::Pass | SyncStatus::BelowFloor);
    }

    fn apply_fit(&mut self, fit: &RateFit) {
        self.fitted_rate = Some(fit.rate);
        self.amplitude = Some(fit.amplitude);
        self.residual = Some(fit.residual);
    }
}

/// Fits the tail window `[T/2, T]`; `Ok(None)` when the series has sunk
/// below the floor there.
pub fn tail_fit(times: &[f64], values: &[f64]) -> Result<Option<RateFit>> {
    let t_end = *times.last().ok_or(Error::InsufficientPoints {
        found: 0,
        needed: 8,
    })?;
    let window = (0.5 * t_end, t_end);
    match fit_rate(times, values, window) {
        Ok(f) => Ok(Some(f)),
        Err(Error::InsufficientPoints { .. })
            if times
                .iter()
                .zip(values)
                .rfind(|(t, _)| **t >= window.0)
                .is_some_and(|(_, v)| *v <= FLOOR) =>
        {
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Generic decay check: pass iff the tail rate lies in
/// `[lower * target, upper * target]` with a small fit residual.
pub fn decay_report(
    observable: &str,
    times: &[f64],
    values: &[f64],
    target: f64,
    lower: f64,
    upper: f64,
) -> Result<SyncReport> {
    let mut rep = SyncReport::new(observable, target, times, values);
    match tail_fit(times, values)? {
        None => rep.set_status(SyncStatus::BelowFloor),
        Some(fit) => {
            rep.apply_fit(&fit);
            let ok = fit.rate >= lower * target
                && fit.rate <= upper * target
                && fit.residual < RESIDUAL_LIMIT;
            rep.set_status(if ok {
                SyncStatus::Pass
            } else {
                SyncStatus::Fail
            });
        }
    }
    Ok(rep)
}

/// Checks the printed diameter envelope pointwise and the tail rate of
/// `D(t)` against `K`. The `K D (D - 1/2)` Riccati solution is reported
/// alongside as a diagnostic.
pub fn check_diameter_bound(traj: &SLTrajectory) -> Result<SyncReport> {
    let k = traj.coupling;
    let times = &traj.times;
    let d = &traj.diameters;
    let d0 = d[0];
    let mut rep = SyncReport::new("diameter", k, times, d);
    let identical_potentials = traj
        .final_state
        .detuning()
        .iter()
        .all(|w| *w == traj.final_state.detuning()[0]);
    let small = d0 < 0.5;
    let unit = traj.norms[0]
        .iter()
        .all(|n| (n - 1.0).abs() <= crate::state::NORM_TOLERANCE);
    rep.hypothesis_flags
        .insert("identical_potentials".into(), identical_potentials);
    rep.hypothesis_flags
        .insert("initial_diameter_below_half".into(), small);
    rep.hypothesis_flags.insert("unit_norms".into(), unit);
    rep.details.insert("initial_diameter".into(), d0);
    if !(identical_potentials && small && unit) {
        rep.set_status(SyncStatus::PreconditionUnmet);
        return Ok(rep);
    }
    if d.iter().all(|v| *v <= FLOOR) {
        rep.set_status(SyncStatus::BelowFloor);
        return Ok(rep);
    }
    let mut violations = 0usize;
    let mut first_violation = f64::NAN;
    let mut worst_ratio = 0.0f64;
    let mut riccati_violations = 0usize;
    for (t, v) in times.iter().zip(d) {
        let b = diameter_bound(d0, k, *t);
        worst_ratio = worst_ratio.max(v / b);
        if *v > b * (1.0 + BOUND_SLACK) {
            if violations == 0 {
                first_violation = *t;
            }
            violations += 1;
        }
        if *v > diameter_riccati(d0, k, *t) * (1.0 + BOUND_SLACK) {
            riccati_violations += 1;
        }
    }
    rep.details
        .insert("bound_violations".into(), violations as f64);
    rep.details
        .insert("first_violation_time".into(), first_violation);
    rep.details.insert("max_ratio_to_bound".into(), worst_ratio);
    rep.details
        .insert("riccati_bound_violations".into(), riccati_violations as f64);
    rep.limit = Some((*d.last().unwrap(), 0.0));
    let rate_ok = match tail_fit(times, d)? {
        None => true,
        Some(fit) => {
            rep.apply_fit(&fit);
            fit.rate >= RATE_LOWER * k
        }
    };
    rep.set_status(if violations == 0 && rate_ok {
        SyncStatus::Pass
    } else {
        SyncStatus::Fail
    });
    Ok(rep)
}

/// Tail-rate check of `|1 - z_jk(t)|` for every pair `j < k`.
pub fn check_correlation_decay(traj: &SLTrajectory) -> Result<Vec<SyncReport>> {
    correlation_reports(&traj.times, &traj.correlations, traj.coupling)
}

pub fn correlation_reports(
    times: &[f64],
    corr: &[CorrelationMatrix],
    k: f64,
) -> Result<Vec<SyncReport>> {
    let z0 = &corr[0];
    let rows = z0.row_sums_positive();
    let mut out = Vec::new();
    for (j, l) in z0.pairs() {
        let series: Vec<f64> = corr.iter().map(|c| (1.0 - c.get(j, l)).norm()).collect();
        let mut rep = decay_report("one_minus_z", times, &series, k, RATE_LOWER, RATE_UPPER)?;
        rep.pair = Some((j, l));
        rep.hypothesis_flags
            .insert("initial_row_sums_positive".into(), rows);
        rep.hypothesis_flags
            .insert("not_antipodal".into(), (z0.get(j, l) + 1.0).norm() > 1e-12);
        let last = corr.last().unwrap().get(j, l);
        rep.limit = Some((last.re, last.im));
        if let Some(rate) = rep.fitted_rate {
            let envelope = times
                .iter()
                .zip(&series)
                .filter(|(t, _)| **t >= rep.window.0)
                .map(|(t, v)| v * (RATE_LOWER * k * t).exp())
                .fold(0.0, f64::max);
            rep.details.insert("envelope_constant".into(), envelope);
            rep.details.insert("rate_over_k".into(), rate / k);
        }
        out.push(rep);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ComplexField;
    use crate::grid::SpatialGrid;
    use crate::potential::Potential;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(z12_rhs(c(1.0, 0.0), 3.0), c(0.0, 0.0));
        assert_eq!(z12_rhs(c(-1.0, 0.0), 3.0), c(0.0, 0.0));
        assert_eq!(z12_rhs(c(0.0, 1.0), 2.0), c(2.0, 0.0));
    }

    #[test]
    fn closed_form_examples() {
        for t in [0.0, 1.0, 7.5] {
            assert_eq!(z12_closed_form(c(1.0, 0.0), 2.0, t).unwrap(), c(1.0, 0.0));
        }
        let z = z12_closed_form(c(0.0, 0.0), 1.0, 3f64.ln()).unwrap();
        assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        let rk = z12_rk4(c(0.0, 0.0), 1.0, 3f64.ln(), 3f64.ln() / 10000.0);
        assert!((rk.last().unwrap().1 - c(0.5, 0.0)).norm() < 1e-12);
        assert!(matches!(
            z12_closed_form(c(-1.0, 0.0), 1.0, 1.0),
            Err(Error::ExcludedInitialDatum { .. })
        ));
    }

    #[test]
    fn closed_form_matches_rk4() {
        let z0 = c(0.3, 0.4);
        let max = z12_rk4(z0, 1.0, 10.0, 1e-3)
            .into_iter()
            .map(|(t, z)| (z - z12_closed_form(z0, 1.0, t).unwrap()).norm())
            .fold(0.0, f64::max);
        assert!(max < 1e-8, "{max}");
    }

    #[test]
    fn diameter_envelopes_start_consistently() {
        assert!((diameter_riccati(0.3, 1.0, 0.0) - 0.3).abs() < 1e-15);
        assert!(diameter_bound(0.3, 1.0, 0.0) >= 0.3);
        // both decay, the Riccati one at K/2
        let r = (diameter_riccati(0.3, 1.0, 20.0) / diameter_riccati(0.3, 1.0, 19.0)).ln();
        assert!((r + 0.5).abs() < 1e-4);
    }

    fn plane_pair(phase: C64) -> EnsembleState {
        let g = SpatialGrid::line(16, 4.0).unwrap();
        let a = ComplexField::from_fn(g, |x| {
            C64::from_polar(0.5, 2.0 * std::f64::consts::PI * x[0] / 4.0)
        })
        .unwrap();
        let b = a.scaled(phase);
        EnsembleState::new(vec![a, b], 1.0, Potential::zero(&g)).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let z = correlations(&plane_pair(c(1.0, 0.0)));
        assert!((z.get(0, 1) - 1.0).norm() < 1e-15);
        let z = correlations(&plane_pair(c(0.0, 1.0)));
        assert!((z.get(0, 1) - c(0.0, 1.0)).norm() < 1e-15);
        assert!((z.get(1, 0) - c(0.0, -1.0)).norm() < 1e-15);
        assert!(z.hermitian_defect() < 1e-15);
        assert!(z.diagonal_defect() < 1e-14);
    }

    #[test]
    fn decay_report_on_closed_form_series() {
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let corr: Vec<CorrelationMatrix> = times
            .iter()
            .map(|t| {
                let z = z12_closed_form(c(0.0, 0.0), 1.0, *t).unwrap();
                CorrelationMatrix::from_entries(2, vec![c(1.0, 0.0), z, z.conj(), c(1.0, 0.0)])
                    .unwrap()
            })
            .collect();
        let reps = correlation_reports(&times, &corr, 1.0).unwrap();
        assert_eq!(reps.len(), 1);
        assert!(reps[0].pass);
        assert!((reps[0].fitted_rate.unwrap() - 1.0).abs() < 0.1);
        let json = serde_json::to_value(&reps[0]).unwrap();
        for key in [
            "observable",
            "pair",
            "fitted_rate",
            "target_rate",
            "amplitude",
            "window",
            "pass",
            "hypothesis_flags",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn identical_series_pass_at_floor() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let values = vec![0.0; times.len()];
        let rep = decay_report("x", &times, &values, 1.0, 0.9, 1.1).unwrap();
        assert_eq!(rep.status, SyncStatus::BelowFloor);
        assert!(rep.pass);
    }

    proptest! {
        #[test]
        fn closed_form_solves_the_ode(re in -0.9f64..1.0, im in -1.0f64..1.0, k in 0.1f64..3.0, t in 0.0f64..5.0) {
            let z0 = c(re, im);
            let h = 1e-5;
            let z = z12_closed_form(z0, k, t).unwrap();
            let dz = (z12_closed_form(z0, k, t + h).unwrap() - z12_closed_form(z0, k, t - h).unwrap()) / (2.0 * h);
            prop_assert!((dz - z12_rhs(z, k)).norm() < 1e-5 * (1.0 + z.norm_sqr()));
        }
    }
}
