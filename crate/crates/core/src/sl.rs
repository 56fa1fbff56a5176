//! Strang-split integration of the Schrödinger-Lohe system
//!
//! ```text
//! d/dt psi_j = (i/2) Lap psi_j - i V psi_j + (K / 2N) sum_k (psi_k - <psi_k, psi_j> psi_j)
//! ```
//!
//! One step is `P(dt/2) C(dt/2) T(dt) C(dt/2) P(dt/2)`: `P` is the exact
//! potential phase, `T` the exact kinetic Fourier multiplier and `C` one
//! classical RK4 substep of the coupling with inner products refreshed at
//! every stage. The coupling commutes with any common unitary flow, so the
//! correlation dynamics only sees the RK4 error.
//!
//! Sums over oscillators are taken in a label-independent order, which makes
//! the integrator bitwise equivariant under relabeling.

use crate::corr::{correlations, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::field::{dot, l2_norm, norm_sqr, ComplexField};
use crate::spectral::Spectral;
use crate::state::EnsembleState;
use crate::C64;

/// Per-step norm drift that aborts integration.
pub const STEP_DRIFT_LIMIT: f64 = 1e-6;
/// Bound on `dt * max|V|` and `dt * K`.
pub const ACCURACY_LIMIT: f64 = 0.5;

fn total_cmp(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Sum of a small set of terms in sorted order.
fn ordered_sum(terms: &mut [C64]) -> C64 {
    terms.sort_unstable_by(total_cmp);
    terms.iter().fold(C64::new(0.0, 0.0), |acc, v| acc + v)
}

/// Coupling `(K/2N) sum_k (psi_k - <psi_k, psi_j> psi_j)` for raw arrays.
pub(crate) fn coupling_values(psi: &[Vec<C64>], k: f64, dv: f64, out: &mut [Vec<C64>]) {
    let n = psi.len();
    let pref = k / (2.0 * n as f64);
    let mut terms = vec![C64::new(0.0, 0.0); n];
    let z_sum: Vec<C64> = (0..n)
        .map(|j| {
            for (kk, t) in terms.iter_mut().enumerate() {
                *t = dot(&psi[kk], &psi[j], dv);
            }
            ordered_sum(&mut terms)
        })
        .collect();
    let len = psi[0].len();
    for x in 0..len {
        for (kk, t) in terms.iter_mut().enumerate() {
            *t = psi[kk][x];
        }
        let s = ordered_sum(&mut terms);
        for j in 0..n {
            out[j][x] = pref * (s - z_sum[j] * psi[j][x]);
        }
    }
}

/// Coupling forcing for every oscillator.
pub fn coupling_rhs(state: &EnsembleState) -> Vec<ComplexField> {
    let grid = *state.grid();
    let psi: Vec<Vec<C64>> = state.psi.iter().map(|f| f.values().to_vec()).collect();
    let mut out = vec![vec![C64::new(0.0, 0.0); grid.len()]; psi.len()];
    coupling_values(&psi, state.coupling, grid.cell_volume(), &mut out);
    out.into_iter()
        .map(|v| ComplexField::new(grid, v).expect("coupling of finite fields is finite"))
        .collect()
}

/// Reusable propagators for a fixed grid, potential and step size.
#[derive(Debug, Clone)]
pub struct SlStepper {
    spectral: Spectral,
    dt: f64,
    kinetic: Vec<C64>,
    potential_half: Vec<C64>,
    detuning_half: Vec<C64>,
    renormalize: bool,
    stages: [Vec<Vec<C64>>; 5],
}

impl SlStepper {
    pub fn new(state: &EnsembleState, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} must be positive"
            )));
        }
        let vmax = state
            .detuning
            .iter()
            .map(|d| {
                state
                    .potential
                    .values()
                    .iter()
                    .fold(0.0f64, |m, v| m.max((v + d).abs()))
            })
            .fold(0.0, f64::max);
        if dt * vmax >= ACCURACY_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dt * max|V| = {} must stay below {ACCURACY_LIMIT}",
                dt * vmax
            )));
        }
        if dt * state.coupling >= ACCURACY_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dt * K = {} must stay below {ACCURACY_LIMIT}",
                dt * state.coupling
            )));
        }
        let spectral = Spectral::new(state.grid());
        let kinetic = spectral.kinetic_propagator(dt);
        let potential_half = state
            .potential
            .values()
            .iter()
            .map(|v| C64::from_polar(1.0, -v * 0.5 * dt))
            .collect();
        let detuning_half = state
            .detuning
            .iter()
            .map(|d| C64::from_polar(1.0, -d * 0.5 * dt))
            .collect();
        let buf = vec![vec![C64::new(0.0, 0.0); state.grid().len()]; state.len()];
        Ok(Self {
            spectral,
            dt,
            kinetic,
            potential_half,
            detuning_half,
            renormalize: false,
            stages: [buf.clone(), buf.clone(), buf.clone(), buf.clone(), buf],
        })
    }

    pub fn renormalizing(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn potential_phase(&self, psi: &mut [Vec<C64>]) {
        for (f, d) in psi.iter_mut().zip(&self.detuning_half) {
            for (v, p) in f.iter_mut().zip(&self.potential_half) {
                *v *= p * d;
            }
        }
    }

    fn coupling_rk4(&mut self, psi: &mut [Vec<C64>], k: f64, dv: f64, tau: f64) {
        let [k1, k2, k3, k4, tmp] = &mut self.stages;
        coupling_values(psi, k, dv, k1);
        for ((t, p), d) in tmp.iter_mut().zip(psi.iter()).zip(k1.iter()) {
            for x in 0..p.len() {
                t[x] = p[x] + d[x] * (0.5 * tau);
            }
        }
        coupling_values(tmp, k, dv, k2);
        for ((t, p), d) in tmp.iter_mut().zip(psi.iter()).zip(k2.iter()) {
            for x in 0..p.len() {
                t[x] = p[x] + d[x] * (0.5 * tau);
            }
        }
        coupling_values(tmp, k, dv, k3);
        for ((t, p), d) in tmp.iter_mut().zip(psi.iter()).zip(k3.iter()) {
            for x in 0..p.len() {
                t[x] = p[x] + d[x] * tau;
            }
        }
        coupling_values(tmp, k, dv, k4);
        let w = tau / 6.0;
        for j in 0..psi.len() {
            for x in 0..psi[j].len() {
                psi[j][x] += w * (k1[j][x] + 2.0 * k2[j][x] + 2.0 * k3[j][x] + k4[j][x]);
            }
        }
    }

    /// Advances `psi` in place by one step; returns the post-step norms.
    pub(crate) fn advance(&mut self, psi: &mut [Vec<C64>], k: f64, dv: f64) -> Vec<f64> {
        let half = 0.5 * self.dt;
        self.potential_phase(psi);
        if k != 0.0 {
            self.coupling_rk4(psi, k, dv, half);
        }
        for f in psi.iter_mut() {
            self.spectral.apply(f, &self.kinetic);
        }
        if k != 0.0 {
            self.coupling_rk4(psi, k, dv, half);
        }
        self.potential_phase(psi);
        psi.iter().map(|f| norm_sqr(f, dv).sqrt()).collect()
    }

    /// One Strang step of `state`.
    pub fn step(&mut self, state: &EnsembleState) -> Result<EnsembleState> {
        let grid = *state.grid();
        let dv = grid.cell_volume();
        let before = state.norms();
        let mut psi: Vec<Vec<C64>> = state.psi.iter().map(|f| f.values().to_vec()).collect();
        let after = self.advance(&mut psi, state.coupling, dv);
        let t_new = state.t + self.dt;
        for (i, (a, b)) in after.iter().zip(&before).enumerate() {
            if !a.is_finite() || (a - b).abs() > STEP_DRIFT_LIMIT {
                return Err(Error::IntegrationFailure {
                    t: t_new,
                    reason: format!("norm of oscillator {i} moved from {b} to {a} in one step"),
                });
            }
        }
        if self.renormalize {
            for (f, n) in psi.iter_mut().zip(&after) {
                f.iter_mut().for_each(|v| *v /= n);
            }
        }
        let fields = psi
            .into_iter()
            .map(|v| ComplexField::new(grid, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleState {
            t: t_new,
            psi: fields,
            ..state.clone()
        })
    }
}

/// One Strang step with freshly built propagators.
pub fn step(state: &EnsembleState, dt: f64) -> Result<EnsembleState> {
    SlStepper::new(state, dt)?.step(state)
}

/// Receives read-only views of the state at the sampling cadence.
pub trait Observer {
    fn observe(&mut self, state: &EnsembleState);
}

impl<F: FnMut(&EnsembleState)> Observer for F {
    fn observe(&mut self, state: &EnsembleState) {
        self(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Record observables every this many steps (and at the end).
    pub sample_every: usize,
    /// Keep full states every this many steps.
    pub snapshot_every: Option<usize>,
    pub renormalize: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            sample_every: 1,
            snapshot_every: None,
            renormalize: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SLTrajectory {
    pub times: Vec<f64>,
    pub norms: Vec<Vec<f64>>,
    pub diameters: Vec<f64>,
    pub correlations: Vec<CorrelationMatrix>,
    pub snapshots: Vec<EnsembleState>,
    pub dt: f64,
    pub steps: usize,
    pub coupling: f64,
    pub renormalized: bool,
    pub final_state: EnsembleState,
}

impl SLTrajectory {
    pub fn initial_correlation(&self) -> &CorrelationMatrix {
        &self.correlations[0]
    }

    /// `max_t |norm_i(t) - norm_i(0)|` over all oscillators.
    pub fn max_norm_drift(&self) -> f64 {
        let n0 = &self.norms[0];
        self.norms
            .iter()
            .flat_map(|row| row.iter().zip(n0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// `(t, z_jk(t))` series.
    pub fn correlation_series(&self, j: usize, k: usize) -> Vec<C64> {
        self.correlations.iter().map(|c| c.get(j, k)).collect()
    }
}

/// Number of steps and the step size that lands exactly on `t_final`.
pub fn step_plan(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "T = {t_final} must be >= 0"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} must be positive"
        )));
    }
    if t_final == 0.0 {
        return Ok((0, dt));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

fn record(traj: &mut SLTrajectory, state: &EnsembleState, observers: &mut [&mut dyn Observer]) {
    traj.times.push(state.t);
    traj.norms.push(state.norms());
    traj.diameters.push(diameter(state));
    traj.correlations.push(correlations(state));
    for o in observers.iter_mut() {
        o.observe(state);
    }
}

/// Integrates over a duration `t_final`; on failure returns what was
/// recorded up to that point together with the error.
pub fn evolve_partial(
    state: &EnsembleState,
    t_final: f64,
    dt: f64,
    options: &EvolveOptions,
    observers: &mut [&mut dyn Observer],
) -> (SLTrajectory, Option<Error>) {
    let mut traj = SLTrajectory {
        times: Vec::new(),
        norms: Vec::new(),
        diameters: Vec::new(),
        correlations: Vec::new(),
        snapshots: Vec::new(),
        dt,
        steps: 0,
        coupling: state.coupling,
        renormalized: options.renormalize,
        final_state: state.clone(),
    };
    let (steps, dt) = match step_plan(t_final, dt) {
        Ok(p) => p,
        Err(e) => return (traj, Some(e)),
    };
    traj.dt = dt;
    record(&mut traj, state, observers);
    if options.snapshot_every.is_some() {
        traj.snapshots.push(state.clone());
    }
    if steps == 0 {
        return (traj, None);
    }
    let sample_every = options.sample_every.max(1);
    let mut stepper = match SlStepper::new(state, dt) {
        Ok(s) => s.renormalizing(options.renormalize),
        Err(e) => return (traj, Some(e)),
    };
    let t0 = state.t;
    let mut current = state.clone();
    for i in 1..=steps {
        match stepper.step(&current) {
            Ok(mut next) => {
                next.t = t0 + i as f64 * dt;
                current = next;
            }
            Err(e) => {
                traj.final_state = current;
                return (traj, Some(e));
            }
        }
        traj.steps = i;
        if i % sample_every == 0 || i == steps {
            record(&mut traj, &current, observers);
        }
        if let Some(every) = options.snapshot_every {
            if i % every.max(1) == 0 {
                traj.snapshots.push(current.clone());
            }
        }
    }
    traj.final_state = current;
    (traj, None)
}

pub fn evolve(
    state: &EnsembleState,
    t_final: f64,
    dt: f64,
    options: &EvolveOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<SLTrajectory> {
    match evolve_partial(state, t_final, dt, options, observers) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

/// `max_{i,j} ||psi_i - psi_j||`.
pub fn diameter(state: &EnsembleState) -> f64 {
    diameter_pair(state).0
}

/// Diameter with the first maximizing pair in lexicographic order.
pub fn diameter_pair(state: &EnsembleState) -> (f64, (usize, usize)) {
    let mut best = (0.0, (0, 1));
    for i in 0..state.len() {
        for j in i + 1..state.len() {
            let d = l2_norm(&state.psi[i].sub(&state.psi[j]).expect("same grid"));
            if d > best.0 {
                best = (d, (i, j));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::inner_product;
    use crate::grid::SpatialGrid;
    use crate::potential::Potential;

    fn gaussian(g: SpatialGrid, c: f64, s: f64, k: f64) -> ComplexField {
        ComplexField::from_fn(g, |x| {
            let y = x[0] - c;
            C64::from_polar((-y * y / (2.0 * s * s)).exp(), k * y)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn pair(a: ComplexField, b: ComplexField, k: f64) -> EnsembleState {
        let v = Potential::zero(a.grid());
        EnsembleState::new(vec![a, b], k, v).unwrap()
    }

    #[test]
    fn coupling_vanishes_on_identical_tuple() {
        let g = SpatialGrid::line(64, 20.0).unwrap();
        let a = gaussian(g, 10.0, 1.0, 0.5);
        let s =
            EnsembleState::new(vec![a.clone(), a.clone(), a], 2.0, Potential::zero(&g)).unwrap();
        for c in coupling_rhs(&s) {
            assert!(c.values().iter().all(|v| v.norm() < 1e-15));
        }
    }

    #[test]
    fn coupling_vanishes_on_antipodal_pair() {
        let g = SpatialGrid::line(64, 20.0).unwrap();
        let a = gaussian(g, 10.0, 1.0, 0.0);
        let b = a.scaled(C64::new(-1.0, 0.0));
        for c in coupling_rhs(&pair(a, b, 1.0)) {
            assert!(c.values().iter().all(|v| v.norm() < 1e-15));
        }
    }

    #[test]
    fn coupling_of_quarter_turn_pair() {
        // <psi_2, psi_1> = -i, so (K/4)(psi_1 + i psi_1 - (1 - i) psi_1) = (iK/2) psi_1
        let g = SpatialGrid::line(64, 20.0).unwrap();
        let a = gaussian(g, 10.0, 1.3, 0.2);
        let b = a.scaled(C64::new(0.0, 1.0));
        assert!((inner_product(&b, &a).unwrap() - C64::new(0.0, -1.0)).norm() < 1e-14);
        let k = 1.7;
        let c = coupling_rhs(&pair(a.clone(), b.clone(), k));
        // direct-summation oracle
        let dv = g.cell_volume();
        let z21 = dot(b.values(), a.values(), dv);
        let z11 = dot(a.values(), a.values(), dv);
        for x in 0..g.len() {
            let direct = k / 4.0
                * (a.values()[x] - z11 * a.values()[x] + b.values()[x] - z21 * a.values()[x]);
            assert!((c[0].values()[x] - direct).norm() < 1e-15);
            let closed = C64::new(0.0, 0.5 * k) * a.values()[x];
            assert!((c[0].values()[x] - closed).norm() < 1e-14);
        }
    }

    #[test]
    fn free_gaussian_dispersion() {
        // width s: <x^2> - <x>^2 = s^2/2 (1 + t^2/s^4)
        let g = SpatialGrid::line(512, 80.0).unwrap();
        let s0 = 1.0;
        let a = gaussian(g, 40.0, s0, 0.0);
        let st = pair(a.clone(), a, 0.0);
        let traj = evolve(&st, 2.0, 1e-2, &EvolveOptions::default(), &mut []).unwrap();
        let f = &traj.final_state.psi()[0];
        let dv = g.cell_volume();
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..g.len() {
            let x = g.node(i)[0];
            let p = f.values()[i].norm_sqr() * dv;
            m1 += x * p;
            m2 += x * x * p;
        }
        let var = m2 - m1 * m1;
        let exact = 0.5 * s0 * s0 * (1.0 + 4.0 / s0.powi(4));
        assert!((var - exact).abs() < 1e-8, "{var} vs {exact}");
    }

    #[test]
    fn coherent_state_follows_classical_orbit() {
        let g = SpatialGrid::line(256, 32.0).unwrap();
        let v = Potential::harmonic(&g, 1.0, &[16.0]).unwrap();
        let a = gaussian(g, 17.0, 1.0, 0.0);
        let st = EnsembleState::new(vec![a.clone(), a], 0.0, v).unwrap();
        let t_end = 2.0;
        let traj = evolve(&st, t_end, 1e-3, &EvolveOptions::default(), &mut []).unwrap();
        let f = &traj.final_state.psi()[0];
        let dv = g.cell_volume();
        let mean: f64 = (0..g.len())
            .map(|i| g.node(i)[0] * f.values()[i].norm_sqr() * dv)
            .sum();
        assert!((mean - (16.0 + t_end.cos())).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn identical_members_stay_identical() {
        let g = SpatialGrid::line(128, 20.0).unwrap();
        let v = Potential::harmonic(&g, 0.7, &[10.0]).unwrap();
        let a = gaussian(g, 9.0, 1.0, 0.3);
        let st = EnsembleState::new(vec![a.clone(), a.clone(), a], 3.0, v).unwrap();
        let traj = evolve(&st, 1.0, 1e-2, &EvolveOptions::default(), &mut []).unwrap();
        assert!(traj.diameters.iter().all(|d| *d < 1e-12));
    }

    #[test]
    fn zero_duration_keeps_only_initial_sample() {
        let g = SpatialGrid::line(32, 10.0).unwrap();
        let a = gaussian(g, 5.0, 1.0, 0.0);
        let traj = evolve(
            &pair(a.clone(), a, 1.0),
            0.0,
            1e-3,
            &EvolveOptions::default(),
            &mut [],
        )
        .unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.steps, 0);
    }

    #[test]
    fn observers_see_every_sample() {
        let g = SpatialGrid::line(32, 10.0).unwrap();
        let a = gaussian(g, 5.0, 1.0, 0.0);
        let b = gaussian(g, 5.5, 1.0, 0.0);
        let mut seen = Vec::new();
        let mut obs = |s: &EnsembleState| seen.push(s.t());
        let opts = EvolveOptions {
            sample_every: 5,
            ..Default::default()
        };
        let traj = evolve(&pair(a, b, 1.0), 0.1, 1e-3, &opts, &mut [&mut obs]).unwrap();
        assert_eq!(seen.len(), 21);
        assert_eq!(seen, traj.times);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn diameter_examples() {
        let g = SpatialGrid::line(64, 20.0).unwrap();
        let a = gaussian(g, 10.0, 1.0, 0.0);
        let minus = a.scaled(C64::new(-1.0, 0.0));
        assert!((diameter(&pair(a.clone(), minus, 1.0)) - 2.0).abs() < 1e-14);
        assert_eq!(diameter(&pair(a.clone(), a.clone(), 1.0)), 0.0);
        let b = gaussian(g, 11.0, 1.0, 0.0);
        let c = gaussian(g, 13.0, 1.0, 0.0);
        let s = EnsembleState::new(
            vec![a.clone(), b.clone(), c.clone()],
            1.0,
            Potential::zero(&g),
        )
        .unwrap();
        let d = |f: &ComplexField, h: &ComplexField| l2_norm(&f.sub(h).unwrap());
        let oracle = d(&a, &b).max(d(&a, &c)).max(d(&b, &c));
        let (dm, p) = diameter_pair(&s);
        assert_eq!(dm, oracle);
        assert_eq!(p, (0, 2));
    }

    #[test]
    fn rejects_inaccurate_step_sizes() {
        let g = SpatialGrid::line(32, 10.0).unwrap();
        let a = gaussian(g, 5.0, 1.0, 0.0);
        assert!(SlStepper::new(&pair(a.clone(), a.clone(), 1.0), 0.6).is_err());
        assert!(SlStepper::new(&pair(a.clone(), a, 1.0), -1e-3).is_err());
    }
}
