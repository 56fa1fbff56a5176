//! Discrete Wigner transforms and the Wigner-Lohe system.
//!
//! For fields on a grid of spacing `h`, the two-point kernel
//! `conj(psi)(x + y/2) phi(x - y/2)` is sampled at `y_j = j h`,
//! `-m/2 <= j < m/2`, from the spectral interpolants of `psi` and `phi` on
//! the twice refined grid (`x_i +- y_j / 2` is fine node `2i +- j`). The
//! momentum sum is an FFT over `j`:
//!
//! ```text
//! w(x_i, p_k) = (h / 2 pi)^d sum_j e^{i y_j p_k} B(x_i, y_j)
//! ```
//!
//! which makes `sum_{i,k} w h^d dp^d = <psi, phi>` an exact discrete
//! identity. The Nyquist row `j = -m/2` holds the average of the `+-m/2`
//! products so that `w[psi, psi]` is real.
//!
//! In kernel space `Θ[V]` is multiplication by
//! `-i (V(x + y/2) - V(x - y/2))`, with the refined potential and zero on
//! Nyquist rows; transport `p . grad_x` is a Fourier multiplier in `x`.
//!
//! Phase-space arrays have shape `[n_1 .. n_d, m_1 .. m_d]` and each
//! spatial node owns a contiguous momentum block in ascending `p` order.

use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::corr::{pairs, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::PhaseGrid;
use crate::potential::Potential;
use crate::snapshot::Snapshot;
use crate::spectral::{fft_axis, AxisPlan, Spectral};
use crate::state::EnsembleState;
use crate::C64;

/// Largest imaginary residue tolerated in a diagonal Wigner function.
pub const REALITY_TOLERANCE: f64 = 1e-10;
/// Cumulative mass drift that aborts integration.
pub const MASS_DRIFT_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct WignerField {
    grid: PhaseGrid,
    data: Vec<C64>,
}

impl WignerField {
    pub fn new(grid: PhaseGrid, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a phase grid of {} nodes",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("wigner field"));
        }
        Ok(Self { grid, data })
    }

    pub fn from_real(grid: PhaseGrid, data: &[f64]) -> Result<Self> {
        Self::new(grid, data.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<C64> {
        self.data
    }

    /// `w+`.
    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.re).collect()
    }

    /// `w-`.
    pub fn imag_part(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.im).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    /// Phase-space integral.
    pub fn integral(&self) -> C64 {
        self.data.iter().sum::<C64>() * self.grid.cell_volume()
    }

    /// Momentum integral at each spatial node.
    pub fn momentum_marginal(&self) -> Vec<C64> {
        let m = self.grid.momentum_len();
        let dp: f64 = (0..self.grid.dim())
            .map(|a| self.grid.momentum_spacing(a))
            .product();
        self.data
            .chunks(m)
            .map(|b| b.iter().sum::<C64>() * dp)
            .collect()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn sub(&self, other: &WignerField) -> Result<WignerField> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch(
                "fields on different phase grids".into(),
            ));
        }
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

    /// Snapshot of kind 1 (real part) or 2 (complex).
    pub fn snapshot(&self, real: bool) -> Result<Snapshot> {
        if real {
            Snapshot::real_phase(&self.grid, &self.real_part())
        } else {
            Snapshot::complex_phase(&self.grid, &self.data)
        }
    }
}

/// Signed lattice index of a stored FFT index.
fn signed(jj: usize, m: usize) -> i64 {
    if jj < m / 2 {
        jj as i64
    } else {
        jj as i64 - m as i64
    }
}

/// FFT plans and tables bound to one phase grid.
#[derive(Debug, Clone)]
pub struct PhaseSpectral {
    grid: PhaseGrid,
    shape: Vec<usize>,
    x_plans: Vec<AxisPlan>,
    p_plans: Vec<AxisPlan>,
    xi: Vec<Vec<f64>>,
}

impl PhaseSpectral {
    pub fn new(grid: &PhaseGrid) -> Self {
        let mut planner = FftPlanner::new();
        let d = grid.dim();
        let x = grid.spatial();
        Self {
            grid: *grid,
            shape: grid.shape(),
            x_plans: (0..d)
                .map(|a| AxisPlan::new(&mut planner, x.points(a)))
                .collect(),
            p_plans: (0..d)
                .map(|a| AxisPlan::new(&mut planner, grid.momentum_points(a)))
                .collect(),
            xi: (0..d).map(|a| x.wavenumbers(a)).collect(),
        }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    fn block_shape(&self) -> Vec<usize> {
        self.grid.momentum_shape()
    }

    /// Transform of every momentum block, forward (unnormalized) or
    /// inverse (normalized).
    fn transform_p(&self, data: &mut [C64], inverse: bool) {
        let d = self.grid.dim();
        for (a, plan) in self.p_plans.iter().enumerate() {
            fft_axis(data, &self.shape, d + a, plan.fft(inverse));
        }
        if inverse {
            let s = 1.0 / self.grid.momentum_len() as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn transform_x(&self, data: &mut [C64], inverse: bool) {
        for (a, plan) in self.x_plans.iter().enumerate() {
            fft_axis(data, &self.shape, a, plan.fft(inverse));
        }
        if inverse {
            let s = 1.0 / self.grid.spatial().len() as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Kernel `B(x, y_j)` of a phase-space field, in stored FFT order.
    pub fn to_kernel(&self, w: &[C64]) -> Vec<C64> {
        let mut b = w.to_vec();
        self.transform_p(&mut b, false);
        let scale: f64 = (0..self.grid.dim())
            .map(|a| {
                2.0 * PI / (self.grid.spatial().spacing(a) * self.grid.momentum_points(a) as f64)
            })
            .product();
        let bs = self.block_shape();
        let m = self.grid.momentum_len();
        for block in b.chunks_mut(m) {
            for (jj, v) in block.iter_mut().enumerate() {
                *v *= scale * self.parity(jj, &bs);
            }
        }
        b
    }

    /// Inverse of [`Self::to_kernel`].
    pub fn from_kernel(&self, kernel: &[C64]) -> Vec<C64> {
        let bs = self.block_shape();
        let m = self.grid.momentum_len();
        let mut w = kernel.to_vec();
        for block in w.chunks_mut(m) {
            for (jj, v) in block.iter_mut().enumerate() {
                *v *= self.parity(jj, &bs);
            }
        }
        let d = self.grid.dim();
        for (a, plan) in self.p_plans.iter().enumerate() {
            fft_axis(&mut w, &self.shape, d + a, plan.fft(true));
        }
        let scale: f64 = (0..self.grid.dim())
            .map(|a| self.grid.spatial().spacing(a) / (2.0 * PI))
            .product();
        w.iter_mut().for_each(|v| *v *= scale);
        w
    }

    fn parity(&self, jj: usize, bs: &[usize]) -> f64 {
        let idx = self.grid.momentum_index(jj);
        let s: i64 = (0..bs.len()).map(|a| signed(idx[a], bs[a])).sum();
        if s.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Multiplies the kernel of `data` by `mult` (one entry per node).
    pub fn apply_kernel_multiplier(&self, data: &mut [C64], mult: &[C64]) {
        self.transform_p(data, false);
        for (v, m) in data.iter_mut().zip(mult) {
            *v *= m;
        }
        self.transform_p(data, true);
    }

    /// Multiplies the spatial spectrum of `data` by `mult`.
    pub fn apply_x_multiplier(&self, data: &mut [C64], mult: &[C64]) {
        self.transform_x(data, false);
        for (v, m) in data.iter_mut().zip(mult) {
            *v *= m;
        }
        self.transform_x(data, true);
    }

    /// Builds a table over (spatial Fourier mode, momentum node).
    fn x_symbol<F: Fn(usize, [f64; 2], [bool; 2]) -> C64>(&self, f: F) -> Vec<C64> {
        let x = self.grid.spatial();
        let m = self.grid.momentum_len();
        let d = self.grid.dim();
        let mut out = Vec::with_capacity(self.grid.len());
        for ix in 0..x.len() {
            let idx = x.index(ix);
            let mut xi = [0.0; 2];
            let mut nyq = [false; 2];
            for a in 0..d {
                xi[a] = self.xi[a][idx[a]];
                nyq[a] = idx[a] == x.points(a) / 2;
            }
            for kp in 0..m {
                out.push(f(kp, xi, nyq));
            }
        }
        out
    }

    /// Exact free transport `w(x, p) -> w(x - p tau, p)`; Nyquist modes use
    /// the real part of the phase so real fields stay real.
    pub fn transport_propagator(&self, tau: f64) -> Vec<C64> {
        let d = self.grid.dim();
        self.x_symbol(|kp, xi, nyq| {
            let p = self.grid.momentum(kp);
            let mut f = C64::new(1.0, 0.0);
            for a in 0..d {
                let ph = -xi[a] * p[a] * tau;
                f *= if nyq[a] {
                    C64::new(ph.cos(), 0.0)
                } else {
                    C64::from_polar(1.0, ph)
                };
            }
            f
        })
    }

    /// Symbol of `-p . grad_x`.
    pub fn transport_generator(&self) -> Vec<C64> {
        let d = self.grid.dim();
        self.x_symbol(|kp, xi, nyq| {
            let p = self.grid.momentum(kp);
            let s: f64 = (0..d).filter(|&a| !nyq[a]).map(|a| xi[a] * p[a]).sum();
            C64::new(0.0, -s)
        })
    }
}

/// `V(x + y/2) - V(x - y/2)` on the kernel lattice, in stored order, from
/// the potential on the twice refined grid. Zero on Nyquist rows.
pub fn potential_difference(grid: &PhaseGrid, potential: &Potential) -> Result<Vec<f64>> {
    let x = grid.spatial();
    if potential.grid() != x {
        return Err(Error::DimensionMismatch(
            "potential sampled on a different grid".into(),
        ));
    }
    let fine_v = potential.sample_refined();
    let fine = x.refined(2)?;
    let d = grid.dim();
    let m = grid.momentum_len();
    let mut out = Vec::with_capacity(grid.len());
    for ix in 0..x.len() {
        let i = x.index(ix);
        for jj in 0..m {
            let jm = grid.momentum_index(jj);
            let mut plus = [0usize; 2];
            let mut minus = [0usize; 2];
            let mut nyquist = false;
            for a in 0..d {
                let ma = grid.momentum_points(a);
                nyquist |= jm[a] == ma / 2;
                let j = signed(jm[a], ma);
                let nf = 2 * x.points(a) as i64;
                plus[a] = (2 * i[a] as i64 + j).rem_euclid(nf) as usize;
                minus[a] = (2 * i[a] as i64 - j).rem_euclid(nf) as usize;
            }
            out.push(if nyquist {
                0.0
            } else {
                fine_v[fine.flat(plus)] - fine_v[fine.flat(minus)]
            });
        }
    }
    Ok(out)
}

/// `w[psi, phi]` on `pg`.
pub fn wigner_transform(
    psi: &ComplexField,
    phi: &ComplexField,
    pg: &PhaseGrid,
) -> Result<WignerField> {
    let ops = PhaseSpectral::new(pg);
    wigner_with(&ops, psi, phi)
}

fn wigner_with(ops: &PhaseSpectral, psi: &ComplexField, phi: &ComplexField) -> Result<WignerField> {
    let pg = ops.grid();
    let x = pg.spatial();
    if psi.grid() != x || phi.grid() != x {
        return Err(Error::DimensionMismatch(
            "fields not on the phase grid's spatial grid".into(),
        ));
    }
    let spec = Spectral::new(x);
    let up_psi = spec.upsample2(psi.values());
    let up_phi = spec.upsample2(phi.values());
    let fine = x.refined(2)?;
    let d = pg.dim();
    let m = pg.momentum_len();
    let mut kernel = Vec::with_capacity(pg.len());
    for ix in 0..x.len() {
        let i = x.index(ix);
        for jj in 0..m {
            let jm = pg.momentum_index(jj);
            // per axis: candidate offsets with weights (two at Nyquist)
            let mut opts: [[(i64, f64); 2]; 2] = [[(0, 1.0); 2]; 2];
            let mut counts = [1usize; 2];
            for a in 0..d {
                let ma = pg.momentum_points(a);
                if jm[a] == ma / 2 {
                    let h = (ma / 2) as i64;
                    opts[a] = [(-h, 0.5), (h, 0.5)];
                    counts[a] = 2;
                } else {
                    opts[a][0] = (signed(jm[a], ma), 1.0);
                }
            }
            let mut acc = C64::new(0.0, 0.0);
            for c0 in 0..counts[0] {
                for c1 in 0..counts[1] {
                    let sel = [opts[0][c0], opts[1][c1]];
                    let mut plus = [0usize; 2];
                    let mut minus = [0usize; 2];
                    let mut wgt = 1.0;
                    for a in 0..d {
                        let nf = 2 * x.points(a) as i64;
                        plus[a] = (2 * i[a] as i64 + sel[a].0).rem_euclid(nf) as usize;
                        minus[a] = (2 * i[a] as i64 - sel[a].0).rem_euclid(nf) as usize;
                        wgt *= sel[a].1;
                    }
                    acc += up_psi[fine.flat(plus)].conj() * up_phi[fine.flat(minus)] * wgt;
                }
            }
            kernel.push(acc);
        }
    }
    WignerField::new(*pg, ops.from_kernel(&kernel))
}

/// `Θ[V] w`.
pub fn theta_v(w: &WignerField, potential: &Potential) -> Result<WignerField> {
    let ops = PhaseSpectral::new(w.grid());
    let dv = potential_difference(w.grid(), potential)?;
    let mult: Vec<C64> = dv.iter().map(|v| C64::new(0.0, -v)).collect();
    let mut data = w.data.clone();
    ops.apply_kernel_multiplier(&mut data, &mult);
    WignerField::new(w.grid, data)
}

/// State of the Wigner-Lohe system: `N` diagonal fields and the upper
/// triangle `w_jk`, `j < k`, in lexicographic pair order.
#[derive(Debug, Clone)]
pub struct WignerLoheState {
    pub(crate) t: f64,
    pub(crate) diag: Vec<WignerField>,
    pub(crate) off: Vec<WignerField>,
    pub(crate) coupling: f64,
    pub(crate) potential: Potential,
    z: CorrelationMatrix,
}

fn integrals(fields: &[Vec<C64>], n: usize, dv: f64) -> CorrelationMatrix {
    let int = |f: &Vec<C64>| f.iter().sum::<C64>() * dv;
    let mut z = vec![C64::new(0.0, 0.0); n * n];
    for j in 0..n {
        z[j * n + j] = int(&fields[j]);
    }
    for (p, (j, k)) in pairs(n).into_iter().enumerate() {
        let v = int(&fields[n + p]);
        z[j * n + k] = v;
        z[k * n + j] = v.conj();
    }
    CorrelationMatrix::from_entries(n, z).expect("square by construction")
}

impl WignerLoheState {
    pub fn new(
        diag: Vec<WignerField>,
        off: Vec<WignerField>,
        coupling: f64,
        potential: Potential,
    ) -> Result<Self> {
        let n = diag.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 oscillators, got {n}"
            )));
        }
        if off.len() != n * (n - 1) / 2 {
            return Err(Error::DimensionMismatch(format!(
                "{} off-diagonal fields for {n} oscillators",
                off.len()
            )));
        }
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling K = {coupling} must be >= 0"
            )));
        }
        let grid = *diag[0].grid();
        if diag.iter().chain(&off).any(|f| f.grid() != &grid) {
            return Err(Error::DimensionMismatch(
                "fields on different phase grids".into(),
            ));
        }
        if potential.grid() != grid.spatial() {
            return Err(Error::DimensionMismatch(
                "potential sampled on a different grid".into(),
            ));
        }
        for (j, f) in diag.iter().enumerate() {
            if f.max_imag() > REALITY_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "diagonal field {j} has imaginary residue {:e}",
                    f.max_imag()
                )));
            }
        }
        let dv = grid.cell_volume();
        let arrays: Vec<Vec<C64>> = diag.iter().chain(&off).map(|f| f.data.clone()).collect();
        let z = integrals(&arrays, n, dv);
        Ok(Self {
            t: 0.0,
            diag,
            off,
            coupling,
            potential,
            z,
        })
    }

    /// Wigner transforms of an ensemble's wave functions.
    pub fn from_ensemble(state: &EnsembleState, pg: &PhaseGrid) -> Result<Self> {
        let ops = PhaseSpectral::new(pg);
        let psi = state.psi();
        let diag = psi
            .iter()
            .map(|f| wigner_with(&ops, f, f))
            .collect::<Result<Vec<_>>>()?;
        let off = pairs(psi.len())
            .into_iter()
            .map(|(j, k)| wigner_with(&ops, &psi[j], &psi[k]))
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self::new(diag, off, state.coupling(), state.potential().clone())?;
        s.t = state.t();
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.diag[0].grid()
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn diagonal(&self) -> &[WignerField] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[WignerField] {
        &self.off
    }

    /// `w_jk` for `j <= k`.
    pub fn pair(&self, j: usize, k: usize) -> &WignerField {
        assert!(j <= k && k < self.len());
        if j == k {
            return &self.diag[j];
        }
        let n = self.len();
        let p = j * n - j * (j + 1) / 2 + (k - j - 1);
        &self.off[p]
    }

    /// Cached phase-space integrals `z_jk`; the diagonal holds the masses.
    pub fn correlations(&self) -> &CorrelationMatrix {
        &self.z
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.z.r(j, j)).collect()
    }

    fn arrays(&self) -> Vec<Vec<C64>> {
        self.diag
            .iter()
            .chain(&self.off)
            .map(|f| f.data.clone())
            .collect()
    }

    fn with_arrays(&self, t: f64, arrays: Vec<Vec<C64>>) -> Result<Self> {
        let n = self.len();
        let grid = *self.grid();
        let mut fields = arrays
            .into_iter()
            .map(|a| WignerField::new(grid, a))
            .collect::<Result<Vec<_>>>()?;
        let off = fields.split_off(n);
        let dv = grid.cell_volume();
        let all: Vec<Vec<C64>> = fields.iter().chain(&off).map(|f| f.data.clone()).collect();
        Ok(Self {
            t,
            z: integrals(&all, n, dv),
            diag: fields,
            off,
            coupling: self.coupling,
            potential: self.potential.clone(),
        })
    }
}

/// Lohe coupling of the kinetic system for raw arrays laid out as
/// `[w_1 .. w_N, w_12, w_13, ..]`:
/// `(K/2N) sum_l (W_jl + W_lk - (z_jl + z_lk) W_jk)` with `W_kj = conj W_jk`.
fn coupling_values(fields: &[Vec<C64>], n: usize, k: f64, dv: f64, out: &mut [Vec<C64>]) {
    let z = integrals(fields, n, dv);
    let pref = k / (2.0 * n as f64);
    // (array, conjugate) holding W_jl
    let mut index = vec![vec![(0usize, false); n]; n];
    for (j, row) in index.iter_mut().enumerate() {
        row[j] = (j, false);
    }
    for (p, (j, l)) in pairs(n).into_iter().enumerate() {
        index[j][l] = (n + p, false);
        index[l][j] = (n + p, true);
    }
    let targets: Vec<(usize, usize)> = (0..n).map(|j| (j, j)).chain(pairs(n)).collect();
    for (slot, &(j, kk)) in targets.iter().enumerate() {
        let zsum: C64 = (0..n).map(|l| z.get(j, l) + z.get(l, kk)).sum();
        let dst = &mut out[slot];
        let (own, own_conj) = index[j][kk];
        let c = -pref * zsum;
        for (d, s) in dst.iter_mut().zip(&fields[own]) {
            *d = c * if own_conj { s.conj() } else { *s };
        }
        for (l, row) in index.iter().enumerate().take(n) {
            for (f, conj) in [index[j][l], row[kk]] {
                if conj {
                    for (d, s) in dst.iter_mut().zip(&fields[f]) {
                        *d += pref * s.conj();
                    }
                } else {
                    for (d, s) in dst.iter_mut().zip(&fields[f]) {
                        *d += pref * s;
                    }
                }
            }
        }
        if j == kk {
            dst.iter_mut().for_each(|v| v.im = 0.0);
        }
    }
}

/// Time derivative of every field of the kinetic system.
#[derive(Debug, Clone)]
pub struct WlDerivative {
    pub diag: Vec<WignerField>,
    pub off: Vec<WignerField>,
}

fn full_rhs(s: &WignerLoheState) -> Result<WlDerivative> {
    let n = s.len();
    let grid = *s.grid();
    let ops = PhaseSpectral::new(&grid);
    let arrays = s.arrays();
    let mut out = vec![vec![C64::new(0.0, 0.0); grid.len()]; arrays.len()];
    coupling_values(&arrays, n, s.coupling, grid.cell_volume(), &mut out);
    let transport = ops.transport_generator();
    let theta: Vec<C64> = potential_difference(&grid, &s.potential)?
        .iter()
        .map(|v| C64::new(0.0, *v))
        .collect();
    for (a, o) in arrays.iter().zip(out.iter_mut()) {
        let mut tr = a.clone();
        ops.apply_x_multiplier(&mut tr, &transport);
        let mut th = a.clone();
        ops.apply_kernel_multiplier(&mut th, &theta);
        for ((v, t), h) in o.iter_mut().zip(&tr).zip(&th) {
            *v += t + h;
        }
    }
    let mut fields = out
        .into_iter()
        .map(|a| WignerField::new(grid, a))
        .collect::<Result<Vec<_>>>()?;
    let off = fields.split_off(n);
    Ok(WlDerivative { diag: fields, off })
}

/// Right-hand side of the two-oscillator system:
/// `-p.grad w_1 - Θ[V] w_1 + (K/2)(w12+ - r12 w_1)`, likewise for `w_2`, and
/// `-p.grad w_12 - Θ[V] w_12 + (K/4)(w_1 + w_2 - 2 z12 w_12)`.
pub fn wl_rhs_n2(s: &WignerLoheState) -> Result<WlDerivative> {
    if s.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "two oscillators expected, got {}",
            s.len()
        )));
    }
    let grid = *s.grid();
    let ops = PhaseSpectral::new(&grid);
    let transport = ops.transport_generator();
    let theta: Vec<C64> = potential_difference(&grid, &s.potential)?
        .iter()
        .map(|v| C64::new(0.0, *v))
        .collect();
    let free = |a: &[C64]| {
        let mut tr = a.to_vec();
        ops.apply_x_multiplier(&mut tr, &transport);
        let mut th = a.to_vec();
        ops.apply_kernel_multiplier(&mut th, &theta);
        tr.iter().zip(&th).map(|(x, y)| x + y).collect::<Vec<_>>()
    };
    let k = s.coupling;
    let z = s.z.get(0, 1);
    let (w1, w2, w12) = (&s.diag[0].data, &s.diag[1].data, &s.off[0].data);
    let d1: Vec<C64> = free(w1)
        .iter()
        .zip(w1.iter().zip(w12))
        .map(|(f, (a, b))| f + C64::new(0.5 * k * (b.re - z.re * a.re), 0.0))
        .collect();
    let d2: Vec<C64> = free(w2)
        .iter()
        .zip(w2.iter().zip(w12))
        .map(|(f, (a, b))| f + C64::new(0.5 * k * (b.re - z.re * a.re), 0.0))
        .collect();
    let d12: Vec<C64> = free(w12)
        .iter()
        .zip(w1.iter().zip(w2).zip(w12))
        .map(|(f, ((a, b), c))| f + 0.25 * k * (a + b - 2.0 * z * c))
        .collect();
    Ok(WlDerivative {
        diag: vec![WignerField::new(grid, d1)?, WignerField::new(grid, d2)?],
        off: vec![WignerField::new(grid, d12)?],
    })
}

/// Right-hand side for any `N`, off-diagonal fields in complex form.
pub fn wl_rhs_general(s: &WignerLoheState) -> Result<WlDerivative> {
    full_rhs(s)
}

/// Reusable propagators for `Θ(dt/2) C(dt/2) X(dt) C(dt/2) Θ(dt/2)`.
#[derive(Debug, Clone)]
pub struct WlStepper {
    ops: PhaseSpectral,
    dt: f64,
    transport: Vec<C64>,
    theta_half: Vec<C64>,
    n: usize,
    stages: [Vec<Vec<C64>>; 5],
}

impl WlStepper {
    pub fn new(s: &WignerLoheState, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} must be positive"
            )));
        }
        if dt * s.coupling >= crate::sl::ACCURACY_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dt * K = {} must stay below {}",
                dt * s.coupling,
                crate::sl::ACCURACY_LIMIT
            )));
        }
        let grid = *s.grid();
        let ops = PhaseSpectral::new(&grid);
        let transport = ops.transport_propagator(dt);
        let theta_half = potential_difference(&grid, &s.potential)?
            .iter()
            .map(|v| C64::from_polar(1.0, v * 0.5 * dt))
            .collect();
        let count = s.len() + s.off.len();
        let buf = vec![vec![C64::new(0.0, 0.0); grid.len()]; count];
        Ok(Self {
            ops,
            dt,
            transport,
            theta_half,
            n: s.len(),
            stages: [buf.clone(), buf.clone(), buf.clone(), buf.clone(), buf],
        })
    }

    fn coupling_rk4(&mut self, f: &mut [Vec<C64>], k: f64, dv: f64, tau: f64) {
        let n = self.n;
        let [k1, k2, k3, k4, tmp] = &mut self.stages;
        coupling_values(f, n, k, dv, k1);
        for ((t, p), d) in tmp.iter_mut().zip(f.iter()).zip(k1.iter()) {
            for x in 0..p.len() {
                t[x] = p[x] + d[x] * (0.5 * tau);
            }
        }
        coupling_values(tmp, n, k, dv, k2);
        for ((t, p), d) in tmp.iter_mut().zip(f.iter()).zip(k2.iter()) {
            for x in 0..p.len() {
                t[x] = p[x] + d[x] * (0.5 * tau);
            }
        }
        coupling_values(tmp, n, k, dv, k3);
        for ((t, p), d) in tmp.iter_mut().zip(f.iter()).zip(k3.iter()) {
            for x in 0..p.len() {
                t[x] = p[x] + d[x] * tau;
            }
        }
        coupling_values(tmp, n, k, dv, k4);
        let w = tau / 6.0;
        for j in 0..f.len() {
            for x in 0..f[j].len() {
                f[j][x] += w * (k1[j][x] + 2.0 * k2[j][x] + 2.0 * k3[j][x] + k4[j][x]);
            }
        }
    }

    pub fn step(&mut self, s: &WignerLoheState) -> Result<WignerLoheState> {
        let dv = s.grid().cell_volume();
        let mut f = s.arrays();
        let half = 0.5 * self.dt;
        for a in f.iter_mut() {
            self.ops.apply_kernel_multiplier(a, &self.theta_half);
        }
        if s.coupling != 0.0 {
            self.coupling_rk4(&mut f, s.coupling, dv, half);
        }
        for a in f.iter_mut() {
            self.ops.apply_x_multiplier(a, &self.transport);
        }
        if s.coupling != 0.0 {
            self.coupling_rk4(&mut f, s.coupling, dv, half);
        }
        for a in f.iter_mut() {
            self.ops.apply_kernel_multiplier(a, &self.theta_half);
        }
        for a in f[..self.n].iter_mut() {
            a.iter_mut().for_each(|v| v.im = 0.0);
        }
        s.with_arrays(s.t + self.dt, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WlOptions {
    pub sample_every: usize,
    pub snapshot_every: Option<usize>,
}

impl Default for WlOptions {
    fn default() -> Self {
        Self {
            sample_every: 1,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WlTrajectory {
    pub times: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
    pub correlations: Vec<CorrelationMatrix>,
    /// `||w_1 - w_2||^2`.
    pub w_dist2: Vec<f64>,
    pub snapshots: Vec<WignerLoheState>,
    pub dt: f64,
    pub steps: usize,
    pub coupling: f64,
    pub final_state: WignerLoheState,
}

fn record(traj: &mut WlTrajectory, s: &WignerLoheState) -> Result<()> {
    traj.times.push(s.t);
    traj.masses.push(s.masses());
    traj.correlations.push(s.z.clone());
    let d = s.diag[0].sub(&s.diag[1])?.l2_norm();
    traj.w_dist2.push(d * d);
    Ok(())
}

/// Integrates the kinetic system over a duration `t_final`; on failure
/// returns the recorded prefix together with the error.
pub fn evolve_wl_partial(
    s: &WignerLoheState,
    t_final: f64,
    dt: f64,
    options: &WlOptions,
) -> (WlTrajectory, Option<Error>) {
    let mut traj = WlTrajectory {
        times: Vec::new(),
        masses: Vec::new(),
        correlations: Vec::new(),
        w_dist2: Vec::new(),
        snapshots: Vec::new(),
        dt,
        steps: 0,
        coupling: s.coupling,
        final_state: s.clone(),
    };
    let (steps, dt) = match crate::sl::step_plan(t_final, dt) {
        Ok(p) => p,
        Err(e) => return (traj, Some(e)),
    };
    traj.dt = dt;
    if let Err(e) = record(&mut traj, s) {
        return (traj, Some(e));
    }
    if options.snapshot_every.is_some() {
        traj.snapshots.push(s.clone());
    }
    if steps == 0 {
        return (traj, None);
    }
    let mut stepper = match WlStepper::new(s, dt) {
        Ok(st) => st,
        Err(e) => return (traj, Some(e)),
    };
    let m0 = s.masses();
    let every = options.sample_every.max(1);
    let mut current = s.clone();
    for i in 1..=steps {
        let mut next = match stepper.step(&current) {
            Ok(n) => n,
            Err(e) => {
                traj.final_state = current;
                return (traj, Some(e));
            }
        };
        next.t = s.t + i as f64 * dt;
        let drift = next
            .masses()
            .iter()
            .zip(&m0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if drift > MASS_DRIFT_LIMIT {
            traj.final_state = current;
            return (
                traj,
                Some(Error::IntegrationFailure {
                    t: next.t,
                    reason: format!("mass drift {drift:e} exceeds {MASS_DRIFT_LIMIT:e}"),
                }),
            );
        }
        current = next;
        traj.steps = i;
        if i % every == 0 || i == steps {
            if let Err(e) = record(&mut traj, &current) {
                return (traj, Some(e));
            }
        }
        if let Some(k) = options.snapshot_every {
            if i % k.max(1) == 0 {
                traj.snapshots.push(current.clone());
            }
        }
    }
    traj.final_state = current;
    (traj, None)
}

pub fn evolve_wl(
    s: &WignerLoheState,
    t_final: f64,
    dt: f64,
    options: &WlOptions,
) -> Result<WlTrajectory> {
    match evolve_wl_partial(s, t_final, dt, options) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

/// Phase-space `||w_1 - w_2||`.
pub fn wl_l2_distance(s: &WignerLoheState) -> Result<f64> {
    if s.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "two oscillators expected, got {}",
            s.len()
        )));
    }
    Ok(s.diag[0].sub(&s.diag[1])?.l2_norm())
}
