//! FFT plumbing on periodic grids: axis transforms over flat row-major
//! arrays, spectral derivatives, Fourier multipliers and band-limited
//! upsampling.
//!
//! Odd-order derivative symbols vanish at the Nyquist wavenumber so that
//! real fields stay real.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::grid::{fft_frequencies, SpatialGrid};
use crate::C64;

/// Forward and inverse plans for one axis length.
#[derive(Clone)]
pub struct AxisPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AxisPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AxisPlan").field("len", &self.len).finish()
    }
}

impl AxisPlan {
    pub fn new(planner: &mut FftPlanner<f64>, len: usize) -> Self {
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fft(&self, inverse: bool) -> &dyn Fft<f64> {
        if inverse {
            self.inverse.as_ref()
        } else {
            self.forward.as_ref()
        }
    }
}

/// Unnormalized in-place transform of every line of `data` along `axis`.
pub fn fft_axis(data: &mut [C64], shape: &[usize], axis: usize, fft: &dyn Fft<f64>) {
    let n = shape[axis];
    debug_assert_eq!(fft.len(), n);
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    if inner == 1 {
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    // gather all lines of one outer slab contiguously and transform them in
    // a single batched call
    let mut lines = vec![C64::new(0.0, 0.0); n * inner];
    for o in 0..outer {
        let slab = &mut data[o * n * inner..(o + 1) * n * inner];
        for k in 0..n {
            for i in 0..inner {
                lines[i * n + k] = slab[k * inner + i];
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for k in 0..n {
            for i in 0..inner {
                slab[k * inner + i] = lines[i * n + k];
            }
        }
    }
}

/// Spectral operators bound to one spatial grid.
#[derive(Debug, Clone)]
pub struct Spectral {
    grid: SpatialGrid,
    shape: Vec<usize>,
    plans: Vec<AxisPlan>,
    wavenumbers: Vec<Vec<f64>>,
}

impl Spectral {
    pub fn new(grid: &SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        let plans = (0..grid.dim())
            .map(|a| AxisPlan::new(&mut planner, grid.points(a)))
            .collect();
        let wavenumbers = (0..grid.dim()).map(|a| grid.wavenumbers(a)).collect();
        Self {
            grid: *grid,
            shape: grid.shape(),
            plans,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Unnormalized forward DFT over all axes.
    pub fn forward(&self, data: &mut [C64]) {
        for (a, plan) in self.plans.iter().enumerate() {
            fft_axis(data, &self.shape, a, plan.fft(false));
        }
    }

    /// Inverse DFT over all axes, normalized so `inverse(forward(f)) == f`.
    pub fn inverse(&self, data: &mut [C64]) {
        for (a, plan) in self.plans.iter().enumerate() {
            fft_axis(data, &self.shape, a, plan.fft(true));
        }
        let s = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Wavenumber vector of a flat Fourier index and per-axis Nyquist flags.
    pub fn mode(&self, flat: usize) -> ([f64; 2], [bool; 2]) {
        let idx = self.grid.index(flat);
        let mut k = [0.0; 2];
        let mut nyq = [false; 2];
        for a in 0..self.grid.dim() {
            k[a] = self.wavenumbers[a][idx[a]];
            nyq[a] = idx[a] == self.grid.points(a) / 2;
        }
        (k, nyq)
    }

    /// Fourier multiplier built from a symbol `(k, nyquist) -> factor`.
    pub fn symbol<F>(&self, f: F) -> Vec<C64>
    where
        F: Fn([f64; 2], [bool; 2]) -> C64,
    {
        (0..self.grid.len())
            .map(|i| {
                let (k, nyq) = self.mode(i);
                f(k, nyq)
            })
            .collect()
    }

    /// Multiplies the spectrum of `data` by `multiplier` in place.
    pub fn apply(&self, data: &mut [C64], multiplier: &[C64]) {
        self.forward(data);
        for (v, m) in data.iter_mut().zip(multiplier) {
            *v *= m;
        }
        self.inverse(data);
    }

    /// `e^{-i |k|^2 tau / 2}`: exact free propagator over time `tau`.
    pub fn kinetic_propagator(&self, tau: f64) -> Vec<C64> {
        self.symbol(|k, _| {
            let k2 = k[0] * k[0] + k[1] * k[1];
            C64::from_polar(1.0, -0.5 * k2 * tau)
        })
    }

    pub fn derivative(&self, data: &[C64], axis: usize) -> Vec<C64> {
        let mut out = data.to_vec();
        let mult = self.symbol(|k, nyq| {
            if nyq[axis] {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, k[axis])
            }
        });
        self.apply(&mut out, &mult);
        out
    }

    pub fn gradient(&self, data: &[C64]) -> Vec<Vec<C64>> {
        (0..self.grid.dim())
            .map(|a| self.derivative(data, a))
            .collect()
    }

    /// `d^2 / dx_a dx_b`.
    pub fn second_derivative(&self, data: &[C64], a: usize, b: usize) -> Vec<C64> {
        let mut out = data.to_vec();
        let mult = self.symbol(|k, nyq| {
            if a != b && (nyq[a] || nyq[b]) {
                C64::new(0.0, 0.0)
            } else {
                C64::new(-k[a] * k[b], 0.0)
            }
        });
        self.apply(&mut out, &mult);
        out
    }

    pub fn laplacian(&self, data: &[C64]) -> Vec<C64> {
        let mut out = data.to_vec();
        let mult = self.symbol(|k, _| C64::new(-(k[0] * k[0] + k[1] * k[1]), 0.0));
        self.apply(&mut out, &mult);
        out
    }

    /// `d/dx_a` of the Laplacian.
    pub fn gradient_of_laplacian(&self, data: &[C64], axis: usize) -> Vec<C64> {
        let mut out = data.to_vec();
        let mult = self.symbol(|k, nyq| {
            if nyq[axis] {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, -k[axis] * (k[0] * k[0] + k[1] * k[1]))
            }
        });
        self.apply(&mut out, &mult);
        out
    }

    /// Divergence of a real vector field.
    pub fn divergence(&self, components: &[Vec<f64>]) -> Vec<f64> {
        let mut div = vec![0.0; self.grid.len()];
        for (a, comp) in components.iter().enumerate() {
            let d = self.derivative(&to_complex(comp), a);
            for (acc, v) in div.iter_mut().zip(&d) {
                *acc += v.re;
            }
        }
        div
    }

    /// Trigonometric interpolant sampled on the grid refined twice per axis.
    /// The Nyquist coefficient is split evenly between `+n/2` and `-n/2`.
    pub fn upsample2(&self, data: &[C64]) -> Vec<C64> {
        let fine = self
            .grid
            .refined(2)
            .expect("refining a valid grid stays valid");
        let dim = self.grid.dim();
        let mut spec = data.to_vec();
        self.forward(&mut spec);
        let mut padded = vec![C64::new(0.0, 0.0); fine.len()];
        for (flat, &c) in spec.iter().enumerate() {
            let idx = self.grid.index(flat);
            // per-axis list of (fine index, weight)
            let mut targets: [[(usize, f64); 2]; 2] = [[(0, 1.0); 2]; 2];
            let mut counts = [1usize; 2];
            for a in 0..dim {
                let n = self.grid.points(a);
                let i = idx[a];
                if i < n / 2 {
                    targets[a][0] = (i, 1.0);
                } else if i > n / 2 {
                    targets[a][0] = (i + n, 1.0);
                } else {
                    targets[a] = [(n / 2, 0.5), (n / 2 + n, 0.5)];
                    counts[a] = 2;
                }
            }
            for t0 in 0..counts[0] {
                for t1 in 0..counts[1] {
                    let (i0, w0) = targets[0][t0];
                    let (i1, w1) = targets[1][t1];
                    let f = fine.flat([i0, i1]);
                    padded[f] += c * (w0 * w1);
                }
            }
        }
        let fine_spec = Spectral::new(&fine);
        for (a, plan) in fine_spec.plans.iter().enumerate() {
            fft_axis(&mut padded, &fine_spec.shape, a, plan.fft(true));
        }
        let s = 1.0 / self.grid.len() as f64;
        padded.iter_mut().for_each(|v| *v *= s);
        padded
    }
}

pub fn to_complex(values: &[f64]) -> Vec<C64> {
    values.iter().map(|&v| C64::new(v, 0.0)).collect()
}

/// Wavenumbers for an axis of `n` points over length `extent`, FFT order.
pub fn wavenumbers(n: usize, extent: f64) -> Vec<f64> {
    fft_frequencies(n, extent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mode(grid: &SpatialGrid, m: [f64; 2]) -> Vec<C64> {
        (0..grid.len())
            .map(|i| {
                let x = grid.node(i);
                let ph = 2.0 * PI * (m[0] * x[0] / grid.extent(0) + m[1] * x[1] / grid.extent(1));
                C64::from_polar(1.0, ph)
            })
            .collect()
    }

    #[test]
    fn forward_inverse_roundtrip_2d() {
        let g = SpatialGrid::new(&[8, 16], &[1.0, 3.0]).unwrap();
        let s = Spectral::new(&g);
        let data: Vec<C64> = (0..g.len())
            .map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut work = data.clone();
        s.forward(&mut work);
        s.inverse(&mut work);
        for (a, b) in work.iter().zip(&data) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_mode_2d() {
        let g = SpatialGrid::new(&[16, 8], &[2.0, 1.0]).unwrap();
        let s = Spectral::new(&g);
        let f = mode(&g, [3.0, -2.0]);
        let dy = s.derivative(&f, 1);
        let k = -2.0 * 2.0 * PI / 1.0;
        for (d, v) in dy.iter().zip(&f) {
            assert!((d - C64::new(0.0, k) * v).norm() < 1e-12);
        }
        let lap = s.laplacian(&f);
        let kx = 3.0 * 2.0 * PI / 2.0;
        for (d, v) in lap.iter().zip(&f) {
            assert!((d + (kx * kx + k * k) * v).norm() < 1e-10);
        }
    }

    #[test]
    fn upsample_reproduces_interpolant() {
        let g = SpatialGrid::line(16, 2.0).unwrap();
        let s = Spectral::new(&g);
        let f: Vec<C64> = (0..16)
            .map(|i| {
                let x = g.node(i)[0];
                C64::new(
                    (PI * x).cos() + 0.2 * (3.0 * PI * x).sin(),
                    (2.0 * PI * x).sin(),
                )
            })
            .collect();
        let up = s.upsample2(&f);
        assert_eq!(up.len(), 32);
        for (j, v) in up.iter().enumerate() {
            let x = j as f64 * 2.0 / 32.0;
            let exact = C64::new(
                (PI * x).cos() + 0.2 * (3.0 * PI * x).sin(),
                (2.0 * PI * x).sin(),
            );
            assert!((v - exact).norm() < 1e-13, "node {j}");
        }
    }

    #[test]
    fn nyquist_cosine_upsamples_to_cosine() {
        let g = SpatialGrid::line(8, 8.0).unwrap();
        let s = Spectral::new(&g);
        let f: Vec<C64> = (0..8)
            .map(|i| C64::new((PI * i as f64).cos(), 0.0))
            .collect();
        let up = s.upsample2(&f);
        for (j, v) in up.iter().enumerate() {
            let x = j as f64 * 0.5;
            assert!((v.re - (PI * x).cos()).abs() < 1e-14);
            assert!(v.im.abs() < 1e-14);
        }
    }
}
