//! Exponential rate estimation by least squares on the logarithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FLOOR: f64 = 1e-13;
pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Negated slope of `log value` against `t`.
    pub rate: f64,
    /// `C` in `C e^{-rate t}`.
    pub amplitude: f64,
    /// RMS deviation of the log series from the fitted line.
    pub residual: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// Fits `value ~ C e^{-rate t}` over samples with `t` in `window` and
/// `value > 1e-13`.
pub fn fit_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    fit_rate_with_floor(times, values, window, FLOOR)
}

pub fn fit_rate_with_floor(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    floor: f64,
) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} times for {} values",
            times.len(),
            values.len()
        )));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= window.0 && **t <= window.1 && v.is_finite() && **v > floor)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::InsufficientPoints {
            found: pts.len(),
            needed: MIN_POINTS,
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for &(t, y) in &pts {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    if stt == 0.0 {
        return Err(Error::InvalidArgument(
            "fit window spans a single time".into(),
        ));
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss: f64 = pts
        .iter()
        .map(|&(t, y)| {
            let e = y - (intercept + slope * t);
            e * e
        })
        .sum();
    Ok(RateFit {
        rate: -slope,
        amplitude: intercept.exp(),
        residual: (ss / n).sqrt(),
        points: pts.len(),
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(t1: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t1 * i as f64 / n as f64).collect()
    }

    #[test]
    fn exact_exponential() {
        let t = grid(10.0, 200);
        let v: Vec<f64> = t.iter().map(|t| 2.5 * (-3.0 * t).exp()).collect();
        let f = fit_rate(&t, &v, (0.0, 8.0)).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-10);
        assert!((f.amplitude - 2.5).abs() < 1e-9);
        assert!(f.residual < 1e-10);
    }

    #[test]
    fn constant_series_has_zero_rate() {
        let t = grid(1.0, 20);
        let f = fit_rate(&t, &[0.7; 21], (0.0, 1.0)).unwrap();
        assert!(f.rate.abs() < 1e-14);
    }

    #[test]
    fn riccati_series_rate() {
        // |1 - z(t)| for z0 = 0, K = 1 is 2 / (e^t + 1)
        let t = grid(10.0, 1000);
        let v: Vec<f64> = t.iter().map(|t| 2.0 / (t.exp() + 1.0)).collect();
        let f = fit_rate(&t, &v, (5.0, 10.0)).unwrap();
        assert!((f.rate - 1.0).abs() < 0.01);
    }

    #[test]
    fn too_few_points_above_floor() {
        let t = grid(1.0, 20);
        let mut v = vec![0.0; 21];
        v[..5].iter_mut().for_each(|x| *x = 1.0);
        assert!(matches!(
            fit_rate(&t, &v, (0.0, 1.0)),
            Err(Error::InsufficientPoints {
                found: 5,
                needed: 8
            })
        ));
    }

    proptest! {
        #[test]
        fn recovers_arbitrary_rates(rate in -2.0f64..5.0, c in 0.1f64..10.0) {
            let t = grid(4.0, 64);
            let v: Vec<f64> = t.iter().map(|t| c * (-rate * t).exp()).collect();
            let f = fit_rate(&t, &v, (0.0, 4.0)).unwrap();
            prop_assert!((f.rate - rate).abs() < 1e-10);
        }
    }
}
