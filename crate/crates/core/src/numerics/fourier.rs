//! Trapezoid Fourier inversion of rapidly decaying characteristic functions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::grid::{GridFunction, TailModel};
use crate::error::{Error, Result};

/// Density values f(x) = (1/2pi) int e^{-i xi x} charfn(xi) d(xi), by the trapezoid
/// rule on [-cutoff, cutoff] with spacing `xi_step`.
///
/// Fails with [`Error::Cutoff`] when `|charfn(+-cutoff)|` exceeds `1e-12 |charfn(0)|`.
pub fn fourier_invert<F>(charfn: F, x_grid: &[f64], xi_cutoff: f64, xi_step: f64) -> Result<GridFunction>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    if !(xi_cutoff > 0.0 && xi_step > 0.0 && xi_step < xi_cutoff) {
        return Err(Error::Input(format!(
            "need 0 < xi_step < xi_cutoff, got step {xi_step} and cutoff {xi_cutoff}"
        )));
    }
    let scale = charfn(0.0).norm().max(f64::MIN_POSITIVE);
    let edge = charfn(xi_cutoff).norm().max(charfn(-xi_cutoff).norm());
    if edge > 1e-12 * scale {
        return Err(Error::Cutoff {
            cutoff: xi_cutoff,
            magnitude: edge,
        });
    }
    let m = (xi_cutoff / xi_step).ceil() as i64;
    let h = xi_cutoff / m as f64;
    let samples: Vec<(f64, Complex64)> = (-m..=m)
        .map(|j| {
            let xi = h * j as f64;
            let w = if j.abs() == m { 0.5 } else { 1.0 };
            (xi, charfn(xi) * w)
        })
        .collect();
    let ys: Vec<f64> = x_grid
        .par_iter()
        .map(|&x| {
            let s: Complex64 = samples
                .iter()
                .map(|(xi, c)| c * Complex64::from_polar(1.0, -xi * x))
                .sum();
            s.re * h / (2.0 * PI)
        })
        .collect();
    GridFunction::new(x_grid.to_vec(), ys, Some(TailModel::Zero))
}
