//! Tabulated functions on strictly increasing grids.

use serde::Serialize;

use crate::error::{Error, Result};

/// Behaviour of a tabulated function outside its grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailModel {
    /// Identically zero outside the grid.
    Zero,
    /// Constant limits, as for a distribution function.
    Constant { left: f64, right: f64 },
    /// Values bounded by `amplitude * exp(-x^2 / (2 sd^2))` outside the grid.
    Gaussian { sd: f64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub tail_model: Option<TailModel>,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, tail_model: Option<TailModel>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Input(format!(
                "grid needs matching lengths >= 2, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("grid abscissae must be strictly increasing".into()));
        }
        Ok(Self { xs, ys, tail_model })
    }

    /// Samples `f` on `n` equispaced points of [lo, hi].
    pub fn sample<F: FnMut(f64) -> f64>(lo: f64, hi: f64, n: usize, mut f: F) -> Result<Self> {
        let xs = linspace(lo, hi, n);
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, ys, None)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Piecewise-linear interpolation, falling back on the tail model outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return match self.tail_model {
                Some(TailModel::Zero) => 0.0,
                Some(TailModel::Constant { left, right }) => {
                    if x < self.xs[0] {
                        left
                    } else {
                        right
                    }
                }
                Some(TailModel::Gaussian { .. }) | None => {
                    if x < self.xs[0] {
                        self.ys[0]
                    } else {
                        self.ys[n - 1]
                    }
                }
            };
        }
        let i = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.ys[i],
            Err(i) => i,
        };
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = (x - x0) / (x1 - x0);
        self.ys[i - 1] * (1.0 - t) + self.ys[i] * t
    }

    /// Trapezoid rule over the grid.
    pub fn trapezoid(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    pub fn sup_abs(&self) -> f64 {
        self.ys.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.ys.windows(2).all(|w| w[1] >= w[0])
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i + 1 == n { hi } else { lo + h * i as f64 })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridFunction::new(vec![0.0], vec![1.0], None).is_err());
        assert!(GridFunction::new(vec![0.0, 0.0], vec![1.0, 1.0], None).is_err());
        assert!(GridFunction::new(vec![0.0, 1.0], vec![1.0], None).is_err());
    }

    #[test]
    fn interpolation_and_tails() {
        let g = GridFunction::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.5, 1.0],
            Some(TailModel::Constant { left: 0.0, right: 1.0 }),
        )
        .unwrap();
        assert_eq!(g.eval(0.5), 0.25);
        assert_eq!(g.eval(-3.0), 0.0);
        assert_eq!(g.eval(5.0), 1.0);
        assert!((g.trapezoid() - 1.0).abs() < 1e-15);
    }
}
