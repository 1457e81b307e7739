//! Inversion of strictly monotone scalar maps.

use crate::error::{Error, Result};

/// Solves `f(x) = target` on `[lo, hi]` for a strictly monotone `f`.
///
/// Illinois-modified regula falsi with a bisection step whenever the secant
/// update stalls, so convergence is never slower than bisection. Stops when
/// `|f(x) - target| <= tol` or the bracket has collapsed to a few ulps.
pub fn invert_monotone<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let (mut a, mut b) = bracket;
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let fa0 = f(a);
    let fb0 = f(b);
    let mut ga = fa0 - target;
    let mut gb = fb0 - target;
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if !(ga.is_finite() && gb.is_finite()) || ga.signum() == gb.signum() {
        return Err(Error::Bracket {
            lo: a,
            hi: b,
            f_lo: fa0,
            f_hi: fb0,
            target,
        });
    }
    let mut side = 0i8;
    for _ in 0..400 {
        let width = b - a;
        let mut x = (a * gb - b * ga) / (gb - ga);
        if !(x > a && x < b) || !x.is_finite() {
            x = 0.5 * (a + b);
        }
        let gx = f(x) - target;
        if gx.abs() <= tol || width <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        if gx.signum() == ga.signum() {
            a = x;
            ga = gx;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            gb = gx;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        // Force a bisection when regula falsi shrinks the bracket too slowly.
        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            let gm = f(m) - target;
            if gm.abs() <= tol {
                return Ok(m);
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
            } else {
                b = m;
                gb = gm;
            }
            side = 0;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_root() {
        let x = invert_monotone(f64::exp, 1.0, (-5.0, 5.0), 1e-14).unwrap();
        assert!(x.abs() < 1e-13);
    }

    #[test]
    fn decreasing_map() {
        let x = invert_monotone(|x: f64| (-x).exp(), 0.5, (-3.0, 3.0), 1e-15).unwrap();
        assert!((x - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn unbracketed_target() {
        let e = invert_monotone(f64::exp, -1.0, (-5.0, 5.0), 1e-12).unwrap_err();
        assert!(matches!(e, Error::Bracket { .. }));
    }
}
