//! Adaptive Gauss-Legendre quadrature with bisection error estimates, plus
//! whole-line integration with an analytic Gaussian tail bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const GL_ORDER: usize = 20;

/// Outcome of a quadrature call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

/// Gaussian bound `|f(x)| <= amplitude * exp(-(x - mean)^2 / (2 sd^2))` valid
/// outside the core interval used by [`integrate_line`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianEnvelope {
    pub mean: f64,
    pub sd: f64,
    pub amplitude: f64,
}

impl GaussianEnvelope {
    pub fn new(mean: f64, sd: f64, amplitude: f64) -> Self {
        Self {
            mean,
            sd,
            amplitude,
        }
    }

    /// Mass of the envelope outside `[mean - k sd, mean + k sd]`.
    pub fn tail_mass(&self, k: f64) -> f64 {
        self.amplitude * self.sd * (2.0 * PI).sqrt() * erfc(k / std::f64::consts::SQRT_2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    pub initial_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_panels: 4000,
            initial_panels: 8,
        }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn with_abs(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_initial_panels(mut self, n: usize) -> Self {
        self.initial_panels = n.max(1);
        self
    }
}

struct Rule {
    nodes: [f64; GL_ORDER],
    weights: [f64; GL_ORDER],
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(GL_ORDER);
        let mut r = Rule {
            nodes: [0.0; GL_ORDER],
            weights: [0.0; GL_ORDER],
        };
        r.nodes.copy_from_slice(&nodes);
        r.weights.copy_from_slice(&weights);
        r
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed 20-point Gauss-Legendre rule on [a, b]; also returns the integral of |f|.
pub fn gl_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let r = rule();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    let mut sa = 0.0;
    for i in 0..GL_ORDER {
        let v = f(c + h * r.nodes[i]);
        s += r.weights[i] * v;
        sa += r.weights[i] * v.abs();
    }
    (s * h, sa * h.abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    abs_value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn make_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, coarse: Option<f64>) -> Panel {
    let m = 0.5 * (a + b);
    let (l, la) = gl_panel(f, a, m);
    let (r, ra) = gl_panel(f, m, b);
    let whole = match coarse {
        Some(v) => v,
        None => gl_panel(f, a, b).0,
    };
    let value = l + r;
    Panel {
        a,
        b,
        value,
        abs_value: la + ra,
        err: (whole - value).abs(),
    }
}

/// Globally adaptive integration of `f` over the finite interval [a, b].
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadratureResult> {
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            evaluations: 1,
        });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Input(format!("integration limits must be finite, got [{a}, {b}]")));
    }
    let per_panel = 3 * GL_ORDER;
    let n0 = opts.initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut heap = BinaryHeap::with_capacity(2 * n0);
    let mut evaluations = 0;
    for i in 0..n0 {
        let lo = a + width * i as f64;
        let hi = if i + 1 == n0 { b } else { lo + width };
        heap.push(make_panel(&mut f, lo, hi, None));
        evaluations += per_panel;
    }
    let scale = a.abs().max(b.abs()).max((b - a).abs());
    loop {
        let (value, err, abs_value) = heap.iter().fold((0.0, 0.0, 0.0), |acc, p| {
            (acc.0 + p.value, acc.1 + p.err, acc.2 + p.abs_value)
        });
        let target = (opts.rel_tol * value.abs())
            .max(opts.abs_tol)
            .max(64.0 * f64::EPSILON * abs_value);
        if err <= target || !value.is_finite() {
            if !value.is_finite() {
                return Err(Error::ToleranceNotMet {
                    estimate: value,
                    error_estimate: f64::INFINITY,
                });
            }
            return Ok(QuadratureResult {
                value,
                abs_error_estimate: err,
                evaluations,
            });
        }
        if heap.len() >= opts.max_panels {
            return Err(Error::ToleranceNotMet {
                estimate: value,
                error_estimate: err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        if (worst.b - worst.a).abs() <= 1e-13 * scale {
            // Panel cannot be split further in floating point; accept it as is.
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        let m = 0.5 * (worst.a + worst.b);
        let left = make_panel(&mut f, worst.a, m, None);
        let right = make_panel(&mut f, m, worst.b, None);
        evaluations += 2 * per_panel;
        heap.push(left);
        heap.push(right);
    }
}

/// Adaptive integration of a vector of integrands sharing their evaluation points.
///
/// Each component must meet its own tolerance; the panel with the largest
/// error-to-target ratio is bisected first.
pub fn integrate_many<const N: usize, F: FnMut(f64) -> [f64; N]>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<[f64; N]> {
    if a == b {
        return Ok([0.0; N]);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Input(format!("integration limits must be finite, got [{a}, {b}]")));
    }
    struct PanelN<const N: usize> {
        a: f64,
        b: f64,
        value: [f64; N],
        abs_value: [f64; N],
        err: [f64; N],
        halves: [[f64; N]; 2],
    }
    let r = rule();
    let mut gl = |lo: f64, hi: f64| {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let mut s = [0.0; N];
        let mut sa = [0.0; N];
        for i in 0..GL_ORDER {
            let v = f(c + h * r.nodes[i]);
            for k in 0..N {
                s[k] += r.weights[i] * v[k];
                sa[k] += r.weights[i] * v[k].abs();
            }
        }
        (s.map(|x| x * h), sa.map(|x| x * h.abs()))
    };
    let mut make = |lo: f64, hi: f64, whole: Option<[f64; N]>| {
        let m = 0.5 * (lo + hi);
        let (l, la) = gl(lo, m);
        let (rr, ra) = gl(m, hi);
        let whole = whole.unwrap_or_else(|| gl(lo, hi).0);
        let mut p = PanelN { a: lo, b: hi, value: [0.0; N], abs_value: [0.0; N], err: [0.0; N], halves: [l, rr] };
        for k in 0..N {
            p.value[k] = l[k] + rr[k];
            p.abs_value[k] = la[k] + ra[k];
            p.err[k] = (whole[k] - p.value[k]).abs();
        }
        p
    };
    let n0 = opts.initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut panels: Vec<PanelN<N>> = (0..n0)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == n0 { b } else { lo + width };
            make(lo, hi, None)
        })
        .collect();
    let scale = a.abs().max(b.abs()).max((b - a).abs());
    loop {
        let mut value = [0.0; N];
        let mut err = [0.0; N];
        let mut abs_value = [0.0; N];
        for p in &panels {
            for k in 0..N {
                value[k] += p.value[k];
                err[k] += p.err[k];
                abs_value[k] += p.abs_value[k];
            }
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::ToleranceNotMet { estimate: f64::NAN, error_estimate: f64::INFINITY });
        }
        let target: [f64; N] = std::array::from_fn(|k| {
            (opts.rel_tol * value[k].abs()).max(opts.abs_tol).max(64.0 * f64::EPSILON * abs_value[k])
        });
        if (0..N).all(|k| err[k] <= target[k]) {
            return Ok(value);
        }
        if panels.len() >= opts.max_panels {
            let (k, _) = (0..N).map(|k| (k, err[k] / target[k])).fold((0, 0.0), |m, c| if c.1 > m.1 { c } else { m });
            return Err(Error::ToleranceNotMet { estimate: value[k], error_estimate: err[k] });
        }
        let ratio = |p: &PanelN<N>| (0..N).map(|k| p.err[k] / target[k]).fold(0.0, f64::max);
        let (idx, _) = panels
            .iter()
            .enumerate()
            .map(|(i, p)| (i, ratio(p)))
            .fold((0, -1.0), |m, c| if c.1 > m.1 { c } else { m });
        let worst = panels.swap_remove(idx);
        if (worst.b - worst.a).abs() <= 1e-13 * scale {
            panels.push(PanelN { err: [0.0; N], ..worst });
            continue;
        }
        let m = 0.5 * (worst.a + worst.b);
        panels.push(make(worst.a, m, Some(worst.halves[0])));
        panels.push(make(m, worst.b, Some(worst.halves[1])));
    }
}

/// Integral of `f` over the real line.
///
/// With an envelope, the core interval `[mean - k sd, mean + k sd]` is integrated
/// adaptively and the envelope's tail mass is added to the error estimate; `k`
/// starts at 12 and grows until the tail bound is below the requested tolerance.
/// Without an envelope the line is mapped onto (-1, 1) by `x = t / (1 - t^2)`.
pub fn integrate_line<F: FnMut(f64) -> f64>(
    f: F,
    rel_tol: f64,
    envelope: Option<GaussianEnvelope>,
) -> Result<QuadratureResult> {
    integrate_line_with(f, &QuadOptions::rel(rel_tol), envelope)
}

pub fn integrate_line_with<F: FnMut(f64) -> f64>(
    mut f: F,
    opts: &QuadOptions,
    envelope: Option<GaussianEnvelope>,
) -> Result<QuadratureResult> {
    match envelope {
        Some(env) => {
            if !(env.sd > 0.0 && env.amplitude >= 0.0) {
                return Err(Error::Input("envelope needs sd > 0 and amplitude >= 0".into()));
            }
            let mut k = 12.0;
            let core = integrate(&mut f, env.mean - k * env.sd, env.mean + k * env.sd, opts)?;
            let mut tail = env.tail_mass(k);
            let tol = (opts.rel_tol * core.value.abs()).max(opts.abs_tol);
            let mut result = core;
            while tail > tol && k < 40.0 {
                k *= 1.5;
                result = integrate(&mut f, env.mean - k * env.sd, env.mean + k * env.sd, opts)?;
                tail = env.tail_mass(k);
            }
            Ok(QuadratureResult {
                value: result.value,
                abs_error_estimate: result.abs_error_estimate + tail,
                evaluations: result.evaluations,
            })
        }
        None => {
            let g = |t: f64| {
                let d = 1.0 - t * t;
                let x = t / d;
                let jac = (1.0 + t * t) / (d * d);
                let v = f(x);
                if v == 0.0 {
                    0.0
                } else {
                    v * jac
                }
            };
            integrate(g, -1.0, 1.0, &opts.with_initial_panels(opts.initial_panels.max(16)))
        }
    }
}

/// Composite Simpson rule on a uniform grid of `2m` panels over [a, b].
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_integration_matches_scalar() {
        let opts = QuadOptions::rel(1e-13);
        let v = integrate_many(|x: f64| [(-x * x).exp(), x.sin().powi(2), 1.0 / (1.0 + x * x)], -8.0, 8.0, &opts).unwrap();
        assert!((v[0] - PI.sqrt()).abs() < 1e-13);
        assert!((v[1] - (8.0 - (16.0f64).sin() / 2.0)).abs() < 1e-12);
        assert!((v[2] - 2.0 * 8f64.atan()).abs() < 1e-13);
    }

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(20);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m38: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((m38 - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate_line(
            |x| (-0.5 * x * x).exp(),
            1e-12,
            Some(GaussianEnvelope::new(0.0, 1.0, 1.0)),
        )
        .unwrap();
        assert!((r.value - (2.0 * PI).sqrt()).abs() < 1e-11);
        assert!(r.abs_error_estimate >= 0.0 && r.evaluations > 0);
    }

    #[test]
    fn zero_integrand_is_exact() {
        let r = integrate_line(|_| 0.0, 1e-12, None).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn mapped_line_matches_envelope_route() {
        let f = |x: f64| (-0.5 * x * x - 0.25 * x.powi(4)).exp();
        let a = integrate_line(f, 1e-13, None).unwrap().value;
        let b = integrate_line(f, 1e-13, Some(GaussianEnvelope::new(0.0, 1.0, 1.0)))
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn cancelling_integrand_converges_at_roundoff() {
        let r = integrate(|x: f64| x * (-x * x).exp(), -5.0, 5.0, &QuadOptions::rel(1e-14)).unwrap();
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn too_few_panels_reports_best_estimate() {
        let opts = QuadOptions {
            rel_tol: 1e-15,
            abs_tol: 0.0,
            max_panels: 2,
            initial_panels: 1,
        };
        let err = integrate(|x: f64| (1.0 / (x + 1e-3)).sqrt(), 0.0, 1.0, &opts).unwrap_err();
        assert!(matches!(err, Error::ToleranceNotMet { .. }));
    }
}
