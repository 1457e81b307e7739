//! Penalized Gaussian laws H_gamma(Phi) with density Phi(x/gamma^2) exp(-x^2/(2 gamma^2)) / c_gamma,
//! the Laplace and Fourier duality identities, Hermite (Edgeworth) coefficients and the
//! signed measure with Fourier transform exp(P(xi) - gamma^2 xi^2 / 2).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::{
    fourier_invert, gauss_hermite, hermite_he_all, integrate_line, integrate_line_with, GaussianEnvelope,
    GridFunction, Poly, QuadOptions,
};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type ComplexFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// A positive weight Phi together with Psi = log Phi and Psi'.
#[derive(Clone)]
pub struct PenalizingFunction {
    pub name: String,
    eval: RealFn,
    log_eval: RealFn,
    dlog_eval: RealFn,
    complex_eval: Option<ComplexFn>,
    /// sup Phi when known; lets expectations use a Gaussian envelope.
    pub upper_bound: Option<f64>,
    pub integrable_on_line: bool,
    pub phi_at_zero_is_one: bool,
    pub even_symmetric: bool,
}

impl std::fmt::Debug for PenalizingFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PenalizingFunction")
            .field("name", &self.name)
            .field("upper_bound", &self.upper_bound)
            .field("complex", &self.complex_eval.is_some())
            .finish()
    }
}

impl PenalizingFunction {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        log_eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dlog_eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            log_eval: Arc::new(log_eval),
            dlog_eval: Arc::new(dlog_eval),
            complex_eval: None,
            upper_bound: None,
            integrable_on_line: false,
            phi_at_zero_is_one: false,
            even_symmetric: false,
        }
    }

    pub fn with_complex(mut self, f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        self.complex_eval = Some(Arc::new(f));
        self
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.eval)(u)
    }

    pub fn log_eval(&self, u: f64) -> f64 {
        (self.log_eval)(u)
    }

    pub fn dlog_eval(&self, u: f64) -> f64 {
        (self.dlog_eval)(u)
    }

    pub fn complex_eval(&self, z: Complex64) -> Result<Complex64> {
        match &self.complex_eval {
            Some(f) => Ok(f(z)),
            None => Err(Error::Input(format!("{} has no complex extension", self.name))),
        }
    }

    pub fn has_complex(&self) -> bool {
        self.complex_eval.is_some()
    }

    /// Checks Phi > 0, Phi(0) = 1 when flagged, Psi = log Phi and Psi' against a central difference.
    pub fn validate(&self, probes: &[f64]) -> Result<()> {
        if self.phi_at_zero_is_one && (self.eval(0.0) - 1.0).abs() > 1e-14 {
            return Err(Error::Input(format!("{}: Phi(0) = {} != 1", self.name, self.eval(0.0))));
        }
        for &u in probes {
            let v = self.eval(u);
            if !(v > 0.0) {
                return Err(Error::Input(format!("{}: Phi({u}) = {v} is not positive", self.name)));
            }
            if (v.ln() - self.log_eval(u)).abs() > 1e-10 * (1.0 + v.ln().abs()) {
                return Err(Error::Input(format!("{}: log Phi inconsistent at {u}", self.name)));
            }
            let h = 1e-5 * (1.0 + u.abs());
            let fd = (self.log_eval(u + h) - self.log_eval(u - h)) / (2.0 * h);
            let d = self.dlog_eval(u);
            if (fd - d).abs() > 1e-6 * (1.0 + d.abs()) {
                return Err(Error::Input(format!("{}: Psi' = {d} but finite difference gives {fd} at {u}", self.name)));
            }
        }
        Ok(())
    }

    /// Largest |Phi(i x) - Phi(x)| over the grid; a spot check, not a proof.
    pub fn imaginary_symmetry_defect(&self, grid: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &x in grid {
            let v = self.complex_eval(Complex64::new(0.0, x))?;
            worst = worst.max((v - self.eval(x)).norm());
        }
        Ok(worst)
    }
}

/// Phi_C(u) = exp(-C u^4 / 4).
pub fn phi_quartic(c: f64) -> Result<PenalizingFunction> {
    if !(c > 0.0 && c <= 3.0) {
        return Err(invalid("C", c, "must lie in (0, 3]"));
    }
    let mut p = PenalizingFunction::new(
        format!("quartic(C={c})"),
        move |u| (-0.25 * c * u.powi(4)).exp(),
        move |u| -0.25 * c * u.powi(4),
        move |u| -c * u.powi(3),
    )
    .with_complex(move |z| (-0.25 * c * z.powi(4)).exp());
    p.upper_bound = Some(1.0);
    p.integrable_on_line = true;
    p.phi_at_zero_is_one = true;
    p.even_symmetric = true;
    Ok(p)
}

/// Phi = 1: the Gaussian itself.
pub fn phi_one() -> PenalizingFunction {
    let mut p = PenalizingFunction::new("one", |_| 1.0, |_| 0.0, |_| 0.0).with_complex(|_| Complex64::new(1.0, 0.0));
    p.upper_bound = Some(1.0);
    p.phi_at_zero_is_one = true;
    p.even_symmetric = true;
    p
}

/// Phi(t) = exp(1 - t), normalized at t = 1; used on the half-line for subordinators.
pub fn phi_exp_affine() -> PenalizingFunction {
    PenalizingFunction::new("exp(1-t)", |t| (1.0 - t).exp(), |t| 1.0 - t, |_| -1.0).with_complex(|z| (1.0 - z).exp())
}

const GAUSS_REL: f64 = 1e-13;

fn std_normal_env(phi: &PenalizingFunction, mean: f64) -> Option<GaussianEnvelope> {
    phi.upper_bound.map(|m| GaussianEnvelope::new(mean, 1.0, m / (2.0 * PI).sqrt()))
}

/// E[Phi(G/gamma + u)] for a standard normal G, by quadrature in the G variable.
pub fn gaussian_shift_expectation(phi: &PenalizingFunction, gamma: f64, u: f64) -> Result<f64> {
    let inv = 1.0 / (2.0 * PI).sqrt();
    Ok(integrate_line(|g| (phi.log_eval(g / gamma + u) - 0.5 * g * g).exp() * inv, GAUSS_REL, std_normal_env(phi, 0.0))?.value)
}

/// E[Phi(G/gamma + i theta)] for a standard normal G, integrated along Im G = tau.
///
/// Any tau gives the same value; `tau = 0` is the literal definition but can suffer
/// heavy cancellation when Phi grows off the real axis.
pub fn gaussian_complex_shift_expectation(phi: &PenalizingFunction, gamma: f64, theta: f64, tau: f64) -> Result<Complex64> {
    phi.complex_eval(Complex64::new(0.0, theta))?;
    let inv = 1.0 / (2.0 * PI).sqrt();
    let f = |s: f64| {
        let z = Complex64::new(s / gamma, theta + tau / gamma);
        let v = phi.complex_eval(z).unwrap_or(Complex64::new(f64::NAN, 0.0));
        v * Complex64::new(-0.5 * s * s + 0.5 * tau * tau, -tau * s).exp() * inv
    };
    complex_line_integral(f)
}

fn complex_line_integral<F: Fn(f64) -> Complex64>(f: F) -> Result<Complex64> {
    let opts = QuadOptions::rel(GAUSS_REL).with_abs(1e-300);
    let re = integrate_line_with(|x| f(x).re, &opts, None)?.value;
    let im = integrate_line_with(|x| f(x).im, &opts, None)?.value;
    Ok(Complex64::new(re, im))
}

/// Log of the peak integrand modulus of the Fourier-side integral along Im x = lambda theta gamma^2,
/// relative to the target scale; smaller is better conditioned.
pub fn contour_log_peak(phi: &PenalizingFunction, gamma: f64, theta: f64, lambda: f64) -> f64 {
    let g2 = gamma * gamma;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..=4000 {
        let y = gamma * (-40.0 + 0.02 * k as f64);
        let z = Complex64::new(y / g2, lambda * theta);
        let lv = phi.complex_eval(z).map(|v| v.norm().ln()).unwrap_or(f64::INFINITY);
        worst = worst.max(lv - 0.5 * y * y / g2);
    }
    worst + 0.5 * theta * theta * g2 * (1.0 - lambda) * (1.0 - lambda)
}

/// Two distinct contour heights (as fractions of theta gamma^2) with the best conditioning:
/// the first for the density side, the second for the Gaussian-shift side.
pub fn contour_pair(phi: &PenalizingFunction, gamma: f64, theta: f64) -> (f64, f64) {
    let lams: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64).collect();
    let peaks: Vec<f64> = lams.iter().map(|&l| contour_log_peak(phi, gamma, theta, l)).collect();
    let best = (0..lams.len()).min_by(|&i, &j| peaks[i].total_cmp(&peaks[j])).unwrap_or(0);
    let second = (0..lams.len())
        .filter(|&i| (lams[i] - lams[best]).abs() >= 0.2 - 1e-12)
        .min_by(|&i, &j| peaks[i].total_cmp(&peaks[j]))
        .unwrap_or(best);
    (lams[best], lams[second])
}

/// c_gamma = gamma sqrt(2 pi) E[Phi(G/gamma)].
pub fn normalization(phi: &PenalizingFunction, gamma: f64) -> Result<f64> {
    Ok(gamma * (2.0 * PI).sqrt() * gaussian_shift_expectation(phi, gamma, 0.0)?)
}

/// Density of H_gamma(Phi).
#[derive(Debug, Clone)]
pub struct PenalizedLaw {
    pub phi: PenalizingFunction,
    pub gamma: f64,
    pub c_gamma: f64,
}

impl PenalizedLaw {
    pub fn new(phi: PenalizingFunction, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", gamma, "must be positive and finite"));
        }
        let c_gamma = normalization(&phi, gamma)?;
        Ok(Self { phi, gamma, c_gamma })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let g2 = self.gamma * self.gamma;
        (self.phi.log_eval(x / g2) - 0.5 * x * x / g2).exp() / self.c_gamma
    }

    /// E[e^{uH}] / E[e^{u X_gamma}] with X_gamma ~ N(0, gamma^2), integrated in the x variable.
    pub fn laplace_ratio(&self, u: f64) -> Result<f64> {
        let g = self.gamma;
        let g2 = g * g;
        // e^{ux} e^{-x^2/(2g^2)} / e^{u^2 g^2/2} = e^{-(x - u g^2)^2/(2 g^2)}
        let env = self.phi.upper_bound.map(|m| GaussianEnvelope::new(u * g2, g, m / self.c_gamma));
        let num = integrate_line(
            |x| {
                let d = x - u * g2;
                (self.phi.log_eval(x / g2) - 0.5 * d * d / g2).exp() / self.c_gamma
            },
            GAUSS_REL,
            env,
        )?;
        Ok(num.value)
    }

    /// E[e^{i theta H}] / e^{-theta^2 gamma^2 / 2}, on the best-conditioned contour.
    pub fn fourier_ratio(&self, theta: f64) -> Result<Complex64> {
        let (lam, _) = contour_pair(&self.phi, self.gamma, theta);
        self.fourier_ratio_on(theta, lam)
    }

    /// The same quantity integrated along Im x = lambda theta gamma^2. With lambda = 0 this is
    /// the plain transform of the density; larger lambda trades the Gaussian cancellation
    /// exp(-theta^2 gamma^2/2) for growth of Phi off the real axis.
    pub fn fourier_ratio_on(&self, theta: f64, lambda: f64) -> Result<Complex64> {
        self.phi.complex_eval(Complex64::new(0.0, 0.0))?;
        let g2 = self.gamma * self.gamma;
        let shift = lambda * theta * g2;
        let prefactor = 0.5 * theta * theta * g2 * (1.0 - lambda) * (1.0 - lambda);
        let f = |y: f64| {
            let phi = self
                .phi
                .complex_eval(Complex64::new(y, shift) / g2)
                .unwrap_or(Complex64::new(f64::NAN, 0.0));
            let phase = Complex64::new(-0.5 * y * y / g2 + prefactor, theta * y * (1.0 - lambda));
            phi * phase.exp() / self.c_gamma
        };
        complex_line_integral(f)
    }
}

/// |E[e^{uH}]/E[e^{uX}] - E[Phi(X/gamma^2 + u)]/E[Phi(X/gamma^2)]|.
pub fn laplace_duality_gap(phi: &PenalizingFunction, gamma: f64, u: f64) -> Result<f64> {
    let law = PenalizedLaw::new(phi.clone(), gamma)?;
    let lhs = law.laplace_ratio(u)?;
    let rhs = gaussian_shift_expectation(phi, gamma, u)? / gaussian_shift_expectation(phi, gamma, 0.0)?;
    Ok((lhs - rhs).abs())
}

/// |E[e^{i theta H}]/e^{-theta^2 gamma^2/2} - E[Phi(G/gamma + i theta)]/E[Phi(G/gamma)]|.
pub fn fourier_duality_gap(phi: &PenalizingFunction, gamma: f64, theta: f64) -> Result<f64> {
    if !phi.has_complex() {
        return Err(Error::Input(format!("{} has no complex extension", phi.name)));
    }
    let law = PenalizedLaw::new(phi.clone(), gamma)?;
    let (lam_density, lam_shift) = contour_pair(phi, gamma, theta);
    let lhs = law.fourier_ratio_on(theta, lam_density)?;
    // Im x = lambda theta gamma^2 corresponds to Im G = (lambda - 1) theta gamma.
    let tau = (lam_shift - 1.0) * theta * gamma;
    let rhs = gaussian_complex_shift_expectation(phi, gamma, theta, tau)? / gaussian_shift_expectation(phi, gamma, 0.0)?;
    Ok((lhs - rhs).norm())
}

/// E[Phi(X/gamma^2 + u)] with X ~ N(0, gamma^2), integrated in the X variable.
pub fn tilt_side_x_variable(phi: &PenalizingFunction, gamma: f64, u: f64) -> Result<f64> {
    let g2 = gamma * gamma;
    let inv = 1.0 / (gamma * (2.0 * PI).sqrt());
    let env = phi.upper_bound.map(|m| GaussianEnvelope::new(0.0, gamma, m * inv));
    Ok(integrate_line(|x| (phi.log_eval(x / g2 + u) - 0.5 * x * x / g2).exp() * inv, GAUSS_REL, env)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModMode {
    Laplace,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModLimitReport {
    pub gamma: f64,
    pub u_grid: Vec<f64>,
    pub ratio_values: Vec<f64>,
    pub target_values: Vec<f64>,
    pub sup_error: f64,
}

/// Distance of the mod-* ratio at each gamma from its limit Phi on the grid.
pub fn mod_limit_check(phi: &PenalizingFunction, gammas: &[f64], u_grid: &[f64], mode: ModMode) -> Result<Vec<ModLimitReport>> {
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let law = PenalizedLaw::new(phi.clone(), gamma)?;
        let mut ratios = Vec::with_capacity(u_grid.len());
        let mut targets = Vec::with_capacity(u_grid.len());
        let mut sup = 0.0f64;
        for &u in u_grid {
            let (r, t) = match mode {
                ModMode::Laplace => (law.laplace_ratio(u)?, phi.eval(u)),
                ModMode::Fourier => {
                    let r = law.fourier_ratio(u)?;
                    let t = phi.complex_eval(Complex64::new(0.0, u))?;
                    sup = sup.max((r - t).norm());
                    (r.re, t.re)
                }
            };
            if mode == ModMode::Laplace {
                sup = sup.max((r - t).abs());
            }
            ratios.push(r);
            targets.push(t);
        }
        out.push(ModLimitReport {
            gamma,
            u_grid: u_grid.to_vec(),
            ratio_values: ratios,
            target_values: targets,
            sup_error: sup,
        });
    }
    Ok(out)
}

pub const MAX_HERMITE_DEGREE: usize = 60;
const HERMITE_NODES: usize = 256;

/// a_k = E[He_k(G) Phi(G/gamma)] / k! for k = 0..=k_max.
pub fn hermite_coeffs(phi: &PenalizingFunction, gamma: f64, k_max: usize) -> Result<Vec<f64>> {
    if k_max > MAX_HERMITE_DEGREE {
        return Err(invalid("K", k_max as f64, "Hermite degree is capped at 60"));
    }
    let (nodes, weights) = gauss_hermite(HERMITE_NODES)?;
    let mut acc = vec![0.0; k_max + 1];
    for (x, w) in nodes.iter().zip(&weights) {
        let v = w * phi.eval(x / gamma);
        if v == 0.0 {
            continue;
        }
        for (k, he) in hermite_he_all(k_max, *x).into_iter().enumerate() {
            acc[k] += v * he;
        }
    }
    let mut fact = 1.0;
    for (k, a) in acc.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *a /= fact;
    }
    Ok(acc)
}

/// e^{-y^2/2} sum_{l <= k} a_l He_l(y); tends to Phi(y/gamma) e^{-y^2/2} = c_gamma f_H(gamma y).
pub fn edgeworth_density(coeffs: &[f64], y: f64, k_trunc: usize) -> Result<f64> {
    if k_trunc >= coeffs.len() {
        return Err(invalid("k", k_trunc as f64, "truncation exceeds available coefficients"));
    }
    let he = hermite_he_all(k_trunc, y);
    let s: f64 = coeffs.iter().zip(&he).map(|(a, h)| a * h).sum();
    Ok((-0.5 * y * y).exp() * s)
}

/// Truncated Phi-tilde(u) = sum_k a_k (i u gamma)^k / a_0, so that phi_H(u) ~ Phi-tilde(u) e^{-gamma^2 u^2/2}.
pub fn phi_tilde(coeffs: &[f64], gamma: f64, u: f64, k_max: usize) -> Result<Complex64> {
    if k_max >= coeffs.len() {
        return Err(invalid("K", k_max as f64, "degree exceeds available coefficients"));
    }
    let mut pow = Complex64::new(1.0, 0.0);
    let step = Complex64::new(0.0, u * gamma);
    let mut s = Complex64::new(0.0, 0.0);
    for a in &coeffs[..=k_max] {
        s += pow * a;
        pow *= step;
    }
    Ok(s / coeffs[0])
}

/// Density of the signed measure with Fourier transform exp(P(xi) - gamma^2 xi^2 / 2).
pub fn signed_density(p: &Poly, gamma: f64, x_grid: &[f64]) -> Result<GridFunction> {
    if p.eval(0.0) != 0.0 {
        return Err(Error::Input("P must vanish at 0".into()));
    }
    if p.coeffs.iter().skip(1).step_by(2).any(|c| *c != 0.0) {
        return Err(Error::Input("P must be even".into()));
    }
    let lead = *p.coeffs.last().unwrap_or(&0.0);
    if p.degree() > 2 && lead > 0.0 {
        return Err(Error::Input("leading coefficient of P must be <= 0 for integrability".into()));
    }
    let g2 = gamma * gamma;
    let charfn = |xi: f64| Complex64::new((p.eval(xi) - 0.5 * g2 * xi * xi).exp(), 0.0);
    let cutoff = 9.0 / gamma;
    let span = x_grid.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 20.0 * gamma;
    let step = (PI / span).min(cutoff / 2000.0);
    fourier_invert(charfn, x_grid, cutoff, step)
}

/// P(xi) = -C xi^4 / (4 gamma^8), the quartic signed-measure exponent.
pub fn quartic_exponent(c: f64, gamma: f64) -> Poly {
    Poly::new(vec![0.0, 0.0, 0.0, 0.0, -0.25 * c / gamma.powi(8)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi4::{make_dist, Phi4Params};

    #[test]
    fn quartic_weight_basics() {
        let p = phi_quartic(1.0 / 3.0).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        let v = p.complex_eval(Complex64::new(0.0, 1.0)).unwrap();
        assert!((v.re - (-1.0f64 / 12.0).exp()).abs() < 1e-15 && v.im.abs() < 1e-15);
        p.validate(&[-2.0, -0.5, 0.0, 1.0, 3.0]).unwrap();
        assert!(phi_quartic(0.0).is_err());
        assert!(phi_quartic(3.1).is_err());
    }

    #[test]
    fn quartic_law_matches_phi4() {
        let law = PenalizedLaw::new(phi_quartic(1.0 / 3.0).unwrap(), 2.0).unwrap();
        let d = make_dist(Phi4Params::new(2.0, 1.0 / 3.0).unwrap(), 1e-13).unwrap();
        for x in [-5.0, -1.0, 0.0, 0.7, 3.0] {
            assert!((law.pdf(x) - d.pdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_weight_has_no_gap() {
        let one = phi_one();
        assert!(laplace_duality_gap(&one, 2.0, 1.0).unwrap() < 1e-12);
        assert!(fourier_duality_gap(&one, 2.0, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn hermite_degree_cap() {
        assert!(hermite_coeffs(&phi_one(), 1.0, 61).is_err());
        let a = hermite_coeffs(&phi_one(), 1.0, 6).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-14);
        assert!(a[1..].iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn signed_density_rejects_bad_exponents() {
        let g = [0.0, 1.0];
        assert!(signed_density(&Poly::new(vec![1.0]), 1.0, &g).is_err());
        assert!(signed_density(&Poly::new(vec![0.0, 1.0]), 1.0, &g).is_err());
        assert!(signed_density(&Poly::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]), 1.0, &g).is_err());
    }
}
