//! Subordinators: Laplace exponents, exponential tilting, the inverse Upsilon of Lambda',
//! the mod-Levy duality and its Poisson and Dickman instances.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Uniform};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate, invert_monotone, QuadOptions};
use crate::penalize::PenalizingFunction;

type UDensity = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Levy measure of a subordinator.
#[derive(Clone)]
pub enum LevyMeasure {
    Atoms { positions: Vec<f64>, masses: Vec<f64> },
    /// Pi(du) = (u_density(u) / u) du on [lo, hi]; storing u * pi(u) keeps the
    /// integrands bounded for measures like du/u.
    Density { lo: f64, hi: f64, u_density: UDensity, label: String },
    /// delta_1.
    Poisson,
    /// 1{0 <= u <= 1} du/u.
    Dickman,
}

impl std::fmt::Debug for LevyMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Atoms { positions, masses } => f.debug_struct("Atoms").field("positions", positions).field("masses", masses).finish(),
            Self::Density { lo, hi, label, .. } => f.debug_struct("Density").field("lo", lo).field("hi", hi).field("label", label).finish(),
            Self::Poisson => f.write_str("Poisson"),
            Self::Dickman => f.write_str("Dickman"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevyTriplet {
    pub kill: f64,
    pub drift: f64,
    pub measure: LevyMeasure,
}

/// The Esscher transform of a triplet: Pi^{(y)}(du) = e^{-yu} Pi(du), no killing, same drift.
#[derive(Debug, Clone)]
pub struct TiltedTriplet {
    pub base: LevyTriplet,
    pub y: f64,
    pub effective: LevyTriplet,
}

const QUAD_REL: f64 = 1e-14;

fn quad(f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    Ok(integrate(f, a, b, &QuadOptions::rel(QUAD_REL))?.value)
}

/// (1 - e^{-theta u}) / u, equal to theta at u = 0.
fn one_minus_exp_over_u(theta: f64, u: f64) -> f64 {
    if u == 0.0 {
        theta
    } else {
        -(-theta * u).exp_m1() / u
    }
}

impl LevyTriplet {
    pub fn poisson() -> Self {
        Self { kill: 0.0, drift: 0.0, measure: LevyMeasure::Poisson }
    }

    pub fn dickman() -> Self {
        Self { kill: 0.0, drift: 0.0, measure: LevyMeasure::Dickman }
    }

    pub fn atoms(positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if positions.len() != masses.len() || positions.is_empty() {
            return Err(Error::Input("atoms need matching, nonempty position and mass lists".into()));
        }
        if positions.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Input("atom positions must be positive and finite".into()));
        }
        if masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Input("atom masses must be positive and finite".into()));
        }
        Ok(Self { kill: 0.0, drift: 0.0, measure: LevyMeasure::Atoms { positions, masses } })
    }

    /// Pi(du) = (u_density(u)/u) du on [lo, hi] with 0 <= lo < hi < infinity.
    pub fn density(lo: f64, hi: f64, u_density: impl Fn(f64) -> f64 + Send + Sync + 'static, label: &str) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Input(format!("density support [{lo}, {hi}] must be bounded in [0, inf)")));
        }
        Ok(Self {
            kill: 0.0,
            drift: 0.0,
            measure: LevyMeasure::Density { lo, hi, u_density: Arc::new(u_density), label: label.to_string() },
        })
    }

    pub fn with_kill_drift(mut self, kill: f64, drift: f64) -> Result<Self> {
        if !(kill >= 0.0 && drift >= 0.0) {
            return Err(Error::Input("kill and drift must be nonnegative".into()));
        }
        self.kill = kill;
        self.drift = drift;
        Ok(self)
    }

    /// Lambda(theta) = k + d theta + int (1 - e^{-theta u}) Pi(du).
    pub fn laplace_exponent(&self, theta: f64) -> Result<f64> {
        let jump = match &self.measure {
            LevyMeasure::Poisson => -(-theta).exp_m1(),
            LevyMeasure::Atoms { positions, masses } => positions.iter().zip(masses).map(|(u, m)| -m * (-theta * u).exp_m1()).sum(),
            LevyMeasure::Density { lo, hi, u_density, .. } => quad(|u| one_minus_exp_over_u(theta, u) * u_density(u), *lo, *hi)?,
            LevyMeasure::Dickman => dickman_lambda(theta)?,
        };
        Ok(self.kill + self.drift * theta + jump)
    }

    /// Lambda'(y) = d + int u e^{-yu} Pi(du); strictly decreasing.
    pub fn lambda_prime(&self, y: f64) -> Result<f64> {
        let jump = match &self.measure {
            LevyMeasure::Poisson => (-y).exp(),
            LevyMeasure::Atoms { positions, masses } => positions.iter().zip(masses).map(|(u, m)| m * u * (-y * u).exp()).sum(),
            LevyMeasure::Density { lo, hi, u_density, .. } => quad(|u| (-y * u).exp() * u_density(u), *lo, *hi)?,
            LevyMeasure::Dickman => dickman_lambda_prime(y),
        };
        Ok(self.drift + jump)
    }

    /// Open range (inf, sup) of Lambda' over the real line.
    pub fn lambda_prime_range(&self) -> (f64, f64) {
        (self.drift, f64::INFINITY)
    }

    /// Upsilon = (Lambda')^{-1}.
    pub fn upsilon(&self, x: f64) -> Result<f64> {
        let (lower, upper) = self.lambda_prime_range();
        if !(x > lower && x < upper) {
            return Err(Error::Range { value: x, lower, upper });
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.lambda_prime(lo)? < x {
            lo *= 2.0;
            if lo < -1e4 {
                return Err(Error::Range { value: x, lower, upper });
            }
        }
        while self.lambda_prime(hi)? > x {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Range { value: x, lower, upper });
            }
        }
        let tol = 1e-15 * x.abs().max(1e-300);
        invert_monotone(|y| self.lambda_prime(y).unwrap_or(f64::NAN), x, (lo, hi), tol)
    }

    /// Materializes e^{-yu} Pi(du); the killing rate is dropped.
    pub fn tilt(&self, y: f64) -> Result<TiltedTriplet> {
        if !y.is_finite() {
            return Err(invalid("y", y, "tilt parameter must be finite"));
        }
        let measure = match &self.measure {
            LevyMeasure::Poisson => LevyMeasure::Atoms { positions: vec![1.0], masses: vec![(-y).exp()] },
            LevyMeasure::Atoms { positions, masses } => LevyMeasure::Atoms {
                positions: positions.clone(),
                masses: positions.iter().zip(masses).map(|(u, m)| m * (-y * u).exp()).collect(),
            },
            LevyMeasure::Density { lo, hi, u_density, label } => {
                let inner = u_density.clone();
                LevyMeasure::Density {
                    lo: *lo,
                    hi: *hi,
                    u_density: Arc::new(move |u| (-y * u).exp() * inner(u)),
                    label: format!("exp(-{y} u) {label}"),
                }
            }
            LevyMeasure::Dickman => LevyMeasure::Density {
                lo: 0.0,
                hi: 1.0,
                u_density: Arc::new(move |u| (-y * u).exp()),
                label: format!("exp(-{y} u) dickman"),
            },
        };
        Ok(TiltedTriplet {
            base: self.clone(),
            y,
            effective: LevyTriplet { kill: 0.0, drift: self.drift, measure },
        })
    }

    /// E[e^{-theta X_gamma}] = exp(-gamma Lambda(theta)).
    pub fn laplace_functional(&self, gamma: f64, theta: f64) -> Result<f64> {
        Ok((-gamma * self.laplace_exponent(theta)?).exp())
    }

    /// (position, rate) when X_gamma is position * Poisson(gamma * rate) + gamma * drift.
    fn lattice_form(&self) -> Option<(f64, f64)> {
        if self.kill != 0.0 {
            return None;
        }
        match &self.measure {
            LevyMeasure::Poisson => Some((1.0, 1.0)),
            LevyMeasure::Atoms { positions, masses } if positions.len() == 1 => Some((positions[0], masses[0])),
            _ => None,
        }
    }
}

impl TiltedTriplet {
    /// exp(-gamma (Lambda(theta + y) - Lambda(y))) from the base triplet.
    pub fn laplace_functional_from_base(&self, gamma: f64, theta: f64) -> Result<f64> {
        let d = self.base.laplace_exponent(theta + self.y)? - self.base.laplace_exponent(self.y)?;
        Ok((-gamma * d).exp())
    }

    /// exp(-gamma Lambda_eff(theta)) from the materialized measure.
    pub fn laplace_functional(&self, gamma: f64, theta: f64) -> Result<f64> {
        self.effective.laplace_functional(gamma, theta)
    }
}

/// Lambda_D(theta) = sum_{j >= 1} (-1)^{j+1} theta^j / (j j!) for |theta| <= 4, quadrature beyond.
pub fn dickman_lambda(theta: f64) -> Result<f64> {
    if theta.abs() <= 4.0 {
        let mut term = 1.0;
        let mut s = 0.0;
        for j in 1..=80 {
            term *= -theta / j as f64;
            let add = -term / j as f64;
            s += add;
            if add.abs() <= 1e-18 * s.abs() {
                break;
            }
        }
        Ok(s)
    } else {
        quad(|u| one_minus_exp_over_u(theta, u), 0.0, 1.0)
    }
}

/// Lambda'_D(x) = (1 - e^{-x})/x with value 1 at 0.
pub fn dickman_lambda_prime(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Poisson(lambda) weights over the support range carrying all but ~1e-30 of the mass.
fn poisson_weights(lambda: f64) -> Vec<(u64, f64)> {
    if lambda == 0.0 {
        return vec![(0, 1.0)];
    }
    let sd = lambda.sqrt();
    let lo = (lambda - 15.0 * sd - 30.0).max(0.0).floor() as u64;
    let hi = (lambda + 15.0 * sd + 60.0).ceil() as u64;
    (lo..=hi)
        .map(|k| {
            let kf = k as f64;
            (k, (-lambda + kf * lambda.ln() - ln_gamma(kf + 1.0)).exp())
        })
        .collect()
}

/// E[g(P_lambda)] by the truncated Poisson series.
pub fn poisson_expectation(lambda: f64, mut g: impl FnMut(u64) -> f64) -> f64 {
    poisson_weights(lambda).into_iter().map(|(k, w)| if w == 0.0 { 0.0 } else { w * g(k) }).sum()
}

/// E[x^{X_gamma(Phi)}] / E[x^{P_gamma}] and E[Phi(P_{x gamma}/gamma)] / E[Phi(P_gamma/gamma)], by series.
pub fn poisson_char_sides(phi: &PenalizingFunction, gamma: f64, x: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0 && gamma > 0.0) {
        return Err(Error::Input(format!("need x >= 0 and gamma > 0, got x = {x}, gamma = {gamma}")));
    }
    let xp = |k: u64| if k == 0 { 1.0 } else { x.powi(k as i32) };
    let norm = poisson_expectation(gamma, |k| phi.eval(k as f64 / gamma));
    let biased = poisson_expectation(gamma, |k| xp(k) * phi.eval(k as f64 / gamma)) / norm;
    let plain = poisson_expectation(gamma, xp);
    let lhs = biased / plain;
    let rhs = poisson_expectation(x * gamma, |k| phi.eval(k as f64 / gamma)) / norm;
    Ok((lhs, rhs))
}

/// The common value of both sides of the Poisson duality; errors if they disagree beyond 1e-10.
pub fn poisson_char_ratio(phi: &PenalizingFunction, gamma: f64, x: f64) -> Result<f64> {
    let (lhs, rhs) = poisson_char_sides(phi, gamma, x)?;
    if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(1.0) {
        return Err(Error::ToleranceNotMet { estimate: lhs, error_estimate: (lhs - rhs).abs() });
    }
    Ok(lhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityGap {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// Combined Monte Carlo standard error; None for exact series.
    pub std_error: Option<f64>,
}

/// Options for the Monte Carlo branch of the mod-Levy duality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloOptions {
    pub paths: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self { paths: 200_000, eps: 1e-6, seed: 1 }
    }
}

/// Both sides of E[e^{-y X_gamma(Phi)}]/E[e^{-y X_gamma}] = E[Phi(X^{(y)}_gamma/gamma)]/E[Phi(X_gamma/gamma)]
/// with y = Upsilon(x). Lattice triplets use exact series, others Monte Carlo.
pub fn mod_levy_duality_gap(
    phi: &PenalizingFunction,
    t: &LevyTriplet,
    gamma: f64,
    x: f64,
    mc: MonteCarloOptions,
) -> Result<DualityGap> {
    let at_mean = phi.eval(t.lambda_prime(0.0)?);
    if (at_mean - 1.0).abs() > 1e-12 {
        return Err(invalid("phi(lambda'(0))", at_mean, "penalizing function must equal 1 at lambda'(0)"));
    }
    let y = t.upsilon(x)?;
    let tilted = t.tilt(y)?;
    if let (Some((p, m)), Some((pt, mt))) = (t.lattice_form(), tilted.effective.lattice_form()) {
        let shift = gamma * t.drift;
        let value = |k: u64, pos: f64| shift + pos * k as f64;
        let norm = poisson_expectation(gamma * m, |k| phi.eval(value(k, p) / gamma));
        let num = poisson_expectation(gamma * m, |k| (-y * value(k, p)).exp() * phi.eval(value(k, p) / gamma));
        let plain = poisson_expectation(gamma * m, |k| (-y * value(k, p)).exp());
        let lhs = num / norm / plain;
        let rhs = poisson_expectation(gamma * mt, |k| phi.eval(value(k, pt) / gamma)) / norm;
        return Ok(DualityGap { lhs, rhs, gap: (lhs - rhs).abs(), std_error: None });
    }
    // Monte Carlo: three independent samples.
    let base = sample_subordinator(t, gamma, mc.eps, mc.paths, mc.seed)?;
    let other = sample_subordinator(t, gamma, mc.eps, mc.paths, mc.seed.wrapping_add(0x9E37_79B9))?;
    let tilt_s = sample_subordinator(&tilted.effective, gamma, mc.eps, mc.paths, mc.seed.wrapping_add(0x7F4A_7C15))?;
    let laplace = t.laplace_functional(gamma, y)?;
    let a: Vec<f64> = base.iter().map(|v| (-y * v).exp() * phi.eval(v / gamma) / laplace).collect();
    let b: Vec<f64> = base.iter().map(|v| phi.eval(v / gamma)).collect();
    let (lhs, se_l) = ratio_with_se(&a, &b);
    let c: Vec<f64> = tilt_s.iter().map(|v| phi.eval(v / gamma)).collect();
    let d: Vec<f64> = other.iter().map(|v| phi.eval(v / gamma)).collect();
    let (mc_c, var_c) = mean_var(&c);
    let (mc_d, var_d) = mean_var(&d);
    let rhs = mc_c / mc_d;
    let n = c.len() as f64;
    let se_r = rhs * ((var_c / (mc_c * mc_c) + var_d / (mc_d * mc_d)) / n).sqrt();
    Ok(DualityGap { lhs, rhs, gap: (lhs - rhs).abs(), std_error: Some((se_l * se_l + se_r * se_r).sqrt()) })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var)
}

/// mean(a)/mean(b) from paired samples, with its delta-method standard error.
fn ratio_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    let r = ma / mb;
    let var = (va - 2.0 * r * cov + r * r * vb) / (mb * mb * n);
    (r, var.max(0.0).sqrt())
}

const MAX_JUMP_RATE: f64 = 1e8;

/// Compound-Poisson sampler for X_gamma. Jumps below `eps` are dropped, which biases
/// the result downward by at most gamma int_0^eps u Pi(du) (gamma eps for Dickman).
pub fn sample_subordinator(t: &LevyTriplet, gamma: f64, eps: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(invalid("eps", eps, "small-jump cutoff must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unif = Uniform::new(0.0f64, 1.0).expect("unit interval is valid");
    let drift = gamma * t.drift;
    let p_alive = (-gamma * t.kill).exp();
    let mut out = Vec::with_capacity(n);
    // Jump law: total rate and a sampler of one jump.
    enum Jumps {
        Fixed(f64),
        Categorical(Vec<f64>, WeightedIndex<f64>),
        LogScale { a: f64, b: f64, u_density: UDensity, sup: f64 },
    }
    let (rate, jumps) = match &t.measure {
        LevyMeasure::Poisson => (gamma, Jumps::Fixed(1.0)),
        LevyMeasure::Atoms { positions, masses } => {
            let total: f64 = masses.iter().sum();
            let idx = WeightedIndex::new(masses.clone()).map_err(|e| Error::Input(e.to_string()))?;
            (gamma * total, Jumps::Categorical(positions.clone(), idx))
        }
        LevyMeasure::Density { lo, hi, u_density, .. } => {
            let a = lo.max(eps);
            if a >= *hi {
                (0.0, Jumps::Fixed(0.0))
            } else {
                let (la, lb) = (a.ln(), hi.ln());
                let mass = quad(|v| u_density(v.exp()), la, lb)?;
                let sup = (0..=4096)
                    .map(|k| u_density((la + (lb - la) * k as f64 / 4096.0).exp()))
                    .fold(0.0f64, f64::max)
                    * (1.0 + 1e-6);
                (gamma * mass, Jumps::LogScale { a: la, b: lb, u_density: u_density.clone(), sup })
            }
        }
        LevyMeasure::Dickman => {
            let la = eps.min(1.0).ln();
            (gamma * (-la), Jumps::LogScale { a: la, b: 0.0, u_density: Arc::new(|_| 1.0), sup: 1.0 })
        }
    };
    if rate > MAX_JUMP_RATE {
        return Err(Error::Budget(format!("jump rate {rate:e} above {MAX_JUMP_RATE:e}; raise eps")));
    }
    let counts = if rate > 0.0 { Some(Poisson::new(rate).map_err(|e| Error::Input(e.to_string()))?) } else { None };
    for _ in 0..n {
        if p_alive < 1.0 && unif.sample(&mut rng) >= p_alive {
            out.push(f64::INFINITY);
            continue;
        }
        let k = counts.as_ref().map_or(0, |c| c.sample(&mut rng) as u64);
        let mut s = drift;
        match &jumps {
            Jumps::Fixed(u) => s += *u * k as f64,
            Jumps::Categorical(pos, idx) => {
                for _ in 0..k {
                    s += pos[idx.sample(&mut rng)];
                }
            }
            Jumps::LogScale { a, b, u_density, sup } => {
                for _ in 0..k {
                    loop {
                        let v = a + (b - a) * unif.sample(&mut rng);
                        let u = v.exp();
                        if unif.sample(&mut rng) * sup < u_density(u) {
                            s += u;
                            break;
                        }
                    }
                }
            }
        }
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_exponent_and_derivative() {
        let t = LevyTriplet::poisson();
        assert_eq!(t.laplace_exponent(0.0).unwrap(), 0.0);
        assert!((t.laplace_exponent(0.7).unwrap() - (1.0 - (-0.7f64).exp())).abs() < 1e-16);
        assert_eq!(t.lambda_prime(0.0).unwrap(), 1.0);
        assert!((t.upsilon(1.0).unwrap()).abs() < 1e-14);
        assert!((t.upsilon(0.25).unwrap() - 4f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn killing_shifts_exponent() {
        let t = LevyTriplet::poisson().with_kill_drift(0.5, 0.0).unwrap();
        assert_eq!(t.laplace_exponent(0.0).unwrap(), 0.5);
    }

    #[test]
    fn single_atom_derivative() {
        let t = LevyTriplet::atoms(vec![0.5], vec![2.0]).unwrap();
        assert!((t.lambda_prime(0.0).unwrap() - 1.0).abs() < 1e-16);
        assert!((t.lambda_prime(2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn upsilon_range_errors() {
        let t = LevyTriplet::dickman();
        assert!(matches!(t.upsilon(0.0), Err(Error::Range { .. })));
        assert!(matches!(t.upsilon(-1.0), Err(Error::Range { .. })));
    }

    #[test]
    fn invalid_constructors() {
        assert!(LevyTriplet::atoms(vec![-1.0], vec![1.0]).is_err());
        assert!(LevyTriplet::atoms(vec![1.0], vec![]).is_err());
        assert!(LevyTriplet::density(0.0, f64::INFINITY, |_| 1.0, "x").is_err());
        assert!(sample_subordinator(&LevyTriplet::dickman(), 1.0, 0.0, 1, 1).is_err());
    }

    #[test]
    fn tilt_of_poisson_is_poisson() {
        let t = LevyTriplet::poisson().tilt(0.3).unwrap();
        for theta in [0.0, 0.5, 2.0] {
            let a = t.laplace_functional(3.0, theta).unwrap();
            let b = t.laplace_functional_from_base(3.0, theta).unwrap();
            let c = (-3.0 * (-0.3f64).exp() * (1.0 - (-theta).exp())).exp();
            assert!((a - c).abs() < 1e-14 && (b - c).abs() < 1e-14);
        }
    }
}
