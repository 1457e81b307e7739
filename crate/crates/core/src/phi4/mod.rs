//! The penalized Gaussian law with density exp(-a x^2/2 - b x^4/4)/z, a = 1/gamma^2,
//! b = C/gamma^8, together with its tail functionals, moments and sampler.
//!
//! Every tail quantity is computed in ratio form: for y >= 0 the integrals
//! `S_k(y) = int_0^inf s^k exp(kappa(y) - kappa(y + s)) ds` are bounded and
//! well conditioned, and `F(-y) = Fbar(y) = f(y) S_0(y)`, `E[(H - y)_+] = f(y) S_1(y)`,
//! and so on. Lower-tail values follow from the symmetry of the law.

pub mod appendix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::numerics::{
    integrate, integrate_line, invert_monotone, linspace, GaussianEnvelope, GridFunction,
    QuadOptions, TailModel,
};

/// An even confining potential `kappa` with `f = exp(-kappa)/z` and `rho = kappa'`.
pub trait Potential: Send + Sync {
    fn kappa(&self, x: f64) -> f64;

    /// `kappa(x + s) - kappa(x)`, evaluated without cancellation where possible.
    fn kappa_increment(&self, x: f64, s: f64) -> f64 {
        self.kappa(x + s) - self.kappa(x)
    }

    fn rho(&self, x: f64) -> f64;
    fn rho_prime(&self, x: f64) -> f64;
    fn rho_second(&self, x: f64) -> f64;

    /// gamma: `kappa(x) >= x^2/(2 gamma^2)` and `kappa'' >= 1/gamma^2`.
    fn scale(&self) -> f64;

    /// Quartic coefficient C; zero for the Gaussian.
    fn quartic(&self) -> f64;

    fn rho_tilde(&self, x: f64) -> f64 {
        if x == 0.0 {
            self.rho_prime(0.0)
        } else {
            self.rho(x) / x
        }
    }

    /// B = rho'' + 3 rho rho' + rho^3.
    fn b_gamma(&self, x: f64) -> f64 {
        let r = self.rho(x);
        self.rho_second(x) + 3.0 * r * self.rho_prime(x) + r * r * r
    }

    /// D = 2 rho' + rho^2.
    fn d_gamma(&self, x: f64) -> f64 {
        let r = self.rho(x);
        2.0 * self.rho_prime(x) + r * r
    }
}

/// Parameters (gamma, C) of the quartic law. `a` and `b` are always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Phi4Params {
    gamma: f64,
    c_quartic: f64,
}

impl Phi4Params {
    pub fn new(gamma: f64, c_quartic: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", gamma, "must be positive and finite"));
        }
        if !(c_quartic > 0.0 && c_quartic <= 3.0) {
            return Err(invalid("C", c_quartic, "must lie in (0, 3]"));
        }
        Ok(Self { gamma, c_quartic })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c_quartic
    }

    pub fn a(&self) -> f64 {
        1.0 / (self.gamma * self.gamma)
    }

    pub fn b(&self) -> f64 {
        self.c_quartic / self.gamma.powi(8)
    }
}

impl Potential for Phi4Params {
    fn kappa(&self, x: f64) -> f64 {
        let x2 = x * x;
        0.5 * self.a() * x2 + 0.25 * self.b() * x2 * x2
    }

    fn kappa_increment(&self, x: f64, s: f64) -> f64 {
        let quad = 0.5 * self.a() * s * (2.0 * x + s);
        let quart = 0.25 * self.b() * s * (4.0 * x * x * x + s * (6.0 * x * x + s * (4.0 * x + s)));
        quad + quart
    }

    fn rho(&self, x: f64) -> f64 {
        self.a() * x + self.b() * x * x * x
    }

    fn rho_prime(&self, x: f64) -> f64 {
        self.a() + 3.0 * self.b() * x * x
    }

    fn rho_second(&self, x: f64) -> f64 {
        6.0 * self.b() * x
    }

    fn scale(&self) -> f64 {
        self.gamma
    }

    fn quartic(&self) -> f64 {
        self.c_quartic
    }

    fn rho_tilde(&self, x: f64) -> f64 {
        self.a() + self.b() * x * x
    }
}

/// N(0, gamma^2), the C -> 0 member of the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianPotential {
    pub gamma: f64,
}

impl GaussianPotential {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", gamma, "must be positive and finite"));
        }
        Ok(Self { gamma })
    }
}

impl Potential for GaussianPotential {
    fn kappa(&self, x: f64) -> f64 {
        0.5 * x * x / (self.gamma * self.gamma)
    }

    fn kappa_increment(&self, x: f64, s: f64) -> f64 {
        0.5 * s * (2.0 * x + s) / (self.gamma * self.gamma)
    }

    fn rho(&self, x: f64) -> f64 {
        x / (self.gamma * self.gamma)
    }

    fn rho_prime(&self, _x: f64) -> f64 {
        1.0 / (self.gamma * self.gamma)
    }

    fn rho_second(&self, _x: f64) -> f64 {
        0.0
    }

    fn scale(&self) -> f64 {
        self.gamma
    }

    fn quartic(&self) -> f64 {
        0.0
    }
}

/// Tail functionals of H at a point x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFunctionals {
    pub x: f64,
    pub pdf: f64,
    pub cdf: f64,
    pub tail: f64,
    /// E[H 1{H >= x}]
    pub psi: f64,
    /// E[(x - H)_+]
    pub phi_low: f64,
    /// E[(H - x)_+]
    pub phi_up: f64,
    /// E[(x - H)^2 1{H <= x}] / 2
    pub chi_low: f64,
    /// E[(H - x)^2 1{H >= x}] / 2
    pub chi_up: f64,
    /// The ratio integrals S_0, S_1, S_2 at |x|.
    pub shift_moments: [f64; 3],
}

/// A symmetric law with density exp(-kappa)/z.
#[derive(Debug, Clone, Serialize)]
pub struct DensityLaw<P> {
    pub params: P,
    pub z_gamma: f64,
    pub sigma2: f64,
    pub cdf_table: GridFunction,
    rel_tol: f64,
}

pub type Phi4Dist = DensityLaw<Phi4Params>;
pub type GaussianDist = DensityLaw<GaussianPotential>;

/// Builds the quartic law: normalization, variance and a CDF table.
pub fn make_dist(params: Phi4Params, rel_tol: f64) -> Result<Phi4Dist> {
    DensityLaw::new(params, rel_tol)
}

const RATIO_TAIL_EXPONENT: f64 = 100.0;

impl<P: Potential> DensityLaw<P> {
    pub fn new(params: P, rel_tol: f64) -> Result<Self> {
        let gamma = params.scale();
        let env = GaussianEnvelope::new(0.0, gamma, 1.0);
        let z = integrate_line(|x| (-params.kappa(x)).exp(), rel_tol, Some(env))?.value;
        // x^2 exp(-x^2/(2 g^2)) <= (4 g^2 / e) exp(-x^2/(4 g^2))
        let env2 = GaussianEnvelope::new(0.0, gamma * std::f64::consts::SQRT_2, 4.0 * gamma * gamma / std::f64::consts::E);
        let m2 = integrate_line(|x| x * x * (-params.kappa(x)).exp(), rel_tol, Some(env2))?.value;
        let mut law = Self {
            params,
            z_gamma: z,
            sigma2: m2 / z,
            cdf_table: GridFunction::new(vec![-1.0, 1.0], vec![0.0, 1.0], None)?,
            rel_tol,
        };
        let xs = linspace(-12.0 * gamma, 12.0 * gamma, 481);
        let mut ys = Vec::with_capacity(xs.len());
        for &x in &xs {
            ys.push(law.cdf(x));
        }
        law.cdf_table = GridFunction::new(xs, ys, Some(TailModel::Constant { left: 0.0, right: 1.0 }))?;
        Ok(law)
    }

    pub fn gamma(&self) -> f64 {
        self.params.scale()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (-self.params.kappa(x)).exp() / self.z_gamma
    }

    /// Upper end of the s-range beyond which exp(-(kappa(y+s)-kappa(y))) < e^{-100}.
    pub(crate) fn s_max(&self, y: f64) -> f64 {
        let a = 1.0 / (self.gamma() * self.gamma());
        let r = self.params.rho(y.max(0.0));
        let t = RATIO_TAIL_EXPONENT;
        let base = 2.0 * t / (r + (r * r + 2.0 * a * t).sqrt());
        base + (-2.0 * y).max(0.0)
    }

    /// `int_y^inf g(t) exp(kappa(y) - kappa(t)) dt`, i.e. E[g(H) 1{H >= y}] / f(y).
    ///
    /// Well conditioned for y >= 0; for y < 0 the weight exceeds one near the origin.
    pub fn upper_ratio_integral<G: FnMut(f64) -> f64>(&self, y: f64, mut g: G) -> Result<f64> {
        self.shifted_integral(y, |s| g(y + s))
    }

    /// `int_0^inf g(s) exp(kappa(y) - kappa(y + s)) ds`, with g given in the shift variable.
    pub fn shifted_integral<G: FnMut(f64) -> f64>(&self, y: f64, mut g: G) -> Result<f64> {
        let s_max = self.s_max(y);
        let opts = QuadOptions::rel(self.rel_tol.min(1e-12)).with_initial_panels(6);
        Ok(integrate(
            |s| {
                let w = (-self.params.kappa_increment(y, s)).exp();
                if w == 0.0 {
                    0.0
                } else {
                    g(s) * w
                }
            },
            0.0,
            s_max,
            &opts,
        )?
        .value)
    }

    /// `int_-inf^y g(t) exp(kappa(y) - kappa(t)) dt`, i.e. E[g(H) 1{H <= y}] / f(y).
    pub fn lower_ratio_integral<G: FnMut(f64) -> f64>(&self, y: f64, mut g: G) -> Result<f64> {
        self.upper_ratio_integral(-y, |u| g(-u))
    }

    /// S_k(y) = int_0^inf s^k exp(kappa(y) - kappa(y + s)) ds for k = 0, 1, 2.
    pub fn shift_moments(&self, y: f64) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.shifted_integral(y, |s| s.powi(k as i32))?;
        }
        Ok(out)
    }

    pub fn tail_functionals(&self, x: f64) -> Result<TailFunctionals> {
        let y = x.abs();
        let s = self.shift_moments(y)?;
        let f = self.pdf(x);
        let v = 0.5 * (x * x + self.sigma2);
        let upper = f * s[0];
        let psi = f * (s[1] + y * s[0]);
        let (cdf, tail, phi_low, phi_up, chi_low, chi_up) = if x >= 0.0 {
            let phi_up = f * s[1];
            let chi_up = 0.5 * f * s[2];
            (1.0 - upper, upper, x + phi_up, phi_up, v - chi_up, chi_up)
        } else {
            let phi_low = f * s[1];
            let chi_low = 0.5 * f * s[2];
            (upper, 1.0 - upper, phi_low, phi_low - x, chi_low, v - chi_low)
        };
        Ok(TailFunctionals {
            x,
            pdf: f,
            cdf,
            tail,
            psi,
            phi_low,
            phi_up,
            chi_low,
            chi_up,
            shift_moments: s,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let y = x.abs();
        let upper = self.pdf(y) * self.upper_ratio_integral(y, |_| 1.0).unwrap_or(f64::NAN);
        if x >= 0.0 {
            1.0 - upper
        } else {
            upper
        }
    }

    pub fn tail(&self, x: f64) -> f64 {
        self.cdf(-x)
    }

    /// Fbar(x)/f(x) for x >= 0 and F(x)/f(x) for x <= 0, both without underflow.
    pub fn mills_ratio(&self, x: f64) -> Result<f64> {
        self.upper_ratio_integral(x.abs(), |_| 1.0)
    }

    /// E[H^k] for even k <= 12.
    pub fn moment(&self, k: usize) -> Result<f64> {
        if k % 2 == 1 || k > 12 {
            return Err(invalid("k", k as f64, "moment order must be even and at most 12"));
        }
        if k == 0 {
            return Ok(1.0);
        }
        let half = self.upper_ratio_integral(0.0, |t| t.powi(k as i32))?;
        Ok(2.0 * half / self.z_gamma)
    }

    /// Quantile by monotone inversion of the CDF, bracketed with the stored table.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", p, "must lie in (0, 1)"));
        }
        let xs = &self.cdf_table.xs;
        let ys = &self.cdf_table.ys;
        let mut lo = xs[0];
        let mut hi = xs[xs.len() - 1];
        for (x, y) in xs.iter().zip(ys) {
            if *y <= p {
                lo = *x;
            }
        }
        for (x, y) in xs.iter().zip(ys).rev() {
            if *y >= p {
                hi = *x;
            }
        }
        if lo >= hi {
            hi = lo + self.gamma();
        }
        invert_monotone(|x| self.cdf(x), p, (lo - self.gamma(), hi + self.gamma()), 1e-14)
    }

    pub fn v_gamma(&self, x: f64) -> f64 {
        0.5 * (x * x + self.sigma2)
    }

    /// G = 1 + rho F / f.
    pub fn g_gamma(&self, x: f64) -> Result<f64> {
        let fl = self.lower_over_pdf(x)?;
        Ok(1.0 + self.params.rho(x) * fl)
    }

    /// Gbar = 1 - rho Fbar / f.
    pub fn g_bar_gamma(&self, x: f64) -> Result<f64> {
        let fu = self.upper_over_pdf(x)?;
        Ok(1.0 - self.params.rho(x) * fu)
    }

    /// F(x)/f(x).
    pub fn lower_over_pdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            self.mills_ratio(x)
        } else {
            let m = self.mills_ratio(x)?;
            Ok(1.0 / self.pdf(x) - m)
        }
    }

    /// Fbar(x)/f(x).
    pub fn upper_over_pdf(&self, x: f64) -> Result<f64> {
        self.lower_over_pdf(-x)
    }
}

/// Draws from the quartic law together with the observed acceptance rate.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub values: Vec<f64>,
    pub proposals: u64,
}

impl SampleRun {
    pub fn acceptance_rate(&self) -> f64 {
        self.values.len() as f64 / self.proposals as f64
    }
}

impl Phi4Dist {
    /// Rejection sampler: propose N(0, gamma^2), accept with probability exp(-b x^4/4).
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.sample_run(n, seed).values
    }

    pub fn sample_run(&self, n: usize, seed: u64) -> SampleRun {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unif = Uniform::new(0.0, 1.0).expect("unit interval is valid");
        let gamma = self.params.gamma();
        let b = self.params.b();
        let mut values = Vec::with_capacity(n);
        let mut proposals = 0u64;
        while values.len() < n {
            let g: f64 = StandardNormal.sample(&mut rng);
            let x = gamma * g;
            proposals += 1;
            let u: f64 = unif.sample(&mut rng);
            if u < (-0.25 * b * x.powi(4)).exp() {
                values.push(x);
            }
        }
        SampleRun { values, proposals }
    }

    /// Exact acceptance probability z / (gamma sqrt(2 pi)).
    pub fn acceptance_probability(&self) -> f64 {
        self.z_gamma / (self.params.gamma() * (2.0 * std::f64::consts::PI).sqrt())
    }
}
