//! Zero-bias and C-bias transforms.
//!
//! Discrete laws are exact: the zero-bias of a finite law is piecewise constant, and
//! every expectation of a polynomial against a [`PiecewiseDensity`] is computed in
//! closed form piece by piece.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::{GridFunction, Poly, TailModel};
use crate::phi4::{DensityLaw, Potential};

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// A finite law with strictly increasing atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDist {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    /// E X^k for k = 1..=4.
    moments: [f64; 4],
}

impl DiscreteDist {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::Input("atoms and probabilities must be nonempty and of equal length".into()));
        }
        if atoms.iter().any(|a| !a.is_finite()) || atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("atoms must be finite and strictly increasing".into()));
        }
        if probs.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Input("probabilities must be positive".into()));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-14 * probs.len().max(1) as f64 {
            return Err(invalid("sum of probabilities", total, "must equal 1"));
        }
        let mut moments = [0.0; 4];
        for (k, m) in moments.iter_mut().enumerate() {
            *m = compensated_sum(atoms.iter().zip(&probs).map(|(a, p)| p * a.powi(k as i32 + 1)));
        }
        Ok(Self { atoms, probs, moments })
    }

    /// Builds a law from unsorted (atom, probability) pairs, merging atoms closer than `tol`.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>, tol: f64) -> Result<Self> {
        pairs.retain(|(_, p)| *p > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, p) in pairs {
            match atoms.last() {
                Some(&last) if (a - last).abs() <= tol => *probs.last_mut().expect("nonempty") += p,
                _ => {
                    atoms.push(a);
                    probs.push(p);
                }
            }
        }
        let total = compensated_sum(probs.iter().copied());
        for p in &mut probs {
            *p /= total;
        }
        Self::new(atoms, probs)
    }

    pub fn rademacher() -> Self {
        Self::new(vec![-1.0, 1.0], vec![0.5, 0.5]).expect("valid law")
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// E X^k for k in 1..=4.
    pub fn moment(&self, k: usize) -> f64 {
        assert!((1..=4).contains(&k), "cached moments cover orders 1..=4");
        self.moments[k - 1]
    }

    pub fn abs_moment(&self, k: i32) -> f64 {
        compensated_sum(self.atoms.iter().zip(&self.probs).map(|(a, p)| p * a.abs().powi(k)))
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        compensated_sum(self.atoms.iter().zip(&self.probs).map(|(a, p)| p * f(*a)))
    }

    /// Invariance under x -> -x within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.atoms.len();
        (0..n).all(|i| (self.atoms[i] + self.atoms[n - 1 - i]).abs() <= tol && (self.probs[i] - self.probs[n - 1 - i]).abs() <= tol)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        compensated_sum(self.atoms.iter().zip(&self.probs).filter(|(a, _)| **a <= x).map(|(_, p)| *p))
    }

    /// Law of X + Y for independent X, Y.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        let scale = self.atoms.iter().chain(&other.atoms).fold(1.0f64, |m, a| m.max(a.abs()));
        let mut pairs = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for (a, p) in self.atoms.iter().zip(&self.probs) {
            for (b, q) in other.atoms.iter().zip(&other.probs) {
                pairs.push((a + b, p * q));
            }
        }
        Self::from_pairs(pairs, 1e-12 * scale)
    }

    /// Law of X_1 + ... + X_n.
    pub fn n_fold(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Self::new(vec![0.0], vec![1.0]);
        }
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc.convolve(self)?;
        }
        Ok(acc)
    }

    /// Law of X / s.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(invalid("scale", s, "must be positive"));
        }
        Self::new(self.atoms.iter().map(|a| a / s).collect(), self.probs.clone())
    }
}

/// A density given by polynomial pieces in the local variable t = x - b_i on [b_i, b_{i+1}).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseDensity {
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Poly>,
    cumulative: Vec<f64>,
}

/// Coefficients of t -> f(b + t).
fn taylor_shift(f: &Poly, b: f64) -> Poly {
    let mut out = Vec::with_capacity(f.coeffs.len());
    let mut d = f.clone();
    let mut fact = 1.0;
    for k in 0..f.coeffs.len().max(1) {
        if k > 0 {
            fact *= k as f64;
        }
        out.push(d.eval(b) / fact);
        d = d.derivative();
    }
    Poly::new(out)
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut c = vec![0.0; a.coeffs.len() + b.coeffs.len() - 1];
    for (i, x) in a.coeffs.iter().enumerate() {
        for (j, y) in b.coeffs.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    Poly::new(c)
}

impl PiecewiseDensity {
    fn build(breakpoints: Vec<f64>, pieces: Vec<Poly>) -> Result<Self> {
        if breakpoints.len() < 2 || pieces.len() + 1 != breakpoints.len() {
            return Err(Error::Input("need k + 1 breakpoints for k pieces".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input("breakpoints must be strictly increasing".into()));
        }
        if pieces.iter().any(|p| p.degree() > 3) {
            return Err(Error::Input("pieces must have degree at most 3".into()));
        }
        let mut cumulative = Vec::with_capacity(breakpoints.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for (i, p) in pieces.iter().enumerate() {
            acc += p.antiderivative().eval(breakpoints[i + 1] - breakpoints[i]);
            cumulative.push(acc);
        }
        Ok(Self { breakpoints, pieces, cumulative })
    }

    /// Validated constructor: nonnegative pieces and unit mass within 1e-12.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Poly>) -> Result<Self> {
        let d = Self::build(breakpoints, pieces)?;
        for (i, p) in d.pieces.iter().enumerate() {
            let w = d.breakpoints[i + 1] - d.breakpoints[i];
            for k in 0..=8 {
                let v = p.eval(w * k as f64 / 8.0);
                if v < -1e-14 {
                    return Err(invalid("density", v, "pieces must be nonnegative"));
                }
            }
        }
        if (d.mass() - 1.0).abs() > 1e-12 {
            return Err(invalid("mass", d.mass(), "density must have unit mass"));
        }
        Ok(d)
    }

    /// Piecewise-constant density from values on consecutive intervals.
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(breakpoints, values.into_iter().map(|v| Poly::new(vec![v])).collect())
    }

    pub fn mass(&self) -> f64 {
        *self.cumulative.last().expect("at least one piece")
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().expect("nonempty"))
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.support();
        if x < lo || x >= hi {
            return None;
        }
        Some(self.breakpoints.partition_point(|b| *b <= x) - 1)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.locate(x).map_or(0.0, |i| self.pieces[i].eval(x - self.breakpoints[i]))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return self.mass();
        }
        let i = self.locate(x).expect("inside support");
        self.cumulative[i] + self.pieces[i].antiderivative().eval(x - self.breakpoints[i])
    }

    /// int_lo^hi f(x) density(x) dx, exactly.
    pub fn integrate_poly_on(&self, f: &Poly, lo: f64, hi: f64) -> f64 {
        let mut terms = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let a = self.breakpoints[i].max(lo);
            let b = self.breakpoints[i + 1].min(hi);
            if a >= b {
                continue;
            }
            let prod = poly_mul(&taylor_shift(f, self.breakpoints[i]), p).antiderivative();
            let base = self.breakpoints[i];
            terms.push(prod.eval(b - base) - prod.eval(a - base));
        }
        compensated_sum(terms)
    }

    pub fn expect_poly(&self, f: &Poly) -> f64 {
        let (lo, hi) = self.support();
        self.integrate_poly_on(f, lo, hi)
    }

    pub fn moment(&self, k: usize) -> f64 {
        self.expect_poly(&Poly::monomial(k))
    }

    /// E|Y - a|^k for the density's law.
    pub fn abs_centered_moment(&self, a: f64, k: usize) -> f64 {
        let (lo, hi) = self.support();
        let up = taylor_shift(&Poly::monomial(k), -a);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let down = Poly::new(up.coeffs.iter().map(|c| sign * c).collect());
        self.integrate_poly_on(&down, lo, a.max(lo).min(hi)) + self.integrate_poly_on(&up, a.min(hi).max(lo), hi)
    }

    /// Law of Y / s.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(invalid("scale", s, "must be positive"));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| Poly::new(p.coeffs.iter().enumerate().map(|(k, c)| c * s.powi(k as i32 + 1)).collect()))
            .collect();
        Self::build(self.breakpoints.iter().map(|b| b / s).collect(), pieces)
    }
}

/// Density E[X 1{X > x}] / E X^2 of the zero-bias transform.
pub fn zero_bias(dist: &DiscreteDist) -> Result<PiecewiseDensity> {
    c_bias_discrete(dist, 0.0)
}

/// Density E[rho_c(W) 1{W > x}] / E[W rho_c(W)] with rho_c(w) = w + c3 w^3; c3 = 0 is the zero-bias.
pub fn c_bias_discrete(dist: &DiscreteDist, c3: f64) -> Result<PiecewiseDensity> {
    let scale = dist.atoms.iter().fold(1.0f64, |m, a| m.max(a.abs()));
    if dist.moment(1).abs() > 1e-14 * scale {
        return Err(invalid("E X", dist.moment(1), "transform needs a centered law"));
    }
    if c3 != 0.0 && dist.moment(3).abs() > 1e-14 * scale.powi(3) {
        return Err(invalid("E X^3", dist.moment(3), "C-bias needs E W^3 = 0"));
    }
    let rho = |w: f64| w + c3 * w * w * w;
    let norm = dist.moment(2) + c3 * dist.moment(4);
    if !(norm > 0.0) {
        return Err(invalid("E[W rho(W)]", norm, "must be positive"));
    }
    let n = dist.atoms.len();
    if n < 2 {
        return Err(Error::Input("a transform of a point mass is undefined".into()));
    }
    let mut values = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let s = compensated_sum((k + 1..n).map(|i| dist.probs[i] * rho(dist.atoms[i])));
        values.push((s / norm).max(0.0));
    }
    let d = PiecewiseDensity::build(dist.atoms.clone(), values.into_iter().map(|v| Poly::new(vec![v])).collect())?;
    if (d.mass() - 1.0).abs() > 1e-12 {
        return Err(invalid("mass", d.mass(), "transform mass must be one"));
    }
    Ok(d)
}

/// |E[X f(X)] - E X^2 E[f'(X^(0))]| with both sides exact.
pub fn zero_bias_identity_gap(dist: &DiscreteDist, f: &Poly) -> Result<f64> {
    let z = zero_bias(dist)?;
    let lhs = dist.expect(|x| x * f.eval(x));
    let rhs = dist.moment(2) * z.expect_poly(&f.derivative());
    Ok((lhs - rhs).abs())
}

/// (E|X^(0)|, E[(X^(0))^2]) = (E|X|^3 / (2 E X^2), E X^4 / (3 E X^2)).
pub fn zero_bias_moments(dist: &DiscreteDist) -> (f64, f64) {
    let m2 = dist.moment(2);
    (dist.abs_moment(3) / (2.0 * m2), dist.moment(4) / (3.0 * m2))
}

/// E|X - X^(0)| for independent X and X^(0), exactly.
pub fn zero_bias_coupling_distance(dist: &DiscreteDist) -> Result<f64> {
    let z = zero_bias(dist)?;
    Ok(dist.expect(|a| z.abs_centered_moment(a, 1)))
}

/// Density of (S_{n-1} + X^(0)) / scale, the zero-bias of the n-fold sum scaled by 1/scale.
pub fn sum_zero_bias_law(dist: &DiscreteDist, n: usize, scale: f64) -> Result<PiecewiseDensity> {
    if n == 0 || n > 1 << 12 {
        return Err(invalid("n", n as f64, "exact sum laws need 1 <= n <= 4096"));
    }
    let z = zero_bias(dist)?;
    let rest = dist.n_fold(n - 1)?;
    convolve_atomic(&rest, &z)?.scaled(scale)
}

/// Density of S + Y for an atomic S and a piecewise-constant density Y.
fn convolve_atomic(s: &DiscreteDist, y: &PiecewiseDensity) -> Result<PiecewiseDensity> {
    if y.pieces.iter().any(|p| p.degree() > 0) {
        return Err(Error::Input("atomic convolution expects a piecewise-constant density".into()));
    }
    // Jumps of y: +v_0 at b_0, (v_i - v_{i-1}) at b_i, -v_last at the end.
    let vals: Vec<f64> = y.pieces.iter().map(|p| p.coeffs.first().copied().unwrap_or(0.0)).collect();
    let mut jumps = Vec::with_capacity(y.breakpoints.len());
    for (i, b) in y.breakpoints.iter().enumerate() {
        let before = if i == 0 { 0.0 } else { vals[i - 1] };
        let after = vals.get(i).copied().unwrap_or(0.0);
        jumps.push((*b, after - before));
    }
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(jumps.len() * s.atoms.len());
    for (a, p) in s.atoms.iter().zip(&s.probs) {
        for (b, j) in &jumps {
            events.push((a + b, p * j));
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let width = events.last().expect("nonempty").0 - events[0].0;
    let tol = 1e-12 * width.max(1.0);
    let mut bps: Vec<f64> = Vec::new();
    let mut deltas: Vec<Vec<f64>> = Vec::new();
    for (x, d) in events {
        match bps.last() {
            Some(&last) if x - last <= tol => deltas.last_mut().expect("nonempty").push(d),
            _ => {
                bps.push(x);
                deltas.push(vec![d]);
            }
        }
    }
    let mut level = Vec::new();
    let mut running = Vec::new();
    for ds in &deltas[..deltas.len() - 1] {
        running.extend_from_slice(ds);
        level.push(compensated_sum(running.iter().copied()).max(0.0));
    }
    PiecewiseDensity::build(bps, level.into_iter().map(|v| Poly::new(vec![v])).collect())
}

/// Cubic coefficient used by the C-bias transform of H_gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CBiasCoefficient {
    /// C / gamma^6, for which H_gamma is a fixed point.
    Corrected,
    /// 4C / gamma^6; H_gamma is not a fixed point of this variant.
    Quadrupled,
}

impl CBiasCoefficient {
    pub fn value(self, gamma: f64, c: f64) -> f64 {
        match self {
            Self::Corrected => c / gamma.powi(6),
            Self::Quadrupled => 4.0 * c / gamma.powi(6),
        }
    }
}

/// C-bias density of a symmetric density law on `xs`: E[rho_c(H) 1{H >= x}] / E[H rho_c(H)].
/// Also returns the normalizer and the trapezoid mass of the tabulated density.
pub fn c_bias_density<P: Potential>(dist: &DensityLaw<P>, c3: f64, xs: &[f64]) -> Result<(GridFunction, f64)> {
    let norm = dist.sigma2 + c3 * dist.moment(4)?;
    let rho = |w: f64| w + c3 * w * w * w;
    let mut ys = Vec::with_capacity(xs.len());
    for &x in xs {
        // E[rho(H) 1{H >= x}] = E[rho(H) 1{H >= |x|}] by oddness of rho and symmetry of H.
        let y = x.abs();
        ys.push(dist.pdf(y) * dist.upper_ratio_integral(y, rho)? / norm);
    }
    Ok((GridFunction::new(xs.to_vec(), ys, Some(TailModel::Zero))?, norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_zero_bias_is_uniform() {
        let z = zero_bias(&DiscreteDist::rademacher()).unwrap();
        assert_eq!(z.pdf(0.3), 0.5);
        assert_eq!(z.pdf(1.5), 0.0);
        assert!((z.mass() - 1.0).abs() < 1e-15);
        assert!((z.cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_atom_zero_bias() {
        let d = DiscreteDist::new(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        let z = zero_bias(&d).unwrap();
        for x in [-0.9, -0.1, 0.2, 0.99] {
            assert!((z.pdf(x) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(DiscreteDist::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        let skew = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(zero_bias(&skew).is_err());
        assert!(PiecewiseDensity::piecewise_constant(vec![0.0, 1.0], vec![0.5]).is_err());
        assert!(PiecewiseDensity::new(vec![0.0, 1.0], vec![Poly::new(vec![0.0, 0.0, 0.0, 0.0, 5.0])]).is_err());
    }

    #[test]
    fn moments_of_two_point_law() {
        let d = DiscreteDist::new(vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap();
        let (a, b) = zero_bias_moments(&d);
        assert!((a - 1.0).abs() < 1e-15 && (b - 4.0 / 3.0).abs() < 1e-15);
        let z = zero_bias(&d).unwrap();
        assert!((z.abs_centered_moment(0.0, 1) - a).abs() < 1e-14);
        assert!((z.moment(2) - b).abs() < 1e-14);
    }

    #[test]
    fn cubic_identity_for_rademacher() {
        let gap = zero_bias_identity_gap(&DiscreteDist::rademacher(), &Poly::monomial(3)).unwrap();
        assert!(gap < 1e-15);
    }

    #[test]
    fn sum_law_single_term_is_uniform() {
        let z = sum_zero_bias_law(&DiscreteDist::rademacher(), 1, 1.0).unwrap();
        assert!((z.pdf(0.5) - 0.5).abs() < 1e-15 && (z.mass() - 1.0).abs() < 1e-15);
        assert!(sum_zero_bias_law(&DiscreteDist::rademacher(), 0, 1.0).is_err());
    }

    #[test]
    fn scaling_preserves_mass() {
        let z = zero_bias(&DiscreteDist::rademacher()).unwrap().scaled(3.0).unwrap();
        assert!((z.mass() - 1.0).abs() < 1e-15);
        assert!((z.pdf(0.1) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s = compensated_sum([1.0, 1e-16, -1.0, 1e-16]);
        assert!((s - 2e-16).abs() < 1e-30);
    }
}
