//! I.i.d. sums against the quartic law: exact sum distributions, Kolmogorov and
//! smooth-class distances, and the explicit bounds for Z_n = n^{-1/4} (X_1 + ... + X_n).
//!
//! Kolmogorov distances between a lattice law and a continuous law are evaluated at
//! the atoms with left and right limits, so there is no grid error.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::gaussian_expectation;
use crate::phi4::{make_dist, Phi4Dist, Phi4Params};
use crate::stein::{expectation, Probe};
use crate::zerobias::{compensated_sum, DiscreteDist};

/// Largest n for which sum laws are convolved exactly.
pub const MAX_EXACT_N: usize = 1 << 12;
const MAX_ATOMS: usize = 2_000_000;
const GAUSS_HERMITE_NODES: usize = 160;

/// Law of the summand X.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Summand {
    Rademacher,
    Custom(DiscreteDist),
}

impl Summand {
    pub fn law(&self) -> DiscreteDist {
        match self {
            Self::Rademacher => DiscreteDist::rademacher(),
            Self::Custom(d) => d.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub summand: Summand,
    pub n_list: Vec<usize>,
    /// Relative tolerance for the quartic law's quadratures.
    pub rel_tol: f64,
}

impl ExperimentConfig {
    pub fn rademacher(n_list: Vec<usize>) -> Self {
        Self { summand: Summand::Rademacher, n_list, rel_tol: 1e-12 }
    }
}

/// Constants attached to a summand law satisfying the sum hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumConstants {
    /// C = (3 - E X^4) / 6.
    pub c: f64,
    /// c_1 = sqrt(2 pi) E[exp(-C G^4 / 4)].
    pub c1: f64,
    /// max(E|X|, E|X|^3 / 2).
    pub sigma13: f64,
}

/// Checks symmetry, E X^2 = 1 and E X^4 < 3, and computes C, c_1 and sigma_{1,3}.
pub fn sum_constants(x: &DiscreteDist) -> Result<SumConstants> {
    if !x.is_symmetric(1e-14) {
        return Err(Error::Hypothesis("the summand law must be symmetric".into()));
    }
    if (x.moment(2) - 1.0).abs() > 1e-12 {
        return Err(Error::Hypothesis(format!("E X^2 = {} but the summand must have unit variance", x.moment(2))));
    }
    let m4 = x.moment(4);
    if !(m4 < 3.0) {
        return Err(Error::Hypothesis(format!("E X^4 = {m4} but the sum bounds need E X^4 < 3")));
    }
    let c = (3.0 - m4) / 6.0;
    Ok(SumConstants { c, c1: c1_constant(c)?, sigma13: x.abs_moment(1).max(x.abs_moment(3) / 2.0) })
}

/// sqrt(2 pi) E[exp(-C G^4 / 4)] by Gauss-Hermite quadrature.
pub fn c1_constant(c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(invalid("C", c, "must be nonnegative"));
    }
    Ok((2.0 * PI).sqrt() * gaussian_expectation(GAUSS_HERMITE_NODES, |g| (-c * g.powi(4) / 4.0).exp())?)
}

/// Exact law of Z_n = n^{-1/4} (X_1 + ... + X_n).
pub fn exact_sum_distribution(summand: &Summand, n: usize) -> Result<DiscreteDist> {
    if n == 0 {
        return Err(invalid("n", 0.0, "must be positive"));
    }
    if n > MAX_EXACT_N {
        return Err(Error::Budget(format!("exact convolution supports n <= {MAX_EXACT_N}, got {n}")));
    }
    let gamma = (n as f64).powf(0.25);
    match summand {
        Summand::Rademacher => rademacher_sum(n, gamma),
        Summand::Custom(x) => {
            let mut acc = x.clone();
            for _ in 1..n {
                acc = acc.convolve(x)?;
                if acc.atoms().len() > MAX_ATOMS {
                    return Err(Error::Budget(format!("sum law exceeds {MAX_ATOMS} atoms")));
                }
            }
            acc.scaled(gamma)
        }
    }
}

/// Binomial weights built outward from the central atom by the ratio recurrence.
/// Weights below the smallest subnormal (about e^{-745}) underflow to zero and are dropped.
fn rademacher_sum(n: usize, gamma: f64) -> Result<DiscreteDist> {
    let mid = n / 2;
    let mut w = vec![0.0f64; n + 1];
    w[mid] = 1.0;
    for k in (0..mid).rev() {
        // C(n,k) = C(n,k+1) (k+1) / (n-k)
        w[k] = w[k + 1] * (k + 1) as f64 / (n - k) as f64;
    }
    for k in mid + 1..=n {
        // C(n,k) = C(n,k-1) (n-k+1) / k
        w[k] = w[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    let total = compensated_sum(w.iter().copied());
    let (atoms, probs): (Vec<f64>, Vec<f64>) = w
        .iter()
        .enumerate()
        .map(|(k, wk)| ((2.0 * k as f64 - n as f64) / gamma, wk / total))
        .filter(|(_, p)| *p > 0.0)
        .unzip();
    DiscreteDist::new(atoms, probs)
}

/// sup_x |F_d(x) - F_c(x)|, evaluated at every atom with both one-sided limits.
pub fn kolmogorov_distance<F: Fn(f64) -> f64 + Sync>(discrete: &DiscreteDist, continuous_cdf: F) -> f64 {
    let probs = discrete.probs();
    let mut below = Vec::with_capacity(probs.len());
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for p in probs {
        below.push(acc + comp);
        let t = acc + p;
        comp += if acc.abs() >= p.abs() { (acc - t) + p } else { (p - t) + acc };
        acc = t;
    }
    discrete
        .atoms()
        .par_iter()
        .zip(below.par_iter())
        .zip(probs.par_iter())
        .map(|((a, left), p)| {
            let fc = continuous_cdf(*a);
            (fc - left).abs().max((fc - (left + p).min(1.0)).abs())
        })
        .reduce(|| 0.0, f64::max)
}

/// First-order smooth bound 4 sqrt(2(1-C)) |h'| / gamma + 4 |h| (C c_1 sigma_{1,3} + 1/gamma^2) / gamma^2.
pub fn smooth_bound_h1(k: &SumConstants, gamma: f64, h_sup: f64, h_prime_sup: f64) -> f64 {
    4.0 * (2.0 * (1.0 - k.c)).sqrt() / gamma * h_prime_sup
        + 4.0 / (gamma * gamma) * h_sup * (k.c * k.c1 * k.sigma13 + 1.0 / (gamma * gamma))
}

/// Second-order smooth bound (3 + 2C + 35C/gamma^4)(2 - 3C) |h''| / gamma^2 + 66 C |h'| / gamma^3.
pub fn smooth_bound_h2(k: &SumConstants, gamma: f64, h_prime_sup: f64, h_second_sup: f64) -> f64 {
    let c = k.c;
    (3.0 + 2.0 * c + 35.0 * c / gamma.powi(4)) * (2.0 - 3.0 * c) / (gamma * gamma) * h_second_sup
        + 66.0 * c / gamma.powi(3) * h_prime_sup
}

/// Leading term 4 (1-C)^{1/4} / (c_1^{1/2} gamma) of the first Kolmogorov bound.
pub fn kolmogorov_leading_first(k: &SumConstants, gamma: f64) -> f64 {
    4.0 * (1.0 - k.c).powf(0.25) / (k.c1.sqrt() * gamma)
}

/// Leading term 2 (3+2C)^{1/3} (2-3C)^{1/3} / (c_1^{2/3} gamma^{4/3}) of the second Kolmogorov bound.
/// The O(gamma^{-8/3}) remainder carries no explicit constant and is not included.
pub fn kolmogorov_leading_second(k: &SumConstants, gamma: f64) -> f64 {
    2.0 * ((3.0 + 2.0 * k.c) * (2.0 - 3.0 * k.c)).cbrt() / (k.c1.powf(2.0 / 3.0) * gamma.powf(4.0 / 3.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    SmoothH1,
    KolmogorovFirst,
    SmoothH2,
    KolmogorovSecond,
}

/// Evaluates one bound at n for the class with all sup norms equal to one.
pub fn bound_evaluator(k: &SumConstants, n: usize, which: BoundKind) -> f64 {
    let gamma = (n as f64).powf(0.25);
    match which {
        BoundKind::SmoothH1 => smooth_bound_h1(k, gamma, 1.0, 1.0),
        BoundKind::KolmogorovFirst => kolmogorov_leading_first(k, gamma),
        BoundKind::SmoothH2 => smooth_bound_h2(k, gamma, 1.0, 1.0),
        BoundKind::KolmogorovSecond => kolmogorov_leading_second(k, gamma),
    }
}

/// Smooth test-function classes: bounded h, h' (and h'' for the second class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SmoothClass {
    H1,
    H2,
}

const CLASS_GRID_HALF_WIDTH: f64 = 40.0;
const CLASS_GRID_POINTS: usize = 160_001;

/// Sup norms of h, h', h'' on a dense grid over [-40, 40].
pub fn probe_sup_norms(h: &Probe) -> [f64; 3] {
    let step = 2.0 * CLASS_GRID_HALF_WIDTH / (CLASS_GRID_POINTS - 1) as f64;
    (0..CLASS_GRID_POINTS)
        .into_par_iter()
        .map(|i| {
            let d = h.derivs(-CLASS_GRID_HALF_WIDTH + step * i as f64);
            [d[0].abs(), d[1].abs(), d[2].abs()]
        })
        .reduce(|| [0.0; 3], |a, b| [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])])
}

/// Rejects probes whose norms exceed one or which do not vanish at +-40.
pub fn check_class(h: &Probe, class: SmoothClass) -> Result<()> {
    let norms = probe_sup_norms(h);
    let used = match class {
        SmoothClass::H1 => &norms[..2],
        SmoothClass::H2 => &norms[..3],
    };
    if let Some(v) = used.iter().find(|v| **v > 1.0 + 1e-9) {
        return Err(Error::Input(format!("probe {} has a sup norm {v} above one", h.name)));
    }
    let tails = [h.derivs(-CLASS_GRID_HALF_WIDTH), h.derivs(CLASS_GRID_HALF_WIDTH)];
    if tails.iter().any(|d| d[0].abs() > 1e-12 || d[1].abs() > 1e-12) {
        return Err(Error::Input(format!("probe {} does not vanish at infinity", h.name)));
    }
    Ok(())
}

/// Divides a probe by the largest of its sup norms relevant to `class`, when that exceeds one.
pub fn normalize_for_class(h: Probe, class: SmoothClass) -> Probe {
    let norms = probe_sup_norms(&h);
    let worst = match class {
        SmoothClass::H1 => norms[0].max(norms[1]),
        SmoothClass::H2 => norms[0].max(norms[1]).max(norms[2]),
    };
    if worst <= 1.0 {
        return h;
    }
    let name = format!("{}/{worst:.6}", h.name);
    let inner = h;
    Probe::new(&name, move |x| {
        let d = inner.derivs(x);
        [d[0] / worst, d[1] / worst, d[2] / worst, d[3] / worst]
    })
}

/// exp(-x^2/2), x exp(-x^2/2) and sin(x) exp(-x^2/4), each normalized into `class`.
pub fn smooth_probe_family(class: SmoothClass) -> Vec<Probe> {
    let gauss = Probe::new("exp(-x^2/2)", |x| {
        let e = (-x * x / 2.0).exp();
        [e, -x * e, (x * x - 1.0) * e, (3.0 * x - x * x * x) * e]
    });
    let odd = Probe::new("x exp(-x^2/2)", |x| {
        let e = (-x * x / 2.0).exp();
        let x2 = x * x;
        [x * e, (1.0 - x2) * e, (x2 * x - 3.0 * x) * e, (-x2 * x2 + 6.0 * x2 - 3.0) * e]
    });
    let wave = Probe::new("sin(x) exp(-x^2/4)", |x| {
        let e = (-x * x / 4.0).exp();
        let (s, c) = x.sin_cos();
        let q = 1.5 - x * x / 4.0;
        let d1 = c - x * s / 2.0;
        let d2 = -s * q - x * c;
        let d3 = -c * q + 1.5 * x * s - c - x * d2 / 2.0;
        [s * e, d1 * e, d2 * e, d3 * e]
    });
    [gauss, odd, wave].into_iter().map(|h| normalize_for_class(h, class)).collect()
}

/// max over probes of |E h(Z) - E h(H)|: a lower bound on the class distance.
pub fn smooth_class_distance(z: &DiscreteDist, h_law: &Phi4Dist, class: SmoothClass, probes: &[Probe]) -> Result<f64> {
    let mut worst = 0.0f64;
    for h in probes {
        check_class(h, class)?;
        let ez = z.expect(|x| h.value(x));
        let eh = expectation(h_law, |x| h.value(x))?;
        worst = worst.max((ez - eh).abs());
    }
    Ok(worst)
}

/// Corr(n, h) = E h(G) - E h(H_n / gamma_n) with G standard normal.
pub fn correction_term(h_law: &Phi4Dist, h: impl Fn(f64) -> f64) -> Result<f64> {
    let gamma = h_law.gamma();
    let eg = gaussian_expectation(GAUSS_HERMITE_NODES, &h)?;
    let eh = expectation(h_law, |x| h(x / gamma))?;
    Ok(eg - eh)
}

/// One row of the sweep; all bounds use the class norms equal to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub n: usize,
    pub gamma_n: f64,
    pub d_kol_measured: f64,
    pub bound_kol_first: f64,
    pub bound_kol_second: f64,
    pub smooth_h1_measured: f64,
    pub bound_h1: f64,
    pub smooth_h2_measured: f64,
    pub bound_h2: f64,
}

pub const CSV_HEADER: &str = "n,gamma,d_kol,cor42,cor44,smooth_h1,thm41,smooth_h2,thm43";

/// Rows as CSV with 17 significant digits and LF line endings.
pub fn rows_to_csv(rows: &[DistanceRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let vals = [
            r.gamma_n,
            r.d_kol_measured,
            r.bound_kol_first,
            r.bound_kol_second,
            r.smooth_h1_measured,
            r.bound_h1,
            r.smooth_h2_measured,
            r.bound_h2,
        ];
        out.push_str(&r.n.to_string());
        for v in vals {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// A violated comparison between a measured distance and a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowFailure {
    pub n: usize,
    pub check: String,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub constants: SumConstants,
    pub rows: Vec<DistanceRow>,
    /// Least-squares log-log slope of d_Kol over rows with n >= 256, when at least two exist.
    pub kolmogorov_slope: Option<f64>,
    pub failures: Vec<RowFailure>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Computes one row: exact sum law, quartic law at gamma_n, distances and bounds.
pub fn distance_row(summand: &Summand, k: &SumConstants, n: usize, rel_tol: f64) -> Result<DistanceRow> {
    let gamma = (n as f64).powf(0.25);
    let z = exact_sum_distribution(summand, n)?;
    let h_law = make_dist(Phi4Params::new(gamma, k.c)?, rel_tol)?;
    let d_kol = kolmogorov_distance(&z, |x| h_law.cdf(x));
    let h1 = smooth_class_distance(&z, &h_law, SmoothClass::H1, &smooth_probe_family(SmoothClass::H1))?;
    let h2 = smooth_class_distance(&z, &h_law, SmoothClass::H2, &smooth_probe_family(SmoothClass::H2))?;
    Ok(DistanceRow {
        n,
        gamma_n: gamma,
        d_kol_measured: d_kol,
        bound_kol_first: kolmogorov_leading_first(k, gamma),
        bound_kol_second: kolmogorov_leading_second(k, gamma),
        smooth_h1_measured: h1,
        bound_h1: smooth_bound_h1(k, gamma, 1.0, 1.0),
        smooth_h2_measured: h2,
        bound_h2: smooth_bound_h2(k, gamma, 1.0, 1.0),
    })
}

/// Least-squares slope of log d against log n.
pub fn loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, d)| d.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

/// Runs the sweep over `n_list`. The hypothesis gate runs before any convolution.
/// The second Kolmogorov bound is compared for every n, the first for n >= 16.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let k = sum_constants(&config.summand.law())?;
    if let Some(n) = config.n_list.iter().find(|n| **n == 0 || **n > MAX_EXACT_N) {
        return Err(invalid("n", *n as f64, "each n must lie in 1..=4096"));
    }
    let mut rows = config
        .n_list
        .par_iter()
        .map(|&n| distance_row(&config.summand, &k, n, config.rel_tol))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.n);
    let mut failures = Vec::new();
    for r in &rows {
        let mut check = |name: &str, measured: f64, bound: f64| {
            if !(measured <= bound) {
                failures.push(RowFailure { n: r.n, check: name.to_string(), measured, bound });
            }
        };
        check("d_kol <= second Kolmogorov bound", r.d_kol_measured, r.bound_kol_second);
        if r.n >= 16 {
            check("d_kol <= first Kolmogorov bound", r.d_kol_measured, r.bound_kol_first);
        }
        check("smooth_h1 <= h1 bound", r.smooth_h1_measured, r.bound_h1);
        check("smooth_h2 <= h2 bound", r.smooth_h2_measured, r.bound_h2);
    }
    let tail: Vec<(usize, f64)> = rows.iter().filter(|r| r.n >= 256).map(|r| (r.n, r.d_kol_measured)).collect();
    Ok(ExperimentReport { constants: k, rows, kolmogorov_slope: loglog_slope(&tail), failures })
}
