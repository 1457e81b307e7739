//! Pointwise certification of the tail estimates for the quartic law.
//!
//! Each family is reduced to a margin `rhs - lhs` that must be nonnegative. Margins
//! are formed from the ratio integrals S_k so that they stay finite where the
//! density underflows.

use rayon::prelude::*;
use serde::Serialize;

use super::{Phi4Dist, Phi4Params, Potential};
use crate::error::Result;
use crate::numerics::linspace;
use crate::report::VerificationReport;

/// Roundoff slack allowed on every margin.
pub const MARGIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AppendixFamily {
    /// Fbar <= f / rho on x > 0.
    TailUpper,
    /// F <= f / rho(|x|) on x < 0.
    CdfUpper,
    /// psi <= x f / rho.
    PsiUpper,
    /// F >= -rho f/(rho' + rho^2) and Fbar >= rho f/(rho' + rho^2).
    MillsLower,
    /// phi_low + phi_up <= 2 f / rho_tilde.
    PhiSum,
    /// (x + gamma) Gbar <= 3 gamma / 2.
    XGbar,
    /// sign(psi - f Qhat) = sign(x), read literally.
    PsiSign,
    /// (D - B Fbar/f) V <= 1 + 1.8 C on x >= 0.
    VI2,
    /// sign(F + f Q) = sign(x), sign(Fbar - f Q) = -sign(x).
    GSign,
    /// chi_up <= f / B on x >= 0.
    ChiUp,
    /// gamma sqrt(2 pi)(1 - 3C/(4 gamma^4)) <= z <= gamma sqrt(2 pi).
    ZBracket,
    /// 1 - 15C/(4 gamma^4) <= sigma^2/gamma^2 <= 1 + 3C/(4 gamma^4).
    VarianceBracket,
    /// Odd-extension reading of `PsiSign`: checks psi >= f Qhat on x > 0 only.
    PsiSignPositiveHalf,
}

/// The families making up the acceptance suite.
pub const ACCEPTANCE_FAMILIES: [AppendixFamily; 12] = [
    AppendixFamily::TailUpper,
    AppendixFamily::CdfUpper,
    AppendixFamily::PsiUpper,
    AppendixFamily::MillsLower,
    AppendixFamily::PhiSum,
    AppendixFamily::XGbar,
    AppendixFamily::PsiSign,
    AppendixFamily::VI2,
    AppendixFamily::GSign,
    AppendixFamily::ChiUp,
    AppendixFamily::ZBracket,
    AppendixFamily::VarianceBracket,
];

impl AppendixFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TailUpper => "tail_upper",
            Self::CdfUpper => "cdf_upper",
            Self::PsiUpper => "psi_upper",
            Self::MillsLower => "mills_lower",
            Self::PhiSum => "phi_sum",
            Self::XGbar => "x_gbar",
            Self::PsiSign => "psi_sign",
            Self::VI2 => "v_i2",
            Self::GSign => "g_sign",
            Self::ChiUp => "chi_up",
            Self::ZBracket => "z_bracket",
            Self::VarianceBracket => "variance_bracket",
            Self::PsiSignPositiveHalf => "psi_sign_positive_half",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ACCEPTANCE_FAMILIES
            .iter()
            .chain(std::iter::once(&Self::PsiSignPositiveHalf))
            .find(|f| f.name() == name)
            .copied()
    }

    /// None when (gamma, C) satisfies the family's hypotheses, else the reason.
    pub fn hypothesis_violation(&self, p: &Phi4Params) -> Option<String> {
        let (g, c) = (p.gamma(), p.c());
        let g4 = g.powi(4);
        match self {
            Self::PsiSign | Self::PsiSignPositiveHalf => {
                let need = 2.0 * c * (15f64.sqrt() / 3.0 - 1.0);
                (g4 < need).then(|| format!("needs gamma^4 >= 2C(sqrt(15)/3 - 1) = {need:.6}, got {g4:.6}"))
            }
            Self::VI2 => {
                let need = 1f64.max(12.0 * c);
                (g < need).then(|| format!("needs gamma >= max(1, 12C) = {need}, got {g}"))
            }
            Self::GSign => (g4 < 3.0 * c).then(|| format!("needs gamma^4 >= 3C = {}, got {g4}", 3.0 * c)),
            Self::ChiUp => (g < 1.0).then(|| format!("needs gamma >= 1, got {g}")),
            _ => None,
        }
    }
}

/// Linear grid on [-10 gamma, 10 gamma] refined logarithmically near 0 and +-gamma; 0 excluded.
pub fn appendix_grid(gamma: f64) -> Vec<f64> {
    let mut xs = linspace(-10.0 * gamma, 10.0 * gamma, 8000);
    for e in linspace(-6.0, 0.0, 500) {
        let d = gamma * 10f64.powf(e);
        xs.push(d);
        xs.push(-d);
    }
    for e in linspace(-6.0, -0.3, 250) {
        let d = gamma * 10f64.powf(e);
        for s in [-1.0, 1.0] {
            xs.push(s * (gamma + d));
            xs.push(s * (gamma - d));
        }
    }
    xs.retain(|x| *x != 0.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Qhat = (rho + x (rho^2 + 2 rho'))/B, written without the removable 1/x.
pub fn q_hat(p: &Phi4Params, x: f64) -> f64 {
    let (a, b) = (p.a(), p.b());
    let x2 = x * x;
    let num = ((b * b * x2 + 2.0 * a * b) * x2 + a * a + 7.0 * b) * x2 + 3.0 * a;
    num / q_den(p, x)
}

/// Q = (rho^2 + 2 rho')/B, odd with a pole at 0.
pub fn q_odd(p: &Phi4Params, x: f64) -> f64 {
    let (a, b) = (p.a(), p.b());
    let x2 = x * x;
    let num = ((b * b * x2 + 2.0 * a * b) * x2 + a * a + 6.0 * b) * x2 + 2.0 * a;
    num / (x * q_den(p, x))
}

fn q_den(p: &Phi4Params, x: f64) -> f64 {
    let (a, b) = (p.a(), p.b());
    let x2 = x * x;
    (((b * b * b * x2 + 3.0 * a * b * b) * x2 + 3.0 * b * (a * a + 3.0 * b)) * x2 + a * (a * a + 12.0 * b)) * x2
        + 3.0 * (a * a + 2.0 * b)
}

struct Point {
    x: f64,
    f: f64,
    s: [f64; 3],
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn margin(dist: &Phi4Dist, fam: AppendixFamily, pt: &Point) -> Option<f64> {
    let p = &dist.params;
    let Point { x, f, s } = *pt;
    let y = x.abs();
    let rho = p.rho(x);
    let pos = x > 0.0;
    // Fbar/f and F/f at x.
    let (upper_ratio, lower_ratio) = if pos { (s[0], 1.0 / f - s[0]) } else { (1.0 / f - s[0], s[0]) };
    match fam {
        AppendixFamily::TailUpper => pos.then(|| f * (1.0 / rho - s[0])),
        AppendixFamily::CdfUpper => (!pos).then(|| f * (1.0 / p.rho(y) - s[0])),
        AppendixFamily::PsiUpper => Some(f * (1.0 / p.rho_tilde(x) - (s[1] + y * s[0]))),
        AppendixFamily::MillsLower => {
            let r = rho / (p.rho_prime(x) + rho * rho);
            let lower = f * (lower_ratio + r);
            let upper = f * (upper_ratio - r);
            Some(lower.min(upper))
        }
        AppendixFamily::PhiSum => Some(2.0 * f / p.rho_tilde(x) - (y + 2.0 * f * s[1])),
        AppendixFamily::XGbar => {
            let gbar = 1.0 - rho * upper_ratio;
            let g = p.gamma();
            Some(1.5 * g - (x + g) * gbar)
        }
        AppendixFamily::PsiSign => Some(sign(x) * f * (s[1] + y * s[0] - q_hat(p, x))),
        AppendixFamily::PsiSignPositiveHalf => pos.then(|| f * (s[1] + y * s[0] - q_hat(p, x))),
        AppendixFamily::VI2 => pos.then(|| {
            let v = dist.v_gamma(x);
            1.0 + 1.8 * p.c() - (p.d_gamma(x) - p.b_gamma(x) * s[0]) * v
        }),
        AppendixFamily::GSign => {
            let q = q_odd(p, x);
            let first = sign(x) * f * (lower_ratio + q);
            let second = -sign(x) * f * (upper_ratio - q);
            Some(first.min(second))
        }
        AppendixFamily::ChiUp => pos.then(|| f * (1.0 / p.b_gamma(x) - 0.5 * s[2])),
        AppendixFamily::ZBracket | AppendixFamily::VarianceBracket => None,
    }
}

fn bracket_report(dist: &Phi4Dist, fam: AppendixFamily) -> VerificationReport {
    let p = &dist.params;
    let (g, c) = (p.gamma(), p.c());
    let eps = c / g.powi(4);
    let (lo, hi, v) = match fam {
        AppendixFamily::ZBracket => {
            let top = g * (2.0 * std::f64::consts::PI).sqrt();
            (top * (1.0 - 0.75 * eps), top, dist.z_gamma)
        }
        _ => (1.0 - 3.75 * eps, 1.0 + 0.75 * eps, dist.sigma2 / (g * g)),
    };
    VerificationReport::from_margins(fam.name(), g, c, MARGIN_SLACK, [(0.0, v - lo), (0.0, hi - v)])
}

/// Runs the requested families at one parameter point.
pub fn verify_appendix(dist: &Phi4Dist, families: &[AppendixFamily]) -> Result<Vec<VerificationReport>> {
    let p = dist.params;
    let grid = appendix_grid(p.gamma());
    let points: Vec<Point> = grid
        .par_iter()
        .map(|&x| {
            Ok(Point {
                x,
                f: dist.pdf(x),
                s: dist.shift_moments(x.abs())?,
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(families.len());
    for &fam in families {
        if let Some(reason) = fam.hypothesis_violation(&p) {
            out.push(VerificationReport::skipped(fam.name(), p.gamma(), p.c(), reason));
            continue;
        }
        let report = match fam {
            AppendixFamily::ZBracket | AppendixFamily::VarianceBracket => bracket_report(dist, fam),
            _ => VerificationReport::from_margins(
                fam.name(),
                p.gamma(),
                p.c(),
                MARGIN_SLACK,
                points.iter().filter_map(|pt| margin(dist, fam, pt).map(|m| (pt.x, m))),
            ),
        };
        out.push(report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi4::make_dist;

    #[test]
    fn grid_size_and_order() {
        let g = appendix_grid(2.0);
        assert!(g.len() >= 9_900 && g.len() <= 10_000, "{}", g.len());
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(!g.contains(&0.0));
    }

    #[test]
    fn rational_forms_match_definitions() {
        let p = Phi4Params::new(1.3, 0.7).unwrap();
        for x in [-2.1, -0.4, 0.3, 1.7] {
            let r = p.rho(x);
            let b = p.b_gamma(x);
            let qh = (r + x * (r * r + 2.0 * p.rho_prime(x))) / b;
            let q = (r * r + 2.0 * p.rho_prime(x)) / b;
            assert!((q_hat(&p, x) - qh).abs() < 1e-12 * qh.abs());
            assert!((q_odd(&p, x) - q).abs() < 1e-12 * q.abs());
        }
    }

    #[test]
    fn hypothesis_gates() {
        let p = Phi4Params::new(1.0, 1.0).unwrap();
        assert!(AppendixFamily::VI2.hypothesis_violation(&p).is_some());
        assert!(AppendixFamily::GSign.hypothesis_violation(&p).is_some());
        assert!(AppendixFamily::ChiUp.hypothesis_violation(&p).is_none());
        let p = Phi4Params::new(5.0, 0.1).unwrap();
        assert!(AppendixFamily::VI2.hypothesis_violation(&p).is_none());
    }

    #[test]
    fn tail_upper_holds_at_unit_scale() {
        let d = make_dist(Phi4Params::new(1.0, 1.0 / 3.0).unwrap(), 1e-13).unwrap();
        let r = verify_appendix(&d, &[AppendixFamily::TailUpper, AppendixFamily::ZBracket]).unwrap();
        assert!(r.iter().all(|r| r.passed), "{r:?}");
    }

    #[test]
    fn names_round_trip() {
        for f in ACCEPTANCE_FAMILIES {
            assert_eq!(AppendixFamily::from_name(f.name()), Some(f));
        }
    }
}
