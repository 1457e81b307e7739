//! Independent oracles and frozen reference values for the sum experiments.

use std::f64::consts::PI;

use statrs::function::factorial::ln_binomial;

use modstein_core::experiments::{
    c1_constant, correction_term, exact_sum_distribution, kolmogorov_distance, kolmogorov_leading_second,
    smooth_bound_h1, sum_constants, Summand,
};
use modstein_core::levy::poisson_expectation;
use modstein_core::numerics::integrate_line;
use modstein_core::phi4::{make_dist, Phi4Params};
use modstein_core::zerobias::{sum_zero_bias_law, zero_bias, DiscreteDist};

const C_RADEMACHER: f64 = 1.0 / 3.0;
const C1_FROZEN: f64 = 2.186241765251722;

/// int exp(-x^2/2 - C x^4/4) dx by adaptive quadrature instead of Gauss-Hermite.
fn c1_by_line_quadrature(c: f64) -> f64 {
    integrate_line(|x| (-x * x / 2.0 - c * x.powi(4) / 4.0).exp(), 1e-14, None).unwrap().value
}

#[test]
fn c1_matches_line_quadrature_and_frozen_value() {
    let c1 = c1_constant(C_RADEMACHER).unwrap();
    assert!((c1 - c1_by_line_quadrature(C_RADEMACHER)).abs() <= 1e-13 * c1);
    assert!((c1 - C1_FROZEN).abs() <= 1e-14 * C1_FROZEN);
    for c in [0.0, 0.05, 0.2, 0.5] {
        let a = c1_constant(c).unwrap();
        assert!((a - c1_by_line_quadrature(c)).abs() <= 1e-13 * a, "C = {c}");
    }
    assert!((c1_constant(0.0).unwrap() - (2.0 * PI).sqrt()).abs() <= 1e-14);
}

#[test]
fn rademacher_sum_matches_log_binomial_weights() {
    for n in [1usize, 2, 7, 64] {
        let z = exact_sum_distribution(&Summand::Rademacher, n).unwrap();
        let gamma = (n as f64).powf(0.25);
        assert_eq!(z.atoms().len(), n + 1);
        for (k, (a, p)) in z.atoms().iter().zip(z.probs()).enumerate() {
            let want = (ln_binomial(n as u64, k as u64) - n as f64 * 2f64.ln()).exp();
            assert!((p - want).abs() <= 1e-13 * want, "n={n} k={k}: {p} vs {want}");
            assert!((a - (2.0 * k as f64 - n as f64) / gamma).abs() <= 1e-14 * gamma.powi(3));
        }
    }
}

#[test]
fn rademacher_sum_matches_frozen_high_precision_weights() {
    // C(501, k) / 2^501 evaluated in 40-digit arithmetic.
    let frozen = [
        (0usize, 1.5274681817498023e-151),
        (1, 7.65261559056651e-149),
        (2, 1.9131538976416274e-146),
        (100, 3.896334449155253e-44),
        (250, 0.03559360044268501),
    ];
    let z = exact_sum_distribution(&Summand::Rademacher, 501).unwrap();
    for (k, want) in frozen {
        let p = z.probs()[k];
        assert!((p - want).abs() <= 1e-13 * want, "k={k}: {p} vs {want}");
        assert_eq!(p, z.probs()[501 - k]);
    }
}

#[test]
fn kolmogorov_distance_matches_brute_grid_scan() {
    let n = 4usize;
    let gamma = (n as f64).powf(0.25);
    let z = exact_sum_distribution(&Summand::Rademacher, n).unwrap();
    let h = make_dist(Phi4Params::new(gamma, C_RADEMACHER).unwrap(), 1e-13).unwrap();
    let exact = kolmogorov_distance(&z, |x| h.cdf(x));
    // Scan in unscaled sum coordinates so the integer atoms lie on the grid.
    let m = 1_000_000usize;
    let (lo, hi) = (-6.0f64, 6.0f64);
    let mut brute = 0.0f64;
    for i in 0..=m {
        let s = lo + (hi - lo) * i as f64 / m as f64;
        let x = s / gamma;
        let fd: f64 = z.atoms().iter().zip(z.probs()).filter(|(a, _)| **a <= x * (1.0 + 1e-15)).map(|(_, p)| p).sum();
        brute = brute.max((fd - h.cdf(x)).abs());
    }
    assert!((exact - brute).abs() <= 1e-9, "exact {exact} brute {brute}");
    // P(S_4 <= 0) = 11/16 against F(0) = 1/2.
    assert!((exact - 0.1875).abs() <= 1e-14);
}

#[test]
fn zero_bias_of_three_fold_sum_matches_defining_formula() {
    let gamma = 3f64.powf(0.25);
    let w = exact_sum_distribution(&Summand::Rademacher, 3).unwrap();
    // E W^2 = 3 / gamma^2; density E[W 1{W > x}] / E W^2 on each gap between atoms.
    let m2 = 3.0 / (gamma * gamma);
    let inner = (3.0 / 8.0 + 3.0 / 8.0) / gamma / m2;
    let outer = (3.0 / 8.0) / gamma / m2;
    let direct = zero_bias(&w).unwrap();
    let decomposed = sum_zero_bias_law(&DiscreteDist::rademacher(), 3, gamma).unwrap();
    for (x, want) in [(0.0, inner), (0.5 / gamma, inner), (2.0 / gamma, outer), (-2.5 / gamma, outer), (3.5 / gamma, 0.0)] {
        assert!((direct.pdf(x) - want).abs() <= 1e-14, "direct at {x}");
        assert!((decomposed.pdf(x) - want).abs() <= 1e-14, "decomposed at {x}");
    }
}

#[test]
fn first_smooth_bound_matches_hand_evaluation() {
    let k = sum_constants(&DiscreteDist::rademacher()).unwrap();
    assert!((k.c - C_RADEMACHER).abs() <= 1e-15);
    assert_eq!(k.sigma13, 1.0);
    // n = 16, gamma = 2, unit norms.
    let want = 4.0 * (2.0 * (1.0 - C_RADEMACHER)).sqrt() / 2.0 + (C_RADEMACHER * C1_FROZEN + 0.25);
    assert!((smooth_bound_h1(&k, 2.0, 1.0, 1.0) - want).abs() <= 1e-14 * want);
}

#[test]
fn second_kolmogorov_constant_matches_line_quadrature() {
    let k = sum_constants(&DiscreteDist::rademacher()).unwrap();
    let c1 = c1_by_line_quadrature(C_RADEMACHER);
    let c = C_RADEMACHER;
    let constant = 2.0 * ((3.0 + 2.0 * c) * (2.0 - 3.0 * c)).cbrt() / c1.powf(2.0 / 3.0);
    for gamma in [1.0, 2.0, 5.0] {
        let got = kolmogorov_leading_second(&k, gamma);
        assert!((got - constant / gamma.powf(4.0 / 3.0)).abs() <= 1e-13 * got);
    }
}

#[test]
fn correction_term_matches_two_quadratures() {
    let (gamma, c) = (2.0f64, C_RADEMACHER);
    let h_law = make_dist(Phi4Params::new(gamma, c).unwrap(), 1e-13).unwrap();
    let weight = |x: f64| (-x * x / (2.0 * gamma * gamma) - c * x.powi(4) / (4.0 * gamma.powi(8))).exp();
    let z = integrate_line(weight, 1e-14, None).unwrap().value;
    let eh = integrate_line(|x| weight(x) * (-(x / gamma).powi(2) / 2.0).exp(), 1e-14, None).unwrap().value / z;
    // E exp(-G^2/2) = 1/sqrt(2).
    let want = 0.5f64.sqrt() - eh;
    let got = correction_term(&h_law, |x| (-x * x / 2.0).exp()).unwrap();
    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
}

#[test]
fn poisson_series_matches_generating_function() {
    for lambda in [0.5, 4.0, 50.0] {
        for x in [0.0, 0.3, 1.0, 1.7] {
            let got = poisson_expectation(lambda, |k| if k == 0 { 1.0 } else { f64::powi(x, k as i32) });
            let want = (lambda * (x - 1.0)).exp();
            assert!((got - want).abs() <= 1e-13 * want.max(1e-300), "lambda={lambda} x={x}: {got} vs {want}");
        }
    }
}
