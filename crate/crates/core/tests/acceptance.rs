//! Acceptance suite. Runs every criterion at its stated tolerance and runtime budget,
//! printing one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use modstein_core::experiments::{run_experiment, ExperimentConfig};
use modstein_core::levy::{poisson_char_ratio, poisson_char_sides, sample_subordinator, LevyTriplet};
use modstein_core::numerics::{integrate_line, linspace, Poly};
use modstein_core::penalize::{
    fourier_duality_gap, hermite_coeffs, laplace_duality_gap, phi_exp_affine, phi_quartic, phi_tilde, quartic_exponent,
    signed_density, PenalizedLaw,
};
use modstein_core::phi4::appendix::{verify_appendix, ACCEPTANCE_FAMILIES};
use modstein_core::phi4::{make_dist, DensityLaw, GaussianPotential, Phi4Params};
use modstein_core::stein::{
    characterization_residual, gauss_bump, integral_representation_check, odd_bump, operator_norm_report, sech_bump,
    signed_stein_residual, standard_probes, Representation, NORM_GRID_POINTS,
};
use modstein_core::zerobias::{
    c_bias_density, sum_zero_bias_law, zero_bias, zero_bias_identity_gap, zero_bias_moments, CBiasCoefficient, DiscreteDist,
};
use modstein_core::Result;

const GAMMAS: [f64; 3] = [1.0, 2.0, 5.0];
const CS: [f64; 4] = [0.1, 1.0 / 3.0, 1.0, 3.0];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn quartic(g: f64, c: f64) -> Result<modstein_core::phi4::Phi4Dist> {
    make_dist(Phi4Params::new(g, c)?, 1e-13)
}

fn laplace_duality() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for c in [0.1, 1.0 / 3.0, 1.0] {
        let phi = phi_quartic(c)?;
        for g in GAMMAS {
            for u in linspace(-2.0, 2.0, 21) {
                worst = worst.max(laplace_duality_gap(&phi, g, u)?);
            }
        }
    }
    outcome(worst <= 1e-8, format!("max gap {worst:.3e} (tol 1e-8)"))
}

fn fourier_duality() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for c in [0.1, 1.0 / 3.0, 1.0] {
        let phi = phi_quartic(c)?;
        for g in GAMMAS {
            for theta in linspace(-2.0, 2.0, 21) {
                worst = worst.max(fourier_duality_gap(&phi, g, theta)?);
            }
        }
    }
    outcome(worst <= 1e-7, format!("max modulus gap {worst:.3e} (tol 1e-7)"))
}

fn appendix_suite() -> Result<Outcome> {
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut skipped = 0;
    for g in GAMMAS {
        for c in CS {
            for r in verify_appendix(&quartic(g, c)?, &ACCEPTANCE_FAMILIES)? {
                if r.is_skipped() {
                    skipped += 1;
                    continue;
                }
                checked += 1;
                if !(r.worst_margin >= -1e-12) {
                    failures.push(format!("{}@({g},{c:.4}) margin {:.2e} at x={:.3}", r.family, r.worst_margin, r.argmin_x));
                }
            }
        }
    }
    let shown: Vec<&str> = failures.iter().take(6).map(String::as_str).collect();
    outcome(
        failures.is_empty(),
        format!("{checked} checked, {skipped} outside hypotheses, {} failing: {}", failures.len(), shown.join("; ")),
    )
}

fn operator_norms() -> Result<Outcome> {
    let probes = standard_probes();
    let mut worst_ratio = 0.0f64;
    let mut failures = Vec::new();
    let mut skipped = 0;
    for g in GAMMAS {
        for c in [0.1, 1.0 / 3.0, 1.0] {
            for r in operator_norm_report(&quartic(g, c)?, &probes[..3], NORM_GRID_POINTS)? {
                if r.is_skipped() {
                    skipped += 1;
                    continue;
                }
                let ratio = r.ratio.unwrap_or(f64::NAN);
                worst_ratio = worst_ratio.max(ratio);
                if !r.passed || !(ratio <= 1.0) {
                    failures.push(format!("{}@({g},{c:.4})", r.family));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("max measured/bound {worst_ratio:.3}, {skipped} outside gamma >= 3C, failing: {failures:?}"),
    )
}

fn stein_characterization() -> Result<Outcome> {
    let probes = standard_probes();
    let mut worst = 0.0f64;
    for g in GAMMAS {
        for c in CS {
            let p = Phi4Params::new(g, c)?;
            let law = quartic(g, c)?;
            worst = worst.max(characterization_residual(&p, &law, &probes)?.into_iter().fold(0.0, f64::max));
        }
    }
    // Mismatched law N(0, gamma^2) under Phi_{1/3}, probes on the law's own scale.
    let mut mismatch = Vec::new();
    for g in GAMMAS {
        let gauss = DensityLaw::new(GaussianPotential::new(g)?, 1e-13)?;
        let scaled: Vec<_> = probes.iter().map(|h| h.scaled(g)).collect();
        let r = characterization_residual(&Phi4Params::new(g, 1.0 / 3.0)?, &gauss, &scaled)?;
        mismatch.push(r.into_iter().fold(0.0, f64::max));
    }
    let best = mismatch.iter().copied().fold(0.0, f64::max);
    let shown: Vec<String> = mismatch.iter().map(|m| format!("{m:.3e}")).collect();
    outcome(
        worst <= 1e-9 && best > 1e-3,
        format!("max residual {worst:.2e} (tol 1e-9); mismatched residual per gamma [{}] (need > 1e-3)", shown.join(", ")),
    )
}

fn integral_representations() -> Result<Outcome> {
    let d = quartic(2.0, 1.0 / 3.0)?;
    let grid = linspace(-12.0, 12.0, 97);
    let mut worst = 0.0f64;
    for h in &standard_probes()[..3] {
        for v in Representation::ALL {
            worst = worst.max(integral_representation_check(&d, h, v, &grid)?);
        }
    }
    outcome(worst <= 1e-6, format!("sup gap {worst:.2e} over 4 variants x 3 probes (tol 1e-6)"))
}

fn zero_bias_suite() -> Result<Outcome> {
    let laws = [
        DiscreteDist::rademacher(),
        DiscreteDist::new(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25])?,
        DiscreteDist::new(vec![-2.0, -0.5, 0.5, 2.0], vec![0.1, 0.4, 0.4, 0.1])?,
    ];
    let mut identity = 0.0f64;
    for law in &laws {
        for k in 0..=5 {
            identity = identity.max(zero_bias_identity_gap(law, &Poly::monomial(k))?);
        }
        identity = identity.max(zero_bias_identity_gap(law, &Poly::new(vec![0.3, -1.0, 0.5, 2.0, -0.25, 0.125]))?);
    }
    let (m1, m2) = zero_bias_moments(&laws[0]);
    let moments_gap = (m1 - 0.5).abs().max((m2 - 1.0 / 3.0).abs());
    let mut sum_gap = 0.0f64;
    for law in &laws {
        for n in 1..=4usize {
            let g = (n as f64).powf(0.25);
            let a = sum_zero_bias_law(law, n, g)?;
            let b = zero_bias(&law.n_fold(n)?.scaled(g)?)?;
            for x in a.breakpoints.iter().chain(&b.breakpoints) {
                sum_gap = sum_gap.max((a.cdf(*x) - b.cdf(*x)).abs());
            }
        }
    }
    outcome(
        identity <= 1e-12 && moments_gap <= 1e-12 && sum_gap <= 1e-12,
        format!("identity gap {identity:.1e}, Rademacher moments off by {moments_gap:.1e}, sum-law CDF gap {sum_gap:.1e} (tol 1e-12)"),
    )
}

fn c_bias_fixed_point() -> Result<Outcome> {
    let c = 1.0 / 3.0;
    let mut worst = 0.0f64;
    for g in [1.0, 2.0] {
        let d = quartic(g, c)?;
        let xs = linspace(-6.0 * g, 6.0 * g, 2001);
        let (f, _) = c_bias_density(&d, CBiasCoefficient::Corrected.value(g, c), &xs)?;
        for (x, y) in xs.iter().zip(&f.ys) {
            worst = worst.max((y - d.pdf(*x)).abs());
        }
    }
    outcome(worst <= 1e-8, format!("sup |f_C - f_gamma| {worst:.2e} on [-6 gamma, 6 gamma] (tol 1e-8)"))
}

fn rademacher_end_to_end() -> Result<Outcome> {
    let report = run_experiment(&ExperimentConfig::rademacher(vec![4, 16, 64, 256, 1024, 4096]))?;
    let slope = report.kolmogorov_slope.unwrap_or(f64::NAN);
    let slope_ok = (-0.55..=-0.40).contains(&slope);
    let ratios: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("n={} {:.2}", r.n, r.d_kol_measured / r.bound_kol_second))
        .collect();
    outcome(
        report.passed() && slope_ok,
        format!("d_kol/leading bound [{}], slope {slope:.4}, {} bound violations", ratios.join(", "), report.failures.len()),
    )
}

fn levy_poisson() -> Result<Outcome> {
    let phi = phi_exp_affine();
    let mut identity = 0.0f64;
    for g in [3.0, 10.0] {
        for x in [0.5, 1.0, 2.0] {
            let (lhs, rhs) = poisson_char_sides(&phi, g, x)?;
            identity = identity.max((lhs - rhs).abs());
        }
    }
    let mut limit_at_40 = 0.0f64;
    let mut monotone = true;
    for x in [0.5, 1.0, 2.0] {
        let errs = [5.0, 10.0, 20.0, 40.0]
            .iter()
            .map(|&g| Ok((poisson_char_ratio(&phi, g, x)? - phi.eval(x)).abs()))
            .collect::<Result<Vec<f64>>>()?;
        monotone &= errs.windows(2).all(|w| w[1] <= w[0].max(1e-12));
        limit_at_40 = limit_at_40.max(errs[3]);
    }
    let dickman = LevyTriplet::dickman();
    let mut round_trip = 0.0f64;
    for y in linspace(-3.0, 3.0, 121) {
        round_trip = round_trip.max((dickman.upsilon(dickman.lambda_prime(y)?)? - y).abs());
    }
    let paths = sample_subordinator(&dickman, 1.0, 1e-6, 1_000_000, 20_240_601)?;
    let mean = paths.iter().sum::<f64>() / paths.len() as f64;
    outcome(
        identity <= 1e-10 && limit_at_40 <= 0.05 && monotone && round_trip <= 1e-10 && (mean - 1.0).abs() <= 0.01,
        format!(
            "identity gap {identity:.1e}, mod-limit error at gamma=40 {limit_at_40:.4} (monotone: {monotone}), Upsilon round trip {round_trip:.1e}, Dickman mean {mean:.5}"
        ),
    )
}

fn hermite_signed() -> Result<Outcome> {
    let (g, c) = (2.0, 1.0 / 3.0);
    let law = PenalizedLaw::new(phi_quartic(c)?, g)?;
    let a = hermite_coeffs(&law.phi, g, 40)?;
    let mut series = 0.0f64;
    for u in linspace(-1.0, 1.0, 41) {
        let direct = integrate_line(|x| (u * x).cos() * law.pdf(x), 1e-13, None)?.value;
        let approx = phi_tilde(&a, g, u, 40)? * (-(g * g * u * u) / 2.0).exp();
        series = series.max((Complex64::new(direct, 0.0) - approx).norm());
    }
    let p = quartic_exponent(c, g);
    let density = signed_density(&p, g, &linspace(-12.0 * g, 12.0 * g, 4801))?;
    let mass = density.trapezoid();
    let mut residual = 0.0f64;
    for h in [odd_bump(), sech_bump(), gauss_bump(), odd_bump().scaled(g)] {
        residual = residual.max(signed_stein_residual(&p, g, &h)?);
    }
    outcome(
        series <= 1e-6 && (mass - 1.0).abs() <= 1e-6 && residual <= 1e-5,
        format!("Hermite series gap {series:.1e}, signed mass - 1 = {:.1e}, signed Stein residual {residual:.1e}", mass - 1.0),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>, Duration);

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 Laplace duality", laplace_duality, Duration::from_secs(5)),
        ("2 Fourier duality", fourier_duality, Duration::from_secs(10)),
        ("3 inequality suite", appendix_suite, Duration::from_secs(60)),
        ("4 operator norms", operator_norms, Duration::from_secs(120)),
        ("5 Stein characterization", stein_characterization, Duration::from_secs(10)),
        ("6 integral representations", integral_representations, Duration::from_secs(30)),
        ("7 zero-bias", zero_bias_suite, Duration::from_secs(5)),
        ("8 C-bias fixed point", c_bias_fixed_point, Duration::from_secs(10)),
        ("9 Rademacher end-to-end", rademacher_end_to_end, Duration::from_secs(60)),
        ("10 Levy and Poisson", levy_poisson, Duration::from_secs(120)),
        ("11 Hermite and signed measure", hermite_signed, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {detail} [{:.2}s of {}s]",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
