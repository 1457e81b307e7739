//! `modstein` command line front end.
//!
//! Exit codes: 0 success, 2 hypothesis violation or bad input, 3 verification failure,
//! 4 numerical tolerance failure.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use modstein_core::experiments::{rows_to_csv, run_experiment, ExperimentConfig, Summand};
use modstein_core::levy::{mod_levy_duality_gap, poisson_char_sides, LevyTriplet, MonteCarloOptions};
use modstein_core::numerics::linspace;
use modstein_core::penalize::{
    fourier_duality_gap, hermite_coeffs, laplace_duality_gap, phi_exp_affine, phi_quartic, quartic_exponent,
    signed_density,
};
use modstein_core::phi4::appendix::{verify_appendix, AppendixFamily, ACCEPTANCE_FAMILIES};
use modstein_core::phi4::{make_dist, Phi4Params};
use modstein_core::report::VerificationReport;
use modstein_core::stein::{operator_norm_report, standard_probes, NORM_GRID_POINTS};
use modstein_core::zerobias::DiscreteDist;
use modstein_core::Error;

const REL_TOL: f64 = 1e-12;
const MARGIN_SLACK: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "modstein", version, about = "Quartic-penalized Gaussian laws and their Stein bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate or sample the quartic law.
    #[command(subcommand)]
    Phi4(Phi4Command),
    /// Run the inequality and operator-norm sweeps.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Duality gaps between tilted and penalized expectations.
    #[command(subcommand)]
    Duality(DualityCommand),
    /// Exact i.i.d.-sum experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Hermite coefficients of the penalized density.
    Edgeworth(EdgeworthArgs),
    /// Density of the quartic signed measure on a grid.
    SignedMeasure(SignedArgs),
}

#[derive(Args)]
struct LawArgs {
    #[arg(long)]
    gamma: f64,
    /// Quartic coefficient; fractions such as 1/3 are accepted.
    #[arg(long, value_parser = parse_real)]
    c: f64,
}

#[derive(Subcommand)]
enum Phi4Command {
    /// pdf, cdf, tail and the tail functionals at each x, as JSON.
    Eval {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, num_args = 1.., required = true, allow_hyphen_values = true, value_parser = parse_real)]
        x: Vec<f64>,
    },
    /// Draw samples by rejection into a one-column CSV.
    Sample {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Lattice {
    #[arg(long, value_delimiter = ',', default_value = "1,2,5", value_parser = parse_real)]
    gamma_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1/3,1,3", value_parser = parse_real)]
    c_list: Vec<f64>,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Inequality families on 10^4-point grids; fails if any margin is below -1e-12.
    Appendix {
        #[command(flatten)]
        lattice: Lattice,
        /// Restrict to one family by name.
        #[arg(long)]
        lemma: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operator-norm bounds on the probe family; fails if any measured/bound ratio exceeds one.
    OperatorNorms {
        #[command(flatten)]
        lattice: Lattice,
        #[arg(long, default_value_t = NORM_GRID_POINTS)]
        grid_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DualityCommand {
    /// Laplace duality for Phi_C(x) = exp(-C x^4 / 4).
    Gaussian {
        #[command(flatten)]
        lattice: Lattice,
        #[arg(long, default_value = "-2:2:21", value_parser = parse_grid, allow_hyphen_values = true)]
        u_grid: Grid,
    },
    /// Fourier duality for Phi_C.
    Fourier {
        #[command(flatten)]
        lattice: Lattice,
        #[arg(long, default_value = "-2:2:21", value_parser = parse_grid, allow_hyphen_values = true)]
        theta_grid: Grid,
    },
    /// Poisson duality for Phi(t) = exp(1 - t), closed form on both sides.
    Poisson {
        #[arg(long, value_delimiter = ',', default_value = "3,10", value_parser = parse_real)]
        gamma_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2", value_parser = parse_real)]
        x_list: Vec<f64>,
    },
    /// Mod-Levy duality for a subordinator with Phi(t) = exp(1 - t).
    Levy {
        #[arg(long, value_enum, default_value_t = TripletName::Dickman)]
        triplet: TripletName,
        #[arg(long, default_value_t = 3.0)]
        gamma: f64,
        #[arg(long, value_delimiter = ',', default_value = "1.5,2", value_parser = parse_real)]
        x_list: Vec<f64>,
        #[arg(long, default_value_t = 200_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TripletName {
    Poisson,
    Dickman,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Kolmogorov and smooth distances between Z_n and H_n with the explicit bounds.
    IidSum {
        /// `rademacher` or a CSV file with `atom,prob` rows.
        #[arg(long, default_value = "rademacher")]
        dist: String,
        #[arg(long, value_delimiter = ',', default_value = "4,16,64,256,1024,4096")]
        n_list: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON report with constants, slope and failures.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EdgeworthArgs {
    #[command(flatten)]
    law: LawArgs,
    #[arg(long, default_value_t = 40)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SignedArgs {
    #[command(flatten)]
    law: LawArgs,
    /// LO:HI:N
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    grid: Grid,
    #[arg(long)]
    out: PathBuf,
}

/// A real number or a fraction p/q.
fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let q: f64 = q.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            if q == 0.0 {
                return Err(format!("{s}: zero denominator"));
            }
            Ok(p / q)
        }
        None => s.parse().map_err(|e| format!("{s}: {e}")),
    }
}

/// Evenly spaced points given as LO:HI:N.
#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("{s}: expected LO:HI:N"));
    }
    let lo = parse_real(parts[0])?;
    let hi = parse_real(parts[1])?;
    let n: usize = parts[2].parse().map_err(|e| format!("{s}: {e}"))?;
    if n < 2 || !(lo < hi) {
        return Err(format!("{s}: need LO < HI and N >= 2"));
    }
    Ok(Grid(linspace(lo, hi, n)))
}

/// A failed sweep, reported with exit code 3.
#[derive(Debug)]
struct VerificationFailed(String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::ToleranceNotMet { .. } | Error::Cutoff { .. } | Error::Budget(_) | Error::Bracket { .. }) => 4,
        _ => 2,
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => {
            if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn quartic(gamma: f64, c: f64) -> anyhow::Result<modstein_core::phi4::Phi4Dist> {
    Ok(make_dist(Phi4Params::new(gamma, c)?, REL_TOL)?)
}

#[derive(Serialize)]
struct EvalRow {
    x: f64,
    pdf: f64,
    cdf: f64,
    tail: f64,
    psi: f64,
    phi_low: f64,
    phi_up: f64,
    chi_low: f64,
    chi_up: f64,
}

fn phi4(cmd: Phi4Command) -> anyhow::Result<()> {
    match cmd {
        Phi4Command::Eval { law, x } => {
            let d = quartic(law.gamma, law.c)?;
            let rows = x
                .iter()
                .map(|&x| {
                    let t = d.tail_functionals(x)?;
                    Ok(EvalRow {
                        x,
                        pdf: t.pdf,
                        cdf: t.cdf,
                        tail: t.tail,
                        psi: t.psi,
                        phi_low: t.phi_low,
                        phi_up: t.phi_up,
                        chi_low: t.chi_low,
                        chi_up: t.chi_up,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            write_json(&rows, None)
        }
        Phi4Command::Sample { law, n, seed, out } => {
            let d = quartic(law.gamma, law.c)?;
            let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
            w.write_record(["x"])?;
            for v in d.sample(n, seed) {
                w.write_record([format!("{v:.17e}")])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SweepReport {
    passed: bool,
    failures: usize,
    skipped: usize,
    reports: Vec<VerificationReport>,
}

fn finish_sweep(reports: Vec<VerificationReport>, out: Option<&Path>, failed: impl Fn(&VerificationReport) -> bool) -> anyhow::Result<()> {
    let failures: Vec<String> = reports
        .iter()
        .filter(|r| !r.is_skipped() && failed(r))
        .map(|r| format!("{} at gamma={}, C={}", r.family, r.gamma, r.c))
        .collect();
    let report = SweepReport {
        passed: failures.is_empty(),
        failures: failures.len(),
        skipped: reports.iter().filter(|r| r.is_skipped()).count(),
        reports,
    };
    write_json(&report, out)?;
    if !failures.is_empty() {
        return Err(VerificationFailed(failures.join("; ")).into());
    }
    Ok(())
}

fn verify(cmd: VerifyCommand) -> anyhow::Result<()> {
    match cmd {
        VerifyCommand::Appendix { lattice, lemma, out } => {
            let families: Vec<AppendixFamily> = match lemma {
                Some(name) => vec![AppendixFamily::from_name(&name).ok_or_else(|| {
                    let known: Vec<&str> = ACCEPTANCE_FAMILIES.iter().map(|f| f.name()).collect();
                    anyhow!("unknown family {name}; known: {}", known.join(", "))
                })?],
                None => ACCEPTANCE_FAMILIES.to_vec(),
            };
            let mut reports = Vec::new();
            for &g in &lattice.gamma_list {
                for &c in &lattice.c_list {
                    reports.extend(verify_appendix(&quartic(g, c)?, &families)?);
                }
            }
            finish_sweep(reports, out.as_deref(), |r| !(r.worst_margin >= -MARGIN_SLACK))
        }
        VerifyCommand::OperatorNorms { lattice, grid_points, out } => {
            let probes = standard_probes();
            let probes = &probes[..3];
            let mut reports = Vec::new();
            for &g in &lattice.gamma_list {
                for &c in &lattice.c_list {
                    reports.extend(operator_norm_report(&quartic(g, c)?, probes, grid_points)?);
                }
            }
            finish_sweep(reports, out.as_deref(), |r| !r.passed || r.ratio.is_some_and(|q| q > 1.0))
        }
    }
}

#[derive(Serialize)]
struct GapRow {
    gamma: f64,
    c: Option<f64>,
    point: f64,
    gap: f64,
    std_error: Option<f64>,
}

#[derive(Serialize)]
struct GapReport {
    max_gap: f64,
    rows: Vec<GapRow>,
}

fn gap_report(rows: Vec<GapRow>) -> GapReport {
    GapReport { max_gap: rows.iter().map(|r| r.gap).fold(0.0, f64::max), rows }
}

fn quartic_gaps(lattice: &Lattice, points: &[f64], gap: fn(&modstein_core::penalize::PenalizingFunction, f64, f64) -> modstein_core::Result<f64>) -> anyhow::Result<Vec<GapRow>> {
    let mut rows = Vec::new();
    for &c in &lattice.c_list {
        let phi = phi_quartic(c)?;
        for &g in &lattice.gamma_list {
            for &u in points {
                rows.push(GapRow { gamma: g, c: Some(c), point: u, gap: gap(&phi, g, u)?, std_error: None });
            }
        }
    }
    Ok(rows)
}

fn duality(cmd: DualityCommand) -> anyhow::Result<()> {
    let rows = match cmd {
        DualityCommand::Gaussian { lattice, u_grid } => quartic_gaps(&lattice, &u_grid.0, laplace_duality_gap)?,
        DualityCommand::Fourier { lattice, theta_grid } => quartic_gaps(&lattice, &theta_grid.0, fourier_duality_gap)?,
        DualityCommand::Poisson { gamma_list, x_list } => {
            let phi = phi_exp_affine();
            let mut rows = Vec::new();
            for &g in &gamma_list {
                for &x in &x_list {
                    let (lhs, rhs) = poisson_char_sides(&phi, g, x)?;
                    rows.push(GapRow { gamma: g, c: None, point: x, gap: (lhs - rhs).abs(), std_error: None });
                }
            }
            rows
        }
        DualityCommand::Levy { triplet, gamma, x_list, paths, seed } => {
            let t = match triplet {
                TripletName::Poisson => LevyTriplet::poisson(),
                TripletName::Dickman => LevyTriplet::dickman(),
            };
            let mc = MonteCarloOptions { paths, seed, ..MonteCarloOptions::default() };
            let mut rows = Vec::new();
            for &x in &x_list {
                let r = mod_levy_duality_gap(&phi_exp_affine(), &t, gamma, x, mc)?;
                rows.push(GapRow { gamma, c: None, point: x, gap: r.gap, std_error: r.std_error });
            }
            rows
        }
    };
    write_json(&gap_report(rows), None)
}

#[derive(Deserialize)]
struct AtomRow {
    atom: f64,
    prob: f64,
}

/// Reads `atom,prob` rows; the law must be symmetric with zero mean.
fn read_discrete_law(path: &Path) -> anyhow::Result<DiscreteDist> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for row in reader.deserialize() {
        let row: AtomRow = row.with_context(|| format!("parsing {}", path.display()))?;
        pairs.push((row.atom, row.prob));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (atoms, probs) = pairs.into_iter().unzip();
    let law = DiscreteDist::new(atoms, probs)?;
    if !law.is_symmetric(1e-14) {
        return Err(Error::Hypothesis(format!("{} is not symmetric", path.display())).into());
    }
    if law.moment(1).abs() > 1e-14 {
        return Err(Error::Hypothesis(format!("{} does not have zero mean", path.display())).into());
    }
    Ok(law)
}

fn experiment(cmd: ExperimentCommand) -> anyhow::Result<()> {
    let ExperimentCommand::IidSum { dist, n_list, out, json } = cmd;
    let summand = if dist == "rademacher" { Summand::Rademacher } else { Summand::Custom(read_discrete_law(Path::new(&dist))?) };
    let report = run_experiment(&ExperimentConfig { summand, n_list, rel_tol: REL_TOL })?;
    std::fs::write(&out, rows_to_csv(&report.rows)).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = json {
        write_json(&report, Some(&path))?;
    }
    if !report.passed() {
        let msg: Vec<String> = report.failures.iter().map(|f| format!("n={}: {} ({} > {})", f.n, f.check, f.measured, f.bound)).collect();
        return Err(VerificationFailed(msg.join("; ")).into());
    }
    Ok(())
}

fn edgeworth(args: EdgeworthArgs) -> anyhow::Result<()> {
    let coeffs = hermite_coeffs(&phi_quartic(args.law.c)?, args.law.gamma, args.k)?;
    let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    w.write_record(["k", "a_k"])?;
    for (k, a) in coeffs.iter().enumerate() {
        w.write_record([k.to_string(), format!("{a:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

fn signed_measure(args: SignedArgs) -> anyhow::Result<()> {
    if !(args.law.gamma > 0.0) {
        bail!("gamma must be positive");
    }
    let p = quartic_exponent(args.law.c, args.law.gamma);
    let density = signed_density(&p, args.law.gamma, &args.grid.0)?;
    let mut file = File::create(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(file, "x,density")?;
    for (x, y) in density.xs.iter().zip(&density.ys) {
        writeln!(file, "{x:.17e},{y:.17e}")?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Phi4(c) => phi4(c),
        Command::Verify(c) => verify(c),
        Command::Duality(c) => duality(c),
        Command::Experiment(c) => experiment(c),
        Command::Edgeworth(a) => edgeworth(a),
        Command::SignedMeasure(a) => signed_measure(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
