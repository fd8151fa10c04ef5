mod input;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use fdiv_core::estimators::{
    estimate_norm_ball, estimate_nwj, estimate_restricted, EstimatorConfig, KernelRule, LambdaRule,
};
use fdiv_core::experiment::{
    run_experiment, summarize, summary_path, timing_path, write_records, write_summary, write_timing, ExperimentConfig,
    OutputFormat, OutputSpec, Summary,
};
use fdiv_core::generators::{make_generator, GENERATOR_NAMES};
use fdiv_core::kernels::{pooled_variance_bandwidth, KernelSpec};
use fdiv_core::oracle::{certify, CertifyOptions, CertifyReport};
use fdiv_core::Error;
use input::{read_samples, ParseError};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OTHER: u8 = 1;
const EXIT_PARSE: u8 = 3;
const EXIT_PRECONDITION: u8 = 4;
const EXIT_NOT_CONVERGED: u8 = 5;
const EXIT_CERTIFICATION: u8 = 6;
const EXIT_CONFIG: u8 = 7;

#[derive(Parser)]
#[command(name = "fdiv", version, about = "Kernel f-divergence estimation and certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the divergence between two sample files.
    Estimate(EstimateArgs),
    /// Run a beta-pair benchmark described by a TOML config.
    Bench(BenchArgs),
    /// Certify the variational inequalities on random discrete instances.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Restricted,
    NormBall,
    Nwj,
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// Sample from P, one point per line.
    x: PathBuf,
    /// Sample from Q, same shape as X.
    y: PathBuf,
    #[arg(long, value_enum, default_value = "restricted")]
    estimator: EstimatorArg,
    #[arg(long, default_value = "kl")]
    generator: String,
    /// Fixed λ; overrides --lambda-c.
    #[arg(long)]
    lambda: Option<f64>,
    /// λ = c / n
    #[arg(long, default_value_t = 1.0)]
    lambda_c: f64,
    /// Fixed RBF bandwidth σ in exp(−‖a−b‖²/(2σ)); default is the pooled variance.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
    /// Skip the first non-comment line of each file.
    #[arg(long)]
    header: bool,
    /// Also write the full result (weights included) as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    config: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Results file; overrides the config's output path.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(clap::Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(2..))]
    max_support: u64,
    /// Comma-separated generator names; default is all of them.
    #[arg(long, value_delimiter = ',')]
    generators: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Self-test hook: adds a KL generator whose conjugate is off by a constant.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

/// A solve that stopped before reaching its tolerance.
#[derive(Debug)]
struct NotConverged;

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("solver did not reach the requested tolerance")
    }
}

impl std::error::Error for NotConverged {}

#[derive(Debug)]
struct CertificationFailed(usize);

impl std::fmt::Display for CertificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} certification check(s) failed", self.0)
    }
}

impl std::error::Error for CertificationFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ParseError>().is_some() {
        return EXIT_PARSE;
    }
    if err.downcast_ref::<NotConverged>().is_some() {
        return EXIT_NOT_CONVERGED;
    }
    if err.downcast_ref::<CertificationFailed>().is_some() {
        return EXIT_CERTIFICATION;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_CONFIG,
        Some(Error::Certification(_)) => EXIT_CERTIFICATION,
        Some(Error::NumericFailure { .. }) | Some(Error::AccuracyNotReached { .. }) => EXIT_NOT_CONVERGED,
        Some(
            Error::Precondition(_)
            | Error::DimensionMismatch(..)
            | Error::LengthMismatch { .. }
            | Error::DegenerateSample(_)
            | Error::Infeasible { .. }
            | Error::UnsupportedGenerator(_)
            | Error::Domain { .. },
        ) => EXIT_PRECONDITION,
        _ => EXIT_OTHER,
    }
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    estimator: &'a str,
    generator: &'a str,
    n: usize,
    dims: usize,
    bandwidth: f64,
    lambda: f64,
    divergence_estimate: f64,
    objective: f64,
    mmd_squared: f64,
    iterations: usize,
    kkt_residual: f64,
    converged: bool,
    alpha: &'a [f64],
    density_ratio_at_y: &'a [f64],
}

fn cmd_estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let x = read_samples(&args.x, args.header)?;
    let y = read_samples(&args.y, args.header)?;
    let generator = make_generator(&args.generator)?;
    let mut config = EstimatorConfig::new(generator);
    config.lambda_rule = match args.lambda {
        Some(l) => LambdaRule::Fixed(l),
        None => LambdaRule::Schedule { c: args.lambda_c },
    };
    config.solver_tol = args.tol;
    config.solver_max_iters = args.max_iters;
    let bandwidth = match args.bandwidth {
        Some(b) => {
            let spec = KernelSpec::new(b)?;
            config.kernel = KernelRule::Fixed(spec);
            spec
        }
        None => {
            if x.ncols() != y.ncols() {
                return Err(Error::DimensionMismatch(x.ncols(), y.ncols()).into());
            }
            pooled_variance_bandwidth(&x, &y)?
        }
    };
    let (name, result) = match args.estimator {
        EstimatorArg::Restricted => ("restricted", estimate_restricted(&x, &y, &config)?),
        EstimatorArg::NormBall => ("norm_ball", estimate_norm_ball(&x, &y, &config)?),
        EstimatorArg::Nwj => ("nwj", estimate_nwj(&x, &y, &config)?),
    };
    let out = EstimateOutput {
        estimator: name,
        generator: generator.name(),
        n: x.nrows(),
        dims: x.ncols(),
        bandwidth: bandwidth.bandwidth(),
        lambda: result.lambda,
        divergence_estimate: result.divergence_estimate,
        objective: result.objective_value,
        mmd_squared: result.mmd_term,
        iterations: result.report.iterations,
        kkt_residual: result.report.kkt_residual,
        converged: result.report.converged,
        alpha: &result.alpha,
        density_ratio_at_y: &result.density_ratio_at_y,
    };
    println!("estimator: {}", out.estimator);
    println!("generator: {}", out.generator);
    println!("n: {}  dims: {}", out.n, out.dims);
    println!("bandwidth: {:.6e}  lambda: {:.6e}", out.bandwidth, out.lambda);
    println!("divergence_estimate: {:.10}", out.divergence_estimate);
    println!("objective: {:.10}", out.objective);
    println!("mmd_squared: {:.6e}", out.mmd_squared);
    println!(
        "converged: {}  iterations: {}  kkt_residual: {:.3e}",
        out.converged, out.iterations, out.kkt_residual
    );
    if let Some(path) = &args.output {
        let text = serde_json::to_string_pretty(&out)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    if !out.converged {
        return Err(NotConverged.into());
    }
    Ok(())
}

fn print_summary(summary: &Summary) {
    println!(
        "{:<12} {:<12} {:>4} {:<10} {:>8} {:>9} {:>9} {:>6}",
        "P", "Q", "dims", "estimator", "KL", "mean", "MSE", "failed"
    );
    for e in &summary.entries {
        println!(
            "{:<12} {:<12} {:>4} {:<10} {:>8.3} {:>9.3} {:>9.3} {:>6}",
            e.p, e.q, e.dims, e.estimator, e.true_kl, e.mean_estimate, e.mse, e.runs_failed
        );
    }
    println!(
        "fingerprint {}  seed {}  n {}  runs {}",
        summary.config_fingerprint, summary.seed, summary.n, summary.runs
    );
}

fn cmd_bench(args: &BenchArgs) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if args.output.is_some() || args.format.is_some() {
        let current = config.output.clone();
        let path = args
            .output
            .clone()
            .or_else(|| current.as_ref().map(|o| o.path.clone()))
            .unwrap_or_else(|| PathBuf::from("results.csv"));
        let format = match args.format {
            Some(FormatArg::Csv) => OutputFormat::Csv,
            Some(FormatArg::Jsonl) => OutputFormat::Jsonl,
            None => current.map(|o| o.format).unwrap_or_default(),
        };
        config.output = Some(OutputSpec { path, format });
    }
    config.validate()?;
    let Some(output) = config.output.clone() else {
        bail!(Error::Config(vec![
            "output: no results path in the config or on the command line".into()
        ]));
    };
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));

    let records = run_experiment(&config, workers)?;
    write_records(&output.path, output.format, &records)?;
    write_timing(&timing_path(&output.path), &records)?;
    let summary = summarize(&config, &records);
    write_summary(&summary_path(&output.path), &summary)?;
    print_summary(&summary);
    eprintln!("{} records written to {}", records.len(), output.path.display());
    Ok(())
}

fn print_certificate(report: &CertifyReport) {
    println!("seed {}  trials {}", report.seed, report.trials);
    for g in &report.generators {
        for c in &g.checks {
            println!(
                "{:<18} {:<16} passed {:>6}  failed {:>4}  worst_slack {:>12.3e}",
                g.generator, c.check, c.passed, c.failed, c.worst_slack
            );
        }
    }
}

fn cmd_oracle_check(args: &OracleArgs) -> anyhow::Result<()> {
    let names: Vec<String> = if args.generators.is_empty() {
        GENERATOR_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.generators.clone()
    };
    let mut generators = names
        .iter()
        .map(|n| make_generator(n))
        .collect::<fdiv_core::Result<Vec<_>>>()?;
    if args.inject_fault {
        generators.push(make_generator("kl")?.with_conjugate("kl_faulty", |u| (u - 1.0).exp() - 0.5));
    }
    let report = certify(&CertifyOptions {
        trials: args.trials as usize,
        max_support: args.max_support as usize,
        generators,
        seed: args.seed,
    })?;
    print_certificate(&report);
    if report.all_passed() {
        println!("all checks passed");
        Ok(())
    } else {
        println!("{}", serde_json::to_string_pretty(&report.failures)?);
        Err(CertificationFailed(report.total_failures).into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
