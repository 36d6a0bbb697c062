//! `mhcov` command-line driver.

mod output;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mhcov::design::solve_design;
use mhcov::experiments::{
    counterexample, ess_sweep, highdim_sweep, histogram, sigma_sweep, theory_table, EssSweepConfig, McConfig,
    COUNTEREXAMPLE_CS, ELL_GRID, SIGMA_SWEEP_RATIOS,
};
use mhcov::highdim::ProductTarget;
use mhcov::proposals::ProposalKernel;
use mhcov::quadrature::Scheme;
use mhcov::sampler::{run_chain, write_binary, write_csv, Init, RunConfig, DEFAULT_BURN_IN};
use mhcov::theory::QuadratureSpec;
use mhcov::{Error, ErrorClass, Result, TargetDensity};
use output::Output;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "mhcov", version, about = "Unit-lag covariance lab for random-walk Metropolis-Hastings")]
struct Cli {
    /// Base random seed; replicate i uses stream i under this seed.
    #[arg(long, global = true, default_value_t = 20_240_601)]
    seed: u64,
    /// Steps per chain after burn-in.
    #[arg(long, global = true, default_value_t = 200_000)]
    steps: usize,
    /// Independent replicate chains per setting.
    #[arg(long, global = true, default_value_t = 8)]
    replicates: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    #[serde(skip)]
    out: PathBuf,
    /// Permit sampling with the two-point increment (not irreducible).
    #[arg(long, global = true)]
    allow_atomic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum SchemeArg {
    Gk,
    Simpson,
}

#[derive(Debug, clap::Args, Serialize)]
struct QuadArgs {
    #[arg(long, default_value_t = 1e-9)]
    abs_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Gk)]
    scheme: SchemeArg,
}

impl QuadArgs {
    fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            scheme: match self.scheme {
                SchemeArg::Gk => Scheme::AdaptiveGK,
                SchemeArg::Simpson => Scheme::CompositeSimpson,
            },
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            ..QuadratureSpec::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum ChainFormat {
    Csv,
    Bin,
    Both,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Quadrature covariance table: target,kernel,formula,cov,est_error.
    TheoryCov {
        #[arg(long = "target", required = true)]
        targets: Vec<String>,
        #[arg(long = "kernel", required = true)]
        kernels: Vec<String>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Optimal jump design for a symmetric unimodal target (JSON).
    Design {
        #[arg(long)]
        target: String,
    },
    /// Run one chain and write it as CSV and/or binary.
    Sample {
        #[arg(long)]
        target: String,
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        /// Start from a fixed point instead of an exact target draw; implies
        /// the default burn-in unless --burn-in is given.
        #[arg(long)]
        init: Option<f64>,
        #[arg(long, value_enum, default_value_t = ChainFormat::Both)]
        format: ChainFormat,
    },
    /// ESS against acceptance rate.
    EssSweep {
        #[arg(long = "target")]
        targets: Vec<String>,
    },
    /// Lag-1 correlation as the bimodal width shrinks.
    SigmaSweep {
        #[arg(long, default_value = "ghs:alpha=1.5,mu=0,scale=1")]
        target: String,
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// Chain histograms against exact densities.
    Hist {
        #[arg(long = "target")]
        targets: Vec<String>,
        #[arg(long, default_value_t = 0.4)]
        ratio: f64,
    },
    /// The negative-covariance flip kernel.
    Counterexample {
        #[arg(long, default_value = "gauss:mu=0,scale=1")]
        target: String,
        #[arg(long = "c", value_delimiter = ',')]
        cs: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        var: f64,
        #[command(flatten)]
        quad: QuadArgs,
    },
    /// High-dimensional product target over an ell grid.
    Highdim {
        #[arg(long, default_value_t = 50)]
        d: usize,
        #[arg(long, value_delimiter = ',')]
        ell: Vec<f64>,
        /// Component densities, cycled to fill d coordinates.
        #[arg(long = "component", default_value = "gauss:mu=0,scale=1")]
        components: Vec<String>,
    },
}

fn parse_targets(specs: &[String], defaults: &[&str]) -> Result<Vec<TargetDensity>> {
    if specs.is_empty() {
        defaults.iter().map(|s| s.parse()).collect()
    } else {
        specs.iter().map(|s| s.parse()).collect()
    }
}

fn or_default(v: &[f64], d: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        d.to_vec()
    } else {
        v.to_vec()
    }
}

fn report(path: &std::path::Path) {
    println!("wrote {}", path.display());
}

fn run(cli: &Cli) -> Result<()> {
    let out = Output::new(&cli.out, cli)?;
    let mc = McConfig { n_steps: cli.steps, replicates: cli.replicates, seed: cli.seed, allow_atomic: cli.allow_atomic };
    match &cli.command {
        Command::TheoryCov { targets, kernels, quad } => {
            let targets = parse_targets(targets, &[])?;
            let kernels = kernels.iter().map(|s| s.parse()).collect::<Result<Vec<ProposalKernel>>>()?;
            let rows = theory_table(&targets, &kernels, &quad.spec())?;
            report(&out.csv("theory_cov.csv", "theory-cov", &rows)?);
        }
        Command::Design { target } => {
            let t: TargetDensity = target.parse()?;
            let d = solve_design(&t, 1e-10)?;
            println!("{}", serde_json::to_string_pretty(&d).map_err(|e| Error::Io(e.to_string()))?);
            report(&out.json("design.json", &d)?);
        }
        Command::Sample { target, kernel, burn_in, init, format } => {
            let t: TargetDensity = target.parse()?;
            let k: ProposalKernel = kernel.parse()?;
            let mut cfg = RunConfig::new(cli.steps, cli.seed).with_burn_in(*burn_in).allowing_atomic(cli.allow_atomic);
            if let Some(x) = init {
                cfg = cfg.with_init(Init::FixedPoint(*x));
                if *burn_in == 0 {
                    cfg = cfg.with_burn_in(DEFAULT_BURN_IN);
                }
            }
            let chain = run_chain(&t, &k, &cfg)?;
            if matches!(format, ChainFormat::Csv | ChainFormat::Both) {
                let p = out.path("chain.csv");
                let mut w = BufWriter::new(File::create(&p)?);
                write_csv(&chain, &mut w)?;
                std::io::Write::flush(&mut w)?;
                report(&p);
            }
            if matches!(format, ChainFormat::Bin | ChainFormat::Both) {
                let p = out.path("chain.bin");
                let mut w = BufWriter::new(File::create(&p)?);
                write_binary(&chain, &mut w)?;
                std::io::Write::flush(&mut w)?;
                report(&p);
            }
            println!("acceptance {}", chain.mean_acceptance());
        }
        Command::EssSweep { targets } => {
            let mut cfg = EssSweepConfig::standard(mc)?;
            if !targets.is_empty() {
                cfg.targets = parse_targets(targets, &[])?;
            }
            let (rows, timing) = ess_sweep(&cfg)?;
            report(&out.csv("ess_sweep.csv", "ess-sweep", &rows)?);
            report(&out.csv("ess_sweep_timing.csv", "ess-sweep-timing", &timing)?);
        }
        Command::SigmaSweep { target, ratios, quad } => {
            let t: TargetDensity = target.parse()?;
            let rows = sigma_sweep(&t, &or_default(ratios, &SIGMA_SWEEP_RATIOS), &mc, &quad.spec())?;
            report(&out.csv("sigma_sweep.csv", "sigma-sweep", &rows)?);
        }
        Command::Hist { targets, ratio } => {
            let targets = parse_targets(targets, &["gauss:mu=0,scale=1", "logistic:mu=3,scale=1", "ghs:alpha=1,mu=-7,scale=1"])?;
            let mut rows = Vec::new();
            for t in &targets {
                rows.extend(histogram(t, *ratio, &mc)?);
            }
            report(&out.csv("hist.csv", "hist", &rows)?);
        }
        Command::Counterexample { target, cs, var, quad } => {
            let t: TargetDensity = target.parse()?;
            let rows = counterexample(&t, &or_default(cs, &COUNTEREXAMPLE_CS), *var, &mc, &quad.spec())?;
            report(&out.csv("counterexample.csv", "counterexample", &rows)?);
            if let Some(r) = rows.iter().find(|r| !(r.cov_quad < 0.0)) {
                return Err(Error::Invariant(format!("flip kernel c = {} gave non-negative covariance {}", r.c, r.cov_quad)));
            }
        }
        Command::Highdim { d, ell, components } => {
            let comps = parse_targets(components, &[])?;
            let cycled: Vec<TargetDensity> = comps.iter().cycle().take(*d).cloned().collect();
            let product = ProductTarget::new(cycled, &QuadratureSpec::default())?;
            let rows = highdim_sweep(&product, &or_default(ell, &ELL_GRID), &mc)?;
            report(&out.csv("highdim.csv", "highdim", &rows)?);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    class: &'a str,
    exit_code: u8,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = match e.class() {
                ErrorClass::Config => ("config", 2),
                ErrorClass::Numeric => ("numeric", 3),
                ErrorClass::Invariant => ("invariant", 4),
            };
            let rec = ErrorRecord { error: e.kind(), class, exit_code: code, message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(code)
        }
    }
}
