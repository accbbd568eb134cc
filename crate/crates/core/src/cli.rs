//! The `hullsep` command line: runs, verification and benchmarks.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::{parse_instance, Instance};
use crate::report::{self, downsample, Certificate, Counters, RunReport, Status, MAX_HISTORY};
use crate::triangle_i::{CertificateKind, Config, Engine, PivotStrategy, RunTrace, Session};
use crate::triangle_ii;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_LIMITS: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

pub const BENCH_HEADER: &str = "instance,eps,strategy,iterations,support_calls,delta,lower,wall_ms";

#[derive(Debug, Parser)]
#[command(name = "hullsep", version, about = "Certified intersection, separation and distance of convex sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide intersection: an approximate common point or a separating witness.
    Intersect(RunArgs),
    /// Approximate the distance between disjoint bodies.
    Distance(RunArgs),
    /// Like `distance`, and print the two supporting hyperplanes.
    Support(RunArgs),
    /// Re-check a report against its instance.
    Verify(VerifyArgs),
    /// Iteration counts over instances, tolerances and strategies as CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long)]
    pub max_iter: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub exact_diameter: bool,
    #[arg(long)]
    pub alternate_sides: bool,
    /// auto, naive or gram.
    #[arg(long, default_value = "auto", value_parser = parse_engine)]
    pub engine: Engine,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub flags: Flags,
    #[arg(long, default_value = "max-violation")]
    pub pivot_strategy: PivotStrategy,
    /// Write every step as one JSON line.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub instance: Vec<PathBuf>,
    /// Comma-separated tolerances.
    #[arg(long = "eps-values", value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
    pub eps_values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "max-violation")]
    pub pivot_strategy: Vec<PivotStrategy>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iter: Option<u64>,
    #[arg(long)]
    pub exact_diameter: bool,
    #[arg(long)]
    pub alternate_sides: bool,
    /// Worker threads; one run per task.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_engine(s: &str) -> std::result::Result<Engine, String> {
    match s {
        "auto" => Ok(Engine::Auto),
        "naive" => Ok(Engine::Naive),
        "gram" => Ok(Engine::Gram),
        _ => Err(format!("unknown engine {s:?}")),
    }
}

impl RunArgs {
    pub fn config(&self) -> Result<Config> {
        let f = &self.flags;
        let config = Config {
            eps: f.eps,
            max_iter: f.max_iter,
            strategy: self.pivot_strategy,
            engine: f.engine,
            alternate_sides: f.alternate_sides,
            seed: f.seed,
            exact_diameter: f.exact_diameter,
            record_steps: self.trace.is_some(),
            ..Config::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Intersect,
    Distance,
    Support,
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Intersect => "intersect",
            RunKind::Distance => "distance",
            RunKind::Support => "support",
        }
    }
}

impl FromStr for RunKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intersect" => Ok(Self::Intersect),
            "distance" => Ok(Self::Distance),
            "support" => Ok(Self::Support),
            _ => Err(Error::InvalidArgument(format!("unknown command {s:?}"))),
        }
    }
}

/// Runs the pivot loop and, for `distance` and `support` on disjoint
/// bodies, the distance refinement. Hitting the iteration limit yields a
/// report with status `limits_exceeded` and the best pair so far.
pub fn execute(kind: RunKind, inst: &Instance, config: &Config) -> Result<(RunReport, RunTrace)> {
    let started = Instant::now();
    let mut s = Session::new(&inst.k, &inst.k_prime, config.clone())?;
    let outcome = (|| -> Result<Certificate> {
        let state = s.initialize(inst.start_pair())?;
        let first = s.run_in_session(state)?;
        if kind == RunKind::Intersect || first.kind == CertificateKind::Intersection {
            return Ok(first.into());
        }
        Ok(Certificate::Distance(triangle_ii::run_in_session(&mut s, first.pair)?))
    })();
    let (certificate, best, status, trace) = match outcome {
        Ok(c) => (Some(c), None, Status::Ok, s.trace.clone()),
        Err(Error::MaxIterExceeded { best, trace, .. }) => {
            (None, Some(*best), Status::LimitsExceeded, *trace)
        }
        Err(e) => return Err(e),
    };
    let report = RunReport {
        command: kind.name().to_string(),
        name: inst.name.clone(),
        config: config.clone(),
        rho_hat: s.rho_hat,
        eps_abs: s.eps_abs,
        max_iter: s.max_iter,
        status,
        termination: trace.termination,
        certificate,
        best,
        counters: Counters::from(&trace),
        gap_history: downsample(&trace.gap_history, MAX_HISTORY),
        budget: trace.budget,
        budget_exceeded: trace.budget_exceeded,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((report, trace))
}

fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for step in &trace.steps {
        serde_json::to_writer(&mut out, step).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn summary(report: &RunReport) -> String {
    let c = &report.counters;
    let head = format!(
        "{}: {} iterations, {} support calls",
        report.command, c.iterations, c.support_calls
    );
    match &report.certificate {
        None => format!("{head}; iteration limit {} reached", report.max_iter),
        Some(Certificate::Intersection { pair, .. }) => {
            format!("{head}; intersection, gap {:e}", pair.gap)
        }
        Some(Certificate::Witness { pair, bisector }) => format!(
            "{head}; separated, gap {:e}, bisector {:?} . x = {:e}",
            pair.gap, &bisector.normal.as_slice(), bisector.offset
        ),
        Some(Certificate::Distance(d)) => {
            let mut s = format!("{head}; distance in [{:e}, {:e}]", d.lower, d.delta);
            if report.command == "support" {
                s += &format!(
                    "\nH_v:  {:?} . x = {:e}\nH_v': {:?} . x = {:e}",
                    &d.h_v.normal.as_slice(),
                    d.h_v.offset,
                    &d.h_v_prime.normal.as_slice(),
                    d.h_v_prime.offset
                );
            }
            s
        }
    }
}

/// `intersect`, `distance` and `support`. Returns the exit code.
pub fn cmd_run(kind: RunKind, args: &RunArgs) -> Result<i32> {
    let config = args.config()?;
    let inst = parse_instance(&args.instance)?;
    let (report, trace) = execute(kind, &inst, &config)?;
    if let Some(path) = &args.trace {
        write_trace(path, &trace)?;
    }
    emit(&(report.to_json() + "\n"), args.output.as_deref())?;
    eprintln!("{}", summary(&report));
    if report.status == Status::LimitsExceeded {
        return Ok(EXIT_LIMITS);
    }
    let failed = report::failures(&report::verify(&report, &inst)?);
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        error!("certificate failed self-verification: {}", failed.join("; "));
        Ok(EXIT_VERIFY_FAILED)
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.report)?;
    let report = RunReport::from_json(&text, &args.report.display().to_string())?;
    let inst = parse_instance(&args.instance)?;
    let checks = report::verify(&report, &inst)?;
    let mut out = std::io::stdout().lock();
    for c in &checks {
        writeln!(
            out,
            "{} {:<32} residual {:>12.3e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.detail
        )?;
    }
    let failed = report::failures(&checks);
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(Error::VerificationFailed(failed))
    }
}

/// One CSV row per (instance, eps, strategy), in input order.
pub fn bench_rows(args: &BenchArgs) -> Result<Vec<String>> {
    let instances: Vec<(String, Instance)> = args
        .instance
        .iter()
        .map(|p| {
            let inst = parse_instance(p)?;
            let label = inst.name.clone().unwrap_or_else(|| {
                p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
            });
            Ok((label, inst))
        })
        .collect::<Result<_>>()?;
    let mut tasks = Vec::new();
    for (i, _) in instances.iter().enumerate() {
        for &eps in &args.eps_values {
            for &strategy in &args.pivot_strategy {
                tasks.push((i, eps, strategy));
            }
        }
    }
    let run = |&(i, eps, strategy): &(usize, f64, PivotStrategy)| -> Result<String> {
        let (label, inst) = &instances[i];
        let config = Config {
            eps,
            max_iter: args.max_iter,
            strategy,
            alternate_sides: args.alternate_sides,
            seed: args.seed,
            exact_diameter: args.exact_diameter,
            record_steps: false,
            ..Config::default()
        };
        config.validate()?;
        let (report, _) = execute(RunKind::Distance, inst, &config)?;
        let (delta, lower) = match &report.certificate {
            Some(Certificate::Distance(d)) => (d.delta, d.lower),
            Some(Certificate::Intersection { pair, .. }) => (pair.gap, 0.0),
            Some(Certificate::Witness { pair, .. }) => (pair.gap, f64::NAN),
            None => (report.best.as_ref().map_or(f64::NAN, |b| b.gap), f64::NAN),
        };
        info!("{label} eps={eps} {strategy}: {} iterations", report.counters.iterations);
        Ok(format!(
            "{label},{eps},{strategy},{},{},{delta},{lower},{:.3}",
            report.counters.iterations, report.counters.support_calls, report.wall_ms
        ))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| tasks.par_iter().map(run).collect())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let rows = bench_rows(args)?;
    let mut text = String::from(BENCH_HEADER);
    text.push('\n');
    for r in rows {
        text += &r;
        text.push('\n');
    }
    emit(&text, args.output.as_deref())?;
    Ok(EXIT_OK)
}

/// Exit code for an error that escaped a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::VerificationFailed(_) => EXIT_VERIFY_FAILED,
        Error::MaxIterExceeded { .. } => EXIT_LIMITS,
        _ => EXIT_INPUT,
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Intersect(a) => cmd_run(RunKind::Intersect, a),
        Command::Distance(a) => cmd_run(RunKind::Distance, a),
        Command::Support(a) => cmd_run(RunKind::Support, a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
