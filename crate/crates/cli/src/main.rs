//! `tensorconc`: rate calculators, seeded sweeps and verification suites.
//!
//! Exit codes: 0 success, 1 verification or solver failure, 2 usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use tensorconc::harness::{run_sweep, suites, SweepPlan};
use tensorconc::rates::{self, ProcessRateInputs, TensorRateInputs};
use tensorconc::sampling::gaussian_psi2_constant;
use tensorconc::Error;

#[derive(Parser)]
#[command(name = "tensorconc", version, about = "Deviation of empirical moment tensors: rates, sweeps and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a closed-form rate.
    Rate(RateArgs),
    /// Run a sweep plan and write trial, summary and metadata files.
    Simulate(SimulateArgs),
    /// Run a verification suite at its pinned configuration.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RateName {
    Thm1Exp,
    Thm1Tail,
    Prop31Lower,
    Thm2Exp,
    Thm2Tail,
    Thm2AltTail,
    Remark25,
    Remark41Lm,
    Guedon,
    Even,
    KlP2,
}

#[derive(clap::Args)]
struct RateArgs {
    name: RateName,
    /// Operator norm of the covariance.
    #[arg(long)]
    opnorm: Option<f64>,
    /// Effective rank.
    #[arg(long)]
    rank: Option<f64>,
    /// Sample size.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    p: Option<f64>,
    /// Sub-Gaussian constant (default sqrt(8/3)).
    #[arg(long)]
    k: Option<f64>,
    /// Tail parameter.
    #[arg(long)]
    u: Option<f64>,
    /// gamma_2 of the class in the psi_2 metric.
    #[arg(long)]
    gamma: Option<f64>,
    /// psi_2 radius of the class.
    #[arg(long = "d-psi2")]
    d_psi2: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    /// E max_i |X_i|^p.
    #[arg(long = "max-norm-moment")]
    max_norm_moment: Option<f64>,
    /// Ambient dimension.
    #[arg(long)]
    dim: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Output directory (default: the plan's output_dir, else ./tensorconc-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Base seed; overrides TENSORCONC_SEED and the plan.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    suite: String,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    json: bool,
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("missing --{flag}")))
}

/// Rounds to 12 significant digits and prints the shortest form.
fn decimal(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn tensor_inputs(a: &RateArgs, with_u: bool) -> Result<TensorRateInputs, Failure> {
    let mut i = TensorRateInputs::new(need(a.opnorm, "opnorm")?, need(a.rank, "rank")?, need(a.n, "n")?, need(a.p, "p")?)
        .with_k(a.k.unwrap_or_else(gaussian_psi2_constant));
    if with_u {
        i = i.with_u(need(a.u, "u")?);
    }
    Ok(i)
}

fn process_inputs(a: &RateArgs, p_default: Option<f64>) -> Result<ProcessRateInputs, Failure> {
    let p = match p_default {
        Some(d) => a.p.unwrap_or(d),
        None => need(a.p, "p")?,
    };
    let mut i = ProcessRateInputs::new(need(a.gamma, "gamma")?, need(a.d_psi2, "d-psi2")?, need(a.n, "n")?, p);
    if let Some(u) = a.u {
        i = i.with_u(u);
    }
    if let Some(m) = a.m {
        i = i.with_m(m);
    }
    Ok(i)
}

fn cmd_rate(a: RateArgs) -> Result<(), Failure> {
    let (name, value, inputs) = match a.name {
        RateName::Thm1Exp => {
            let i = tensor_inputs(&a, false)?;
            ("thm1-exp", rates::thm1_expectation_rate(&i)?, json!(i))
        }
        RateName::Thm1Tail => {
            let i = tensor_inputs(&a, true)?;
            ("thm1-tail", rates::thm1_tail_rate(&i)?, json!(i))
        }
        RateName::Prop31Lower => {
            let i = tensor_inputs(&a, false)?;
            ("prop31-lower", rates::prop31_lower_rate(&i)?, json!(i))
        }
        RateName::Thm2Exp => {
            let i = process_inputs(&a, None)?;
            ("thm2-exp", rates::thm2_expectation_rate(&i)?, json!(i))
        }
        RateName::Thm2Tail => {
            let i = process_inputs(&a, None)?;
            need(a.u, "u")?;
            ("thm2-tail", rates::thm2_tail_rate(&i)?, json!(i))
        }
        RateName::Thm2AltTail => {
            let i = process_inputs(&a, None)?;
            need(a.u, "u")?;
            ("thm2-alt-tail", rates::thm2_alt_tail_rate(&i)?, json!(i))
        }
        RateName::Remark25 => {
            let i = process_inputs(&a, None)?;
            ("remark25", rates::remark25_rate(&i)?, json!(i))
        }
        RateName::Remark41Lm => {
            // The order plays no role in this rate.
            let i = process_inputs(&a, Some(2.0))?;
            need(a.u, "u")?;
            need(a.m, "m")?;
            ("remark41-lm", rates::remark41_lm_tail_rate(&i)?, json!(i))
        }
        RateName::Guedon => {
            let (op, p, n, mnm) =
                (need(a.opnorm, "opnorm")?, need(a.p, "p")?, need(a.n, "n")?, need(a.max_norm_moment, "max-norm-moment")?);
            let v = rates::competing_guedon_rate(op, p, n, mnm)?;
            ("guedon", v, json!({"op_norm": op, "p": p, "n": n, "max_norm_moment": mnm}))
        }
        RateName::Even => {
            let (op, r, n, p, dim) =
                (need(a.opnorm, "opnorm")?, need(a.rank, "rank")?, need(a.n, "n")?, need(a.p, "p")?, need(a.dim, "dim")?);
            let v = rates::competing_even_rate(op, r, n, p, dim)?;
            ("even", v, json!({"op_norm": op, "eff_rank": r, "n": n, "p": p, "dim": dim}))
        }
        RateName::KlP2 => {
            let (op, r, n) = (need(a.opnorm, "opnorm")?, need(a.rank, "rank")?, need(a.n, "n")?);
            ("kl-p2", rates::kl_p2_rate(op, r, n)?, json!({"op_norm": op, "eff_rank": r, "n": n}))
        }
    };
    if a.json {
        println!("{}", json!({"rate": name, "value": value, "inputs": inputs}));
    } else {
        println!("{}", decimal(value));
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut plan = SweepPlan::from_path(&a.config)?;
    if let Some(s) = a.seed {
        plan.base_seed = s;
    } else if let Ok(s) = std::env::var("TENSORCONC_SEED") {
        plan.base_seed = s
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("TENSORCONC_SEED={s} is not an unsigned 64-bit integer")))?;
    }
    let dir = a.out.or_else(|| plan.output_dir.clone()).unwrap_or_else(|| PathBuf::from("tensorconc-out"));
    for f in ["trials.csv", "summary.csv", "metadata.json"] {
        if !a.force && dir.join(f).exists() {
            return Err(Failure::Usage(format!("{} exists; pass --force to overwrite", dir.join(f).display())));
        }
    }
    let out = run_sweep(&plan, a.workers)?;
    let paths = out.write_outputs(&dir, a.force)?;
    println!("{:<48} {:>6} {:>14} {:>12} {:>10}", "cell", "ok", "mean", "halfwidth95", "ratio");
    for s in out.summaries() {
        println!(
            "{:<48} {:>6} {:>14.6} {:>12.6} {:>10.4}",
            out.cells[s.cell_index].label(),
            s.trials_ok,
            s.mean,
            s.halfwidth95,
            s.ratio
        );
    }
    println!("wrote {}, {}, {}", paths.trials.display(), paths.summary.display(), paths.metadata.display());
    let failed = out.failed_cells();
    if let Some((cell, err)) = failed.first() {
        return Err(Failure::Check(format!(
            "{} cell(s) failed in more than half of their trials; first: {} ({err})",
            failed.len(),
            cell.label()
        )));
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let report = suites::run_suite(&a.suite, a.workers)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        for c in &report.checks {
            println!("{}", c.line());
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!("suite {} failed", report.suite)))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rate(a) => cmd_rate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::decimal;

    #[test]
    fn decimal_trims() {
        assert_eq!(decimal(0.2 + 0.04), "0.24");
        assert_eq!(decimal(0.11000000000000001), "0.11");
        assert_eq!(decimal(2.0), "2");
        assert_eq!(decimal(1.0 / 3.0), "0.333333333333");
    }
}
