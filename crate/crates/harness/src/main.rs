use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rarl_harness::config::Algorithm;
use rarl_harness::support_check::write_report;
use rarl_harness::{
    run_control_experiment, run_eval_experiment, run_planner, run_robustness_sweep, run_support_check,
    ExperimentConfig, HarnessError, SupportCheckConfig,
};

#[derive(Parser)]
#[command(name = "rarl", version, about = "Robust average-reward RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Robust RVI TD for a fixed policy.
    Eval(RunArgs),
    /// Robust RVI Q-learning.
    Control(RunArgs),
    /// Exact robust evaluation and control.
    Plan(RunArgs),
    /// Robust vs non-robust policies across perturbed environments.
    Sweep(RunArgs),
    /// Checks support functions and estimators against oracles.
    SupportCheck(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides `base_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Optional config whose `support_check` section overrides the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load(args: &RunArgs, algorithm: Algorithm) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    cfg.validate_for(algorithm)?;
    Ok(cfg)
}

fn support_check(args: &CheckArgs) -> Result<(), HarnessError> {
    let settings = match &args.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(cfg) => cfg.support_check.unwrap_or_default(),
            Err(_) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<SupportCheckConfig>(&text)
                    .map_err(|e| HarnessError::Config(format!("support check config: {e}")))?
            }
        },
        None => SupportCheckConfig::default(),
    };
    let report = run_support_check(&settings, args.seed)?;
    print!("{}", report.table());
    write_report(&report, &args.out)?;
    if report.passed() {
        Ok(())
    } else {
        Err(HarnessError::Check("support check reported failures".into()))
    }
}

fn report_path(out: &Path, file: &str) {
    println!("wrote {}", out.join(file).display());
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Eval(args) => {
            let cfg = load(&args, Algorithm::Td)?;
            let s = run_eval_experiment(&cfg, &args.out, args.jobs)?;
            let finals = s.successful_offsets();
            println!(
                "planner gain {:.6}, mean final f(V) {:.6} over {} seeds ({} failed)",
                s.baseline,
                rarl_harness::stats::mean(&finals),
                finals.len(),
                s.failures.len()
            );
            report_path(&args.out, "trace.csv");
        }
        Command::Control(args) => {
            let cfg = load(&args, Algorithm::Q)?;
            let s = run_control_experiment(&cfg, &args.out, args.jobs)?;
            let finals = s.eval.successful_offsets();
            println!(
                "planner gain {:.6} with policy {:?}, mean final f(Q) {:.6}; modal policy {:?} in {} of {} seeds",
                s.eval.baseline,
                s.planner_policy,
                rarl_harness::stats::mean(&finals),
                s.modal_policy,
                s.modal_count,
                cfg.n_seeds
            );
            report_path(&args.out, "policy.json");
        }
        Command::Plan(args) => {
            let cfg = load(&args, Algorithm::Planner)?;
            let s = run_planner(&cfg, &args.out)?;
            println!(
                "policy gain {:.9} (residual {:.1e}); optimal gain {:.9} with policy {:?} (residual {:.1e})",
                s.policy_gain, s.policy_residual, s.optimal_gain, s.optimal_policy, s.optimal_residual
            );
            report_path(&args.out, "plan.json");
        }
        Command::Sweep(args) => {
            let cfg = load(&args, Algorithm::RobustnessSweep)?;
            let s = run_robustness_sweep(&cfg, &args.out, args.jobs)?;
            println!("robust policy {:?}, non-robust policy {:?}", s.robust_policy, s.nonrobust_policy);
            for r in &s.rows {
                println!("{:>10.4} {:>12.6} {:>12.6}", r.perturbation, r.robust_gain, r.nonrobust_gain);
            }
            report_path(&args.out, "sweep.csv");
        }
        Command::SupportCheck(args) => support_check(&args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
