//! Command-line driver: thin argument parsing over the library harness.
//!
//! Exit codes: 0 success, 1 sweep finished with failed cells, 2 schema
//! error in the inputs, 3 runtime error.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use tokenwalk::harness::{
    cmd_analyze, cmd_simulate, cmd_sweep, cmd_tune, AnalyzeOptions, HarnessError, TuneMethod,
    TuneOptions,
};

#[derive(Parser)]
#[command(
    name = "tokenwalk",
    about = "Simulate and analyze self-stabilizing random-walk token circulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a scenario file; write per-seed traces and a
    /// summary.
    Simulate {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Output directory (overrides the scenario's `outputs.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute first-passage statistics for a graph file.
    Analyze {
        /// Graph JSON file: {"n": ..., "edges": [[i,j],...]}.
        graph: PathBuf,
        /// Write the expected hitting-time matrix.
        #[arg(long)]
        hitting: bool,
        /// Write the hitting-time variance matrix.
        #[arg(long)]
        variance: bool,
        /// Write per-node return times and variances.
        #[arg(long = "return")]
        returns: bool,
        /// Write the first-passage CDF up to this horizon (needs --target).
        #[arg(long, value_name = "T_MAX")]
        distribution: Option<u64>,
        /// Target node for --distribution.
        #[arg(long)]
        target: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "analysis-out")]
        out: PathBuf,
    },
    /// Recommend a timeout from the lost-token probability bound.
    Tune {
        /// Return-time variance of the watched node.
        #[arg(long)]
        variance: Option<f64>,
        /// Expected return time (needed for --method closed with --variance).
        #[arg(long)]
        return_time: Option<f64>,
        /// Derive the variance from a graph file instead.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Node to tune for (default: worst node by return variance).
        #[arg(long)]
        node: Option<usize>,
        /// Per-hop token loss probability.
        #[arg(long = "loss-p")]
        loss_p: f64,
        /// Confidence parameter: recommend the first t with bound >= 1 - epsilon.
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Scan)]
        method: MethodArg,
        /// Scan cap.
        #[arg(long, default_value_t = 100_000)]
        t_cap: u64,
        /// Node-count bound; floors the recommendation at capacity + 2.
        #[arg(long)]
        capacity: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "tune-out")]
        out: PathBuf,
    },
    /// Run a scenario over its timeout grid and seed range.
    Sweep {
        /// Scenario JSON file (with optional `sweep` section).
        scenario: PathBuf,
        /// Output directory (overrides the scenario's `outputs.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Scan,
    Closed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("tokenwalk: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let report = cmd_simulate(&scenario, out.as_deref())?;
            let agg = &report.summary.aggregates;
            println!(
                "simulated {} seed(s): converged {:.0}%, mean LC residency {:.3}, creations {}",
                report.summary.seeds.len(),
                agg.converged_fraction * 100.0,
                agg.mean_lc_fraction,
                agg.total_r2_creations
            );
            println!("summary: {}", report.summary_path.display());
            Ok(())
        }
        Command::Analyze {
            graph,
            hitting,
            variance,
            returns,
            distribution,
            target,
            out,
        } => {
            let opts = AnalyzeOptions {
                hitting,
                variance,
                returns,
                distribution,
                target,
            };
            let report = cmd_analyze(&graph, &opts, &out)?;
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            Ok(())
        }
        Command::Tune {
            variance,
            return_time,
            graph,
            node,
            loss_p,
            epsilon,
            method,
            t_cap,
            capacity,
            out,
        } => {
            let opts = TuneOptions {
                variance,
                return_time,
                graph,
                node,
                loss_p,
                epsilon,
                method: match method {
                    MethodArg::Scan => TuneMethod::Scan,
                    MethodArg::Closed => TuneMethod::Closed,
                },
                t_cap,
                capacity,
            };
            let report = cmd_tune(&opts, &out)?;
            println!(
                "tuned t = {} (recommended T_m = {})",
                report.tuned_t, report.recommended_t_m
            );
            if let Some(raw) = report.closed_form_t {
                println!("closed-form value: {raw:.2}");
            }
            if let Some(warning) = &report.warning {
                println!("warning: {warning}");
            }
            Ok(())
        }
        Command::Sweep { scenario, out } => {
            let report = cmd_sweep(&scenario, out.as_deref())?;
            for cell in &report.cells {
                let agg = &cell.summary.aggregates;
                println!(
                    "t_m={}: converged {:.0}%, mean convergence round {:?}, creations {}",
                    cell.t_m,
                    agg.converged_fraction * 100.0,
                    agg.mean_convergence_round,
                    agg.total_r2_creations
                );
            }
            Ok(())
        }
    }
}
