//! Scenario-file driven experiment harness.
//!
//! A scenario file is a JSON document naming a topology (a single
//! `graph` or a dynamic `process`), protocol parameters, a fault model,
//! a horizon, and one seed or a seed range. The harness expands it into
//! runs, writes one CSV trace per seed plus a JSON summary, and keeps
//! everything reproducible: every output embeds the scenario hash and
//! seed in its header, per-run seeds are a counter split of the seed
//! range (`start + index`), and rerunning a command produces
//! byte-identical files.
//!
//! The timeout can be given as a number or as `"auto"`, in which case it
//! is derived from the worst-node return-time variance of the (averaged)
//! walk chain via the lost-token bound scan, floored at `capacity + 2`.
//!
//! Commands return structured reports; the `tokenwalk` binary maps
//! errors onto the exit-code contract: 0 success, 1 sweep with failed
//! cells, 2 schema error, 3 runtime error.

use crate::analysis::{
    chain_return_stats, hitting_distribution, hitting_times, hitting_variances,
    lost_probability_bound, tune_timeout_closed_form, tune_timeout_scan, HittingStats,
};
use crate::graph::{
    averaged_transition_matrix, stationary_distribution, validate_graph, DynamicGraphProcess,
    StaticGraph,
};
use crate::protocol::ProtocolParams;
use crate::sim::{run_with_observer, FaultModel, RunMetrics, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Malformed input: bad JSON, missing fields, invalid parameters.
    #[error("schema error: {0}")]
    Schema(String),
    /// Valid input that failed during execution or output.
    #[error("runtime error: {0}")]
    Runtime(String),
    /// A sweep completed but some cells failed.
    #[error("{failed} of {total} sweep cells failed")]
    SweepCellsFailed { failed: usize, total: usize },
}

impl HarnessError {
    /// Process exit code for the CLI: 1 partial sweep failure, 2 schema,
    /// 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::SweepCellsFailed { .. } => 1,
            HarnessError::Schema(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }
}

fn schema<E: std::fmt::Display>(err: E) -> HarnessError {
    HarnessError::Schema(err.to_string())
}

fn runtime<E: std::fmt::Display>(err: E) -> HarnessError {
    HarnessError::Runtime(err.to_string())
}

/// Timeout field of a scenario file: a fixed value or `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeoutSpec {
    Fixed(u64),
    Keyword(String),
}

/// Protocol parameter block of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    pub capacity: usize,
    pub t_m: TimeoutSpec,
    /// Confidence parameter; required when `t_m` is `"auto"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_true")]
    pub wave_enabled: bool,
}

fn default_true() -> bool {
    true
}

/// One seed or a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Single(u64),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    /// Per-run seeds: a single value, or `start + index` over the range.
    pub fn expand(&self) -> Vec<u64> {
        match *self {
            SeedSpec::Single(seed) => vec![seed],
            SeedSpec::Range { start, count } => (0..count).map(|i| start + i).collect(),
        }
    }
}

/// Parameter grid for sweeps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Timeout values to sweep over.
    #[serde(default)]
    pub t_m: Vec<u64>,
}

/// Output switches of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Output directory, unless overridden on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write one CSV trace per seed.
    #[serde(default = "default_true")]
    pub trace: bool,
    /// Additionally write a line-delimited JSON trace with full
    /// per-round message detail.
    #[serde(default)]
    pub json_trace: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            trace: true,
            json_trace: false,
        }
    }
}

/// Parsed scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<StaticGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<DynamicGraphProcess>,
    pub params: ParamsSpec,
    #[serde(default)]
    pub faults: FaultModel,
    pub horizon: u64,
    pub seeds: SeedSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// How an `"auto"` timeout was derived.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeoutDerivation {
    pub worst_return_variance: f64,
    pub loss_p: f64,
    pub epsilon: f64,
    pub scanned_t: u64,
    pub t_m: u64,
}

/// A scenario file resolved into a runnable base scenario plus seeds.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    /// Base scenario; per-run copies override `seed` (and `timeout` in
    /// sweeps).
    pub base: Scenario,
    pub seeds: Vec<u64>,
    pub hash: String,
    pub outputs: OutputSpec,
    pub sweep: Option<SweepSpec>,
    pub derivation: Option<TimeoutDerivation>,
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Schema(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(schema)
}

/// Canonical content hash of a scenario file (serialized form of the
/// parsed document, so formatting differences do not matter).
pub fn scenario_hash(file: &ScenarioFile) -> Result<String, HarnessError> {
    let canonical = serde_json::to_string(file).map_err(runtime)?;
    Ok(hex_digest(canonical.as_bytes()))
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// Validate a scenario file and derive everything needed to run it.
pub fn resolve_scenario(file: &ScenarioFile) -> Result<ResolvedScenario, HarnessError> {
    let process = match (&file.graph, &file.process) {
        (Some(g), None) => DynamicGraphProcess::from_static(g.clone()),
        (None, Some(p)) => p.clone(),
        (Some(_), Some(_)) => {
            return Err(HarnessError::Schema(
                "scenario must give either `graph` or `process`, not both".into(),
            ))
        }
        (None, None) => {
            return Err(HarnessError::Schema(
                "scenario must give a `graph` or a `process`".into(),
            ))
        }
    };
    let mut derivation = None;
    let timeout = match &file.params.t_m {
        TimeoutSpec::Fixed(v) => *v,
        TimeoutSpec::Keyword(word) if word == "auto" => {
            let loss_p = file.faults.token_loss_p;
            let epsilon = file.params.epsilon.ok_or_else(|| {
                HarnessError::Schema(
                    "t_m \"auto\" requires params.epsilon and faults.token_loss_p".into(),
                )
            })?;
            if loss_p <= 0.0 {
                return Err(HarnessError::Schema(
                    "t_m \"auto\" requires faults.token_loss_p > 0".into(),
                ));
            }
            let (worst, scanned) =
                derive_auto_timeout(&process, loss_p, epsilon).map_err(runtime)?;
            let t_m = scanned.max(file.params.capacity as u64 + 2);
            derivation = Some(TimeoutDerivation {
                worst_return_variance: worst,
                loss_p,
                epsilon,
                scanned_t: scanned,
                t_m,
            });
            t_m
        }
        TimeoutSpec::Keyword(other) => {
            return Err(HarnessError::Schema(format!(
                "t_m must be a number or \"auto\", got \"{other}\""
            )))
        }
    };
    let params = ProtocolParams {
        capacity: file.params.capacity,
        timeout,
        wave_enabled: file.params.wave_enabled,
    };
    let base = Scenario {
        process,
        params,
        faults: file.faults.clone(),
        horizon: file.horizon,
        seed: 0,
    };
    base.validate().map_err(schema)?;
    if let Some(sweep) = &file.sweep {
        if sweep.t_m.is_empty() {
            return Err(HarnessError::Schema("sweep grid is empty".into()));
        }
        for &t in &sweep.t_m {
            if t <= params.capacity as u64 + 1 {
                return Err(HarnessError::Schema(format!(
                    "sweep t_m {t} must exceed capacity+1"
                )));
            }
        }
    }
    Ok(ResolvedScenario {
        base,
        seeds: file.seeds.expand(),
        hash: scenario_hash(file)?,
        outputs: file.outputs.clone(),
        sweep: file.sweep.clone(),
        derivation,
    })
}

fn derive_auto_timeout(
    process: &DynamicGraphProcess,
    loss_p: f64,
    epsilon: f64,
) -> Result<(f64, u64), Box<dyn std::error::Error>> {
    let pi = stationary_distribution(process)?;
    let p = averaged_transition_matrix(process, &pi)?;
    let h = hitting_times(&p)?;
    let v = hitting_variances(&p, &h)?;
    let returns = chain_return_stats(&p, &h, &v);
    let worst = returns
        .return_variance
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let scanned = tune_timeout_scan(worst, loss_p, epsilon, 1_000_000)?;
    Ok((worst, scanned))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(runtime)?;
    fs::rename(&tmp, path).map_err(runtime)?;
    Ok(())
}

/// Aggregates over the per-seed rows of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub converged_fraction: f64,
    pub mean_convergence_round: Option<f64>,
    pub median_convergence_round: Option<f64>,
    pub mean_lc_fraction: f64,
    pub total_r2_creations: u64,
    pub total_undue_creations: u64,
    pub closed_after_convergence_fraction: f64,
}

/// Per-scenario summary: one row per seed plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub scenario_hash: String,
    pub seeds: Vec<u64>,
    pub convergence_rounds: Vec<Option<u64>>,
    pub lc_fraction: Vec<f64>,
    pub r2_creations: Vec<u64>,
    pub cover_rounds: Vec<Option<u64>>,
    pub aggregates: Aggregates,
}

impl SummaryReport {
    pub fn from_runs(hash: &str, seeds: &[u64], runs: &[RunMetrics]) -> Self {
        let convergence_rounds: Vec<Option<u64>> =
            runs.iter().map(|m| m.convergence_round).collect();
        let lc_fraction: Vec<f64> = runs.iter().map(|m| m.lc_fraction()).collect();
        let r2_creations: Vec<u64> = runs.iter().map(|m| m.timeout_creations).collect();
        let cover_rounds: Vec<Option<u64>> = runs.iter().map(|m| m.cover_round).collect();
        let mut converged: Vec<f64> = convergence_rounds
            .iter()
            .filter_map(|r| r.map(|v| v as f64))
            .collect();
        converged.sort_by(f64::total_cmp);
        let mean_convergence_round = if converged.is_empty() {
            None
        } else {
            Some(converged.iter().sum::<f64>() / converged.len() as f64)
        };
        let median_convergence_round = if converged.is_empty() {
            None
        } else {
            Some(converged[converged.len() / 2])
        };
        let closed = runs.iter().filter(|m| m.closed_after_convergence()).count();
        let aggregates = Aggregates {
            converged_fraction: converged.len() as f64 / runs.len().max(1) as f64,
            mean_convergence_round,
            median_convergence_round,
            mean_lc_fraction: lc_fraction.iter().sum::<f64>() / lc_fraction.len().max(1) as f64,
            total_r2_creations: r2_creations.iter().sum(),
            total_undue_creations: runs.iter().map(|m| m.undue_creations_after_covered).sum(),
            closed_after_convergence_fraction: closed as f64 / runs.len().max(1) as f64,
        };
        SummaryReport {
            scenario_hash: hash.to_string(),
            seeds: seeds.to_vec(),
            convergence_rounds,
            lc_fraction,
            r2_creations,
            cover_rounds,
            aggregates,
        }
    }
}

/// Result of `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub summary: SummaryReport,
    pub summary_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
}

/// Run every seed of a scenario file, writing traces and a summary under
/// `out_dir` (CLI override) or the file's own output directory.
pub fn cmd_simulate(path: &Path, out_dir: Option<&Path>) -> Result<SimulateReport, HarnessError> {
    let file = load_scenario_file(path)?;
    let resolved = resolve_scenario(&file)?;
    let dir = output_dir(out_dir, &resolved);
    fs::create_dir_all(&dir).map_err(runtime)?;

    let mut runs = Vec::with_capacity(resolved.seeds.len());
    let mut trace_paths = Vec::new();
    for &seed in &resolved.seeds {
        let mut scenario = resolved.base.clone();
        scenario.seed = seed;
        let mut csv = String::new();
        let mut jsonl = String::new();
        let want_csv = resolved.outputs.trace;
        let want_json = resolved.outputs.json_trace;
        if want_csv {
            let _ = writeln!(csv, "# scenario_hash={} seed={seed}", resolved.hash);
            let _ = writeln!(
                csv,
                "round,class,token_count,wave_msgs,r2_total,graph_state"
            );
        }
        if want_json {
            let _ = writeln!(
                jsonl,
                "{}",
                serde_json::json!({"scenario_hash": resolved.hash, "seed": seed})
            );
        }
        let metrics = run_with_observer(&scenario, |rec| {
            if want_csv {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    rec.round,
                    rec.class.label(),
                    rec.token_count,
                    rec.wave_count,
                    rec.timeout_total,
                    rec.graph_state
                );
            }
            if want_json {
                let _ = writeln!(
                    jsonl,
                    "{}",
                    serde_json::to_string(rec).expect("serializable")
                );
            }
        })
        .map_err(runtime)?;
        if want_csv {
            let trace_path = dir.join(format!("trace-seed{seed}.csv"));
            write_atomic(&trace_path, &csv)?;
            trace_paths.push(trace_path);
        }
        if want_json {
            let json_path = dir.join(format!("trace-seed{seed}.jsonl"));
            write_atomic(&json_path, &jsonl)?;
            trace_paths.push(json_path);
        }
        runs.push(metrics);
    }
    let summary = SummaryReport::from_runs(&resolved.hash, &resolved.seeds, &runs);
    let summary_path = dir.join("summary.json");
    let body = serde_json::to_string_pretty(&summary).map_err(runtime)?;
    write_atomic(&summary_path, &body)?;
    Ok(SimulateReport {
        summary,
        summary_path,
        trace_paths,
    })
}

fn output_dir(cli: Option<&Path>, resolved: &ResolvedScenario) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| resolved.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Flags of the `analyze` command.
#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub hitting: bool,
    pub variance: bool,
    pub returns: bool,
    /// Horizon for the first-passage distribution, if requested.
    pub distribution: Option<u64>,
    /// Target node for the distribution.
    pub target: Option<usize>,
}

/// Result of `analyze`: the computed statistics and where they were
/// written.
#[derive(Debug)]
pub struct AnalyzeReport {
    pub stats: Option<HittingStats>,
    pub files: Vec<PathBuf>,
}

/// Compute the requested first-passage statistics for a graph file and
/// write CSV matrices (row = source, column = target).
pub fn cmd_analyze(
    graph_path: &Path,
    opts: &AnalyzeOptions,
    out_dir: &Path,
) -> Result<AnalyzeReport, HarnessError> {
    let text = fs::read_to_string(graph_path)
        .map_err(|e| HarnessError::Schema(format!("cannot read {}: {e}", graph_path.display())))?;
    let graph: StaticGraph = serde_json::from_str(&text).map_err(schema)?;
    if !validate_graph(&graph).connected {
        return Err(HarnessError::Runtime("graph is not connected".into()));
    }
    let input_hash = hex_digest(text.as_bytes());
    fs::create_dir_all(out_dir).map_err(runtime)?;
    let n = graph.node_count();
    let mut files = Vec::new();

    let need_stats = opts.hitting || opts.variance || opts.returns;
    let stats = if need_stats {
        Some(HittingStats::for_graph(&graph).map_err(runtime)?)
    } else {
        None
    };
    if let Some(stats) = &stats {
        if opts.hitting {
            let path = out_dir.join("hitting.csv");
            write_atomic(
                &path,
                &matrix_csv(&input_hash, n, |i, j| stats.hitting[(i, j)]),
            )?;
            files.push(path);
        }
        if opts.variance {
            let path = out_dir.join("variance.csv");
            write_atomic(
                &path,
                &matrix_csv(&input_hash, n, |i, j| stats.variance[(i, j)]),
            )?;
            files.push(path);
        }
        if opts.returns {
            let mut csv = format!("# input_hash={input_hash}\n");
            csv.push_str("node,return_time,return_variance\n");
            for i in 0..n {
                let _ = writeln!(
                    csv,
                    "{i},{},{}",
                    stats.returns.return_time[i], stats.returns.return_variance[i]
                );
            }
            let path = out_dir.join("return.csv");
            write_atomic(&path, &csv)?;
            files.push(path);
        }
    }
    if let Some(t_max) = opts.distribution {
        let target = opts
            .target
            .ok_or_else(|| HarnessError::Schema("--distribution requires --target".into()))?;
        if target >= n {
            return Err(HarnessError::Schema(format!(
                "target {target} out of range for {n} nodes"
            )));
        }
        if t_max == 0 {
            return Err(HarnessError::Schema(
                "distribution t_max must be >= 1".into(),
            ));
        }
        let f = hitting_distribution(&graph.walk_matrix(), target, t_max);
        let mut csv = format!("# input_hash={input_hash} target={target}\n");
        csv.push('t');
        for i in 0..n {
            let _ = write!(csv, ",from_{i}");
        }
        csv.push('\n');
        for t in 0..=t_max {
            let _ = write!(csv, "{t}");
            for i in 0..n {
                let _ = write!(csv, ",{}", f.cdf(i, t));
            }
            csv.push('\n');
        }
        let path = out_dir.join(format!("distribution-target{target}.csv"));
        write_atomic(&path, &csv)?;
        files.push(path);
    }
    Ok(AnalyzeReport { stats, files })
}

fn matrix_csv(input_hash: &str, n: usize, entry: impl Fn(usize, usize) -> f64) -> String {
    let mut csv = format!("# input_hash={input_hash}\n");
    csv.push_str("source");
    for j in 0..n {
        let _ = write!(csv, ",{j}");
    }
    csv.push('\n');
    for i in 0..n {
        let _ = write!(csv, "{i}");
        for j in 0..n {
            let value = entry(i, j);
            if value.is_finite() {
                let _ = write!(csv, ",{value}");
            } else {
                let _ = write!(csv, ",unreachable");
            }
        }
        csv.push('\n');
    }
    csv
}

/// Method selector for `tune`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneMethod {
    Scan,
    Closed,
}

/// Inputs of the `tune` command: give the variance directly, or a graph
/// (and optionally a node; worst node by return variance otherwise).
#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub variance: Option<f64>,
    pub return_time: Option<f64>,
    pub graph: Option<PathBuf>,
    pub node: Option<usize>,
    pub loss_p: f64,
    pub epsilon: f64,
    pub method: TuneMethod,
    pub t_cap: u64,
    /// When given, the recommendation is floored at `capacity + 2`.
    pub capacity: Option<usize>,
}

/// Result of `tune`, also serialized to `tune.json`.
#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub method: TuneMethod,
    pub variance: f64,
    pub return_time: Option<f64>,
    pub loss_p: f64,
    pub epsilon: f64,
    /// Smallest step count meeting the confidence level (scan), or the
    /// rounded-up closed-form value.
    pub tuned_t: u64,
    /// Raw closed-form value, when that method was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_t: Option<f64>,
    /// `max(tuned_t, capacity + 2)` when a capacity was given.
    pub recommended_t_m: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    /// `(t, bound)` samples for `t = 1 ..= 2 * tuned_t`.
    pub bound_curve: Vec<(u64, f64)>,
}

/// Recommend a timeout from the lost-token probability bound.
pub fn cmd_tune(opts: &TuneOptions, out_dir: &Path) -> Result<TuneReport, HarnessError> {
    let (variance, return_time) = match (opts.variance, &opts.graph) {
        (Some(v), None) => (v, opts.return_time),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| {
                HarnessError::Schema(format!("cannot read {}: {e}", path.display()))
            })?;
            let graph: StaticGraph = serde_json::from_str(&text).map_err(schema)?;
            if !validate_graph(&graph).connected {
                return Err(HarnessError::Runtime("graph is not connected".into()));
            }
            let stats = HittingStats::for_graph(&graph).map_err(runtime)?;
            let node = match opts.node {
                Some(node) if node < graph.node_count() => node,
                Some(node) => {
                    return Err(HarnessError::Schema(format!(
                        "node {node} out of range for {} nodes",
                        graph.node_count()
                    )))
                }
                None => {
                    // Worst node: largest return variance.
                    (0..graph.node_count())
                        .max_by(|&a, &b| {
                            stats.returns.return_variance[a]
                                .total_cmp(&stats.returns.return_variance[b])
                        })
                        .expect("graph has nodes")
                }
            };
            (
                stats.returns.return_variance[node],
                Some(stats.returns.return_time[node]),
            )
        }
        (Some(_), Some(_)) => {
            return Err(HarnessError::Schema(
                "give either --variance or --graph, not both".into(),
            ))
        }
        (None, None) => {
            return Err(HarnessError::Schema(
                "tune needs --variance or --graph".into(),
            ))
        }
    };

    let (tuned_t, closed_form_t, warning) = match opts.method {
        TuneMethod::Scan => {
            let t = tune_timeout_scan(variance, opts.loss_p, opts.epsilon, opts.t_cap)
                .map_err(runtime)?;
            (t, None, None)
        }
        TuneMethod::Closed => {
            let h = return_time.ok_or_else(|| {
                HarnessError::Schema(
                    "closed-form tuning needs a return time (--return-time or --graph)".into(),
                )
            })?;
            let raw = tune_timeout_closed_form(variance, h, opts.loss_p, opts.epsilon)
                .map_err(runtime)?;
            (
                raw.ceil() as u64,
                Some(raw),
                Some(
                    "closed-form value is conservative; the scan method is authoritative"
                        .to_string(),
                ),
            )
        }
    };
    let recommended_t_m = match opts.capacity {
        Some(capacity) => tuned_t.max(capacity as u64 + 2),
        None => tuned_t,
    };
    let curve_end = (2 * tuned_t).max(2);
    let bound_curve: Vec<(u64, f64)> = (1..=curve_end)
        .map(|t| {
            let b = lost_probability_bound(variance, opts.loss_p, t).unwrap_or(1.0);
            (t, b)
        })
        .collect();

    fs::create_dir_all(out_dir).map_err(runtime)?;
    let mut csv = format!(
        "# variance={variance} loss_p={} epsilon={}\nt,bound\n",
        opts.loss_p, opts.epsilon
    );
    for (t, b) in &bound_curve {
        let _ = writeln!(csv, "{t},{b}");
    }
    write_atomic(&out_dir.join("bound-curve.csv"), &csv)?;

    let report = TuneReport {
        method: opts.method,
        variance,
        return_time,
        loss_p: opts.loss_p,
        epsilon: opts.epsilon,
        tuned_t,
        closed_form_t,
        recommended_t_m,
        warning,
        bound_curve,
    };
    let body = serde_json::to_string_pretty(&report).map_err(runtime)?;
    write_atomic(&out_dir.join("tune.json"), &body)?;
    Ok(report)
}

/// One sweep cell: a timeout value and the summary over all seeds.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub t_m: u64,
    pub summary: SummaryReport,
}

/// Result of `sweep`, also serialized to `sweep.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub scenario_hash: String,
    pub cells: Vec<SweepCell>,
    /// `(t_m, seed, error)` triples for failed runs.
    pub failures: Vec<(u64, u64, String)>,
}

/// Run the scenario over its timeout grid and seed range; cells run in
/// parallel, each run fully determined by its `(t_m, seed)` pair.
pub fn cmd_sweep(path: &Path, out_dir: Option<&Path>) -> Result<SweepReport, HarnessError> {
    let file = load_scenario_file(path)?;
    let resolved = resolve_scenario(&file)?;
    let timeouts = match &resolved.sweep {
        Some(sweep) => sweep.t_m.clone(),
        None => vec![resolved.base.params.timeout],
    };
    let dir = output_dir(out_dir, &resolved);
    fs::create_dir_all(&dir).map_err(runtime)?;

    let jobs: Vec<(u64, u64)> = timeouts
        .iter()
        .flat_map(|&t| resolved.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let results: Vec<(u64, u64, Result<RunMetrics, String>)> = jobs
        .par_iter()
        .map(|&(t_m, seed)| {
            let mut scenario = resolved.base.clone();
            scenario.params.timeout = t_m;
            scenario.seed = seed;
            let outcome = run_with_observer(&scenario, |_| {}).map_err(|e| e.to_string());
            (t_m, seed, outcome)
        })
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for &t_m in &timeouts {
        let mut seeds = Vec::new();
        let mut runs = Vec::new();
        for (t, seed, outcome) in &results {
            if *t != t_m {
                continue;
            }
            match outcome {
                Ok(metrics) => {
                    seeds.push(*seed);
                    runs.push(metrics.clone());
                }
                Err(err) => failures.push((t_m, *seed, err.clone())),
            }
        }
        cells.push(SweepCell {
            t_m,
            summary: SummaryReport::from_runs(&resolved.hash, &seeds, &runs),
        });
    }
    let report = SweepReport {
        scenario_hash: resolved.hash.clone(),
        cells,
        failures,
    };
    let body = serde_json::to_string_pretty(&report).map_err(runtime)?;
    write_atomic(&dir.join("sweep.json"), &body)?;
    if report.failures.is_empty() {
        Ok(report)
    } else {
        Err(HarnessError::SweepCellsFailed {
            failed: report.failures.len(),
            total: jobs.len(),
        })
    }
}
