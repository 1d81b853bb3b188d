//! `nmpc`: performance bounds, reactor experiments and networked runs from
//! the command line.

mod output;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nmpc_core::analysis::{network_alpha, PerformanceReport, DEFAULT_EPSILON};
use nmpc_core::bounds::{
    alpha_continuous, alpha_discrete, guaranteed_alpha_varying, minimal_prediction_horizon, stability_region,
    ControllabilityParams, HorizonPair, Interval, RefinementSpec,
};
use nmpc_core::experiment::{Experiment, RunOutcome, RunSummary, CSTR_DURATION, CSTR_PREDICTION_HORIZON};
use nmpc_core::io::{region_table, report_table, run_table, steps_from_run_table, trajectory_table, Table};
use nmpc_core::mpc::OcpSpec;
use nmpc_core::network::{prediction_consistency_check, run_ncs_simulation, NetworkConfig, NetworkError, NcsTrace};
use nmpc_core::par::Execution;

use output::{print_table, save_either, save_table, write_text, Format};

#[derive(Parser)]
#[command(name = "nmpc", version, about = "Stability bounds and experiments for MPC with varying control horizons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Performance index of the continuous-time bound.
    Alpha(AlphaArgs),
    /// Performance index of the refined discrete bound for levels 0..=k.
    AlphaDiscrete(DiscreteArgs),
    /// Sweep of the (C, sigma) plane marking where the index is nonnegative.
    Region(RegionArgs),
    /// Smallest prediction horizon reaching a target index.
    MinHorizon(MinHorizonArgs),
    /// Closed-loop reactor runs with fixed or random control horizons.
    Cstr(CstrArgs),
    /// Networked reactor run from a configuration file.
    Ncs(NcsArgs),
    /// Performance indices recomputed from a saved run table.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// File receiving the full-precision result.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct Controllability {
    /// Overshoot constant.
    #[arg(long = "C")]
    overshoot: f64,
    /// Decay rate.
    #[arg(long)]
    mu: f64,
}

impl Controllability {
    fn params(&self) -> Result<ControllabilityParams> {
        Ok(ControllabilityParams::new(self.overshoot, self.mu)?)
    }
}

/// `a:b:n`, `n` evenly spaced values from `a` to `b`.
#[derive(Debug, Clone, Copy)]
struct Sweep {
    from: f64,
    to: f64,
    count: usize,
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else { return Err(format!("expected a:b:n, got {s}")) };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
        let count: usize = n.trim().parse().map_err(|e| format!("{n}: {e}"))?;
        if count == 0 {
            return Err("sweep needs at least one point".into());
        }
        Ok(Self { from: num(a)?, to: num(b)?, count })
    }
}

impl Sweep {
    fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.from + step * i as f64).collect()
    }
}

/// `lo:hi`.
#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s}"))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
        Ok(Self { lo: num(a)?, hi: num(b)? })
    }
}

#[derive(Args)]
#[group(id = "control_horizon", required = true, multiple = false, args = ["delta", "delta_sweep", "delta_min"])]
struct AlphaArgs {
    #[command(flatten)]
    params: Controllability,
    /// Prediction horizon.
    #[arg(long = "T")]
    horizon: f64,
    /// Control horizon.
    #[arg(long)]
    delta: Option<f64>,
    /// Evenly spaced control horizons from A to B.
    #[arg(long, value_name = "A:B:N")]
    delta_sweep: Option<Sweep>,
    /// Guaranteed index for every control horizon in [d, T - d].
    #[arg(long, value_name = "D")]
    delta_min: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DiscreteArgs {
    #[command(flatten)]
    params: Controllability,
    /// Base step.
    #[arg(long)]
    tau: f64,
    /// Steps in the prediction horizon.
    #[arg(long = "N")]
    steps: usize,
    /// Steps in the control horizon.
    #[arg(long)]
    m: usize,
    /// Highest refinement level.
    #[arg(long, short, default_value_t = 12)]
    k: u32,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RegionArgs {
    /// Prediction horizon.
    #[arg(long = "T")]
    horizon: f64,
    /// Control horizon.
    #[arg(long)]
    delta: f64,
    #[arg(long = "C-range", value_name = "LO:HI", default_value = "1:6")]
    overshoot_range: Range,
    #[arg(long, value_name = "LO:HI", default_value = "0.05:0.95")]
    sigma_range: Range,
    /// Points per axis.
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MinHorizonArgs {
    #[command(flatten)]
    params: Controllability,
    /// Control horizon as a fraction of the prediction horizon.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    /// Required index.
    #[arg(long)]
    alpha: f64,
}

#[derive(Args)]
#[group(id = "mode", multiple = false, args = ["delta", "delta_sweep", "delta_random", "network"])]
struct CstrArgs {
    /// Prediction horizon.
    #[arg(long = "T", default_value_t = CSTR_PREDICTION_HORIZON)]
    horizon: f64,
    /// Simulated time.
    #[arg(long, default_value_t = CSTR_DURATION)]
    duration: f64,
    /// Fixed control horizon (default 0.1).
    #[arg(long)]
    delta: Option<f64>,
    /// Evenly spaced fixed control horizons, one run each.
    #[arg(long, value_name = "A:B:N")]
    delta_sweep: Option<Sweep>,
    /// Control horizons drawn from the grid multiples in [lo, hi].
    #[arg(long, value_name = "LO:HI")]
    delta_random: Option<Range>,
    /// Number of random runs.
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Seed of the first random run; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Networked run with this configuration.
    #[arg(long, value_name = "FILE")]
    network: Option<PathBuf>,
    /// Stage-cost truncation in the index.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// CSV of the closed-loop state trajectory (single runs).
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,
    /// CSV of the per-step records, readable by `analyze` (single runs).
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// JSON lines event log (networked runs).
    #[arg(long, value_name = "FILE")]
    event_log: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct NcsArgs {
    /// Network configuration (TOML).
    #[arg(long, value_name = "FILE")]
    network: PathBuf,
    /// Prediction horizon.
    #[arg(long = "T", default_value_t = CSTR_PREDICTION_HORIZON)]
    horizon: f64,
    /// Simulated time.
    #[arg(long, default_value_t = CSTR_DURATION)]
    duration: f64,
    /// Stage-cost truncation in the index.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// CSV of the actuator-side state trajectory.
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,
    /// JSON lines event log.
    #[arg(long, value_name = "FILE")]
    event_log: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run table written by `cstr --records`.
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Check the relaxed decrease condition at this level.
    #[arg(long)]
    alpha_bar: Option<f64>,
    /// Tolerance of the decrease check.
    #[arg(long, default_value_t = 1e-5)]
    slack: f64,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("NMPC_LOG", "warn")).init();
    let cli = Cli::parse();
    let execution = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    if let Err(e) = run(cli.command, execution) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command, execution: Execution) -> Result<()> {
    match command {
        Command::Alpha(a) => cmd_alpha(a),
        Command::AlphaDiscrete(a) => cmd_alpha_discrete(a),
        Command::Region(a) => cmd_region(a, execution),
        Command::MinHorizon(a) => cmd_min_horizon(a),
        Command::Cstr(a) => cmd_cstr(a, execution),
        Command::Ncs(a) => cmd_ncs(a),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

fn finish(table: &Table, output: &OutputArgs) -> Result<()> {
    if let Some(path) = &output.out {
        save_table(table, path, output.format)?;
    }
    Ok(())
}

fn cmd_alpha(args: AlphaArgs) -> Result<()> {
    let params = args.params.params()?;
    let t = args.horizon;
    if let Some(d) = args.delta_min {
        let a = guaranteed_alpha_varying(&params, t, d)?;
        println!("{a:.6}");
        let mut table = Table::new(["delta_min", "alpha"]);
        table.push(vec![d, a]);
        return finish(&table, &args.output);
    }
    let deltas = match (args.delta, args.delta_sweep) {
        (Some(d), _) => vec![d],
        (None, Some(s)) => s.values(),
        (None, None) => unreachable!("clap requires one horizon option"),
    };
    let mut table = Table::new(["delta", "alpha"]);
    for d in deltas {
        let horizon = HorizonPair::new(t, d)?;
        table.push(vec![d, alpha_continuous(&params, &horizon)]);
    }
    if args.delta.is_some() {
        println!("{:.6}", table.rows[0][1]);
    } else {
        print_table(&table);
    }
    finish(&table, &args.output)
}

fn cmd_alpha_discrete(args: DiscreteArgs) -> Result<()> {
    let params = args.params.params()?;
    let spec = RefinementSpec::new(args.tau, args.steps, args.m, 0)?;
    let exact = alpha_continuous(&params, &spec.horizon()?);
    let mut table = Table::new(["k", "alpha_k", "alpha_continuous"]);
    for k in 0..=args.k {
        table.push(vec![f64::from(k), alpha_discrete(&params, &spec.at_level(k))?, exact]);
    }
    print_table(&table);
    finish(&table, &args.output)
}

fn cmd_region(args: RegionArgs, execution: Execution) -> Result<()> {
    let grid = stability_region(
        args.horizon,
        args.delta,
        Interval::new(args.overshoot_range.lo, args.overshoot_range.hi)?,
        Interval::new(args.sigma_range.lo, args.sigma_range.hi)?,
        args.grid,
        execution,
    )?;
    let stable = grid.stable_points().len();
    println!("stable points: {stable} of {}", grid.alpha.len());
    finish(&region_table(&grid), &args.output)
}

fn cmd_min_horizon(args: MinHorizonArgs) -> Result<()> {
    let t = minimal_prediction_horizon(&args.params.params()?, args.fraction, args.alpha)?;
    println!("{t:.6}");
    Ok(())
}

fn print_outcome(label: &str, o: &RunOutcome) {
    let x = &o.run.terminal_state;
    println!(
        "{label}: global alpha {:.6}, truncated cost {:.6}, final state ({}), steps {}, violations {}",
        o.report.global_alpha,
        o.truncated_cost,
        x.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "),
        o.run.steps.len(),
        o.report.lyapunov_violations.len()
    );
}

fn summary_table(rows: &[(f64, RunSummary)]) -> Table {
    let mut table = Table::new(["run", "seed", "delta", "global_alpha", "truncated_cost", "x1", "x2", "steps"]);
    for (delta, s) in rows {
        let x = |i: usize| s.final_state.get(i).copied().unwrap_or(f64::NAN);
        table.push(vec![
            s.run as f64,
            s.seed as f64,
            *delta,
            s.global_alpha,
            s.truncated_cost,
            x(0),
            x(1),
            s.steps as f64,
        ]);
    }
    table
}

fn cmd_cstr(args: CstrArgs, execution: Execution) -> Result<()> {
    if let Some(path) = &args.network {
        return networked(
            path,
            args.horizon,
            args.duration,
            args.epsilon,
            args.trajectory.as_ref(),
            args.event_log.as_ref(),
            &args.output,
        );
    }
    let mut exp = Experiment::cstr();
    exp.spec = OcpSpec::cstr(args.horizon)?;
    exp.duration = args.duration;
    exp.epsilon = args.epsilon;

    let batch: Vec<(f64, RunSummary, Result<RunOutcome, String>)> = if let Some(sweep) = args.delta_sweep {
        let deltas = sweep.values();
        exp.sweep(&deltas, execution)
            .into_iter()
            .enumerate()
            .map(|(i, r)| (deltas[i], RunSummary::new(i, 0, &r), r.map_err(|e| e.to_string())))
            .collect()
    } else if let Some(range) = args.delta_random {
        exp.random_batch(args.seed, args.runs, range.lo, range.hi, execution)
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let seed = args.seed.wrapping_add(i as u64);
                (f64::NAN, RunSummary::new(i, seed, &r), r.map_err(|e| e.to_string()))
            })
            .collect()
    } else {
        let delta = args.delta.unwrap_or(0.1);
        let outcome = exp.fixed(delta).with_context(|| format!("reactor run with delta = {delta}"))?;
        print_outcome(&format!("delta {delta:.6}"), &outcome);
        if let Some(path) = &args.trajectory {
            save_table(&trajectory_table(&outcome.run.trajectory), path, Format::Csv)?;
        }
        if let Some(path) = &args.records {
            save_table(&run_table(&outcome.run), path, Format::Csv)?;
        }
        if let Some(path) = &args.output.out {
            save_either(&report_table(&outcome.report), &outcome.report, path, args.output.format)?;
        }
        return Ok(());
    };

    let mut failed = 0;
    for (delta, summary, result) in &batch {
        let label = if delta.is_nan() {
            format!("run {} (seed {})", summary.run, summary.seed)
        } else {
            format!("run {} (delta {delta:.6})", summary.run)
        };
        match result {
            Ok(o) => print_outcome(&label, o),
            Err(e) => {
                failed += 1;
                log::error!("{label} failed: {e}");
                println!("{label}: failed: {e}");
            }
        }
    }
    let alphas: Vec<f64> = batch.iter().filter_map(|(_, s, _)| s.error.is_none().then_some(s.global_alpha)).collect();
    if let Some(min) = alphas.iter().copied().reduce(f64::min) {
        println!("minimum global alpha {min:.6} over {} runs", alphas.len());
    }
    if let Some(path) = &args.output.out {
        let rows: Vec<(f64, RunSummary)> = batch.iter().map(|(d, s, _)| (*d, s.clone())).collect();
        let summaries: Vec<&RunSummary> = rows.iter().map(|(_, s)| s).collect();
        save_either(&summary_table(&rows), &summaries, path, args.output.format)?;
    }
    if failed == batch.len() {
        bail!("all {failed} runs failed");
    }
    Ok(())
}

fn cmd_ncs(args: NcsArgs) -> Result<()> {
    networked(
        &args.network,
        args.horizon,
        args.duration,
        args.epsilon,
        args.trajectory.as_ref(),
        args.event_log.as_ref(),
        &args.output,
    )
}

fn activation_table(trace: &NcsTrace) -> Table {
    let dim = trace.trajectory.dim();
    let mut headers = vec!["sigma".to_string(), "measured_at".into(), "value".into()];
    headers.extend((1..=dim).map(|i| format!("predicted_x{i}")));
    headers.extend((1..=dim).map(|i| format!("actual_x{i}")));
    headers.push("activated".into());
    let mut table = Table::new(headers);
    for a in &trace.activations {
        let mut row = vec![a.sigma, a.measured_at, a.value];
        row.extend(&a.predicted_state);
        match &a.actual_state {
            Some(x) => row.extend(x),
            None => row.extend(std::iter::repeat_n(f64::NAN, dim)),
        }
        row.push(f64::from(u8::from(a.activated)));
        table.push(row);
    }
    table
}

fn networked(
    config: &Path,
    horizon: f64,
    duration: f64,
    epsilon: f64,
    trajectory: Option<&PathBuf>,
    event_log: Option<&PathBuf>,
    output: &OutputArgs,
) -> Result<()> {
    let cfg = NetworkConfig::load(config)?;
    let exp = Experiment::cstr();
    let spec = OcpSpec::cstr(horizon)?;
    let (trace, starved) = match run_ncs_simulation(&exp.model, &spec, &cfg, &exp.x0, duration) {
        Ok(t) => (t, None),
        Err(NetworkError::Starvation { time, context, trace: Some(t) }) => (*t, Some(format!("t = {time}: {context}"))),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = event_log {
        let mut buf = Vec::new();
        trace.write_event_log(&mut buf)?;
        std::fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = trajectory {
        save_table(&trajectory_table(&trace.trajectory), path, Format::Csv)?;
    }
    if let Some(path) = &output.out {
        match output.format {
            Format::Csv => save_table(&activation_table(&trace), path, Format::Csv)?,
            Format::Json => write_text(path, &nmpc_core::io::to_json(&trace)?)?,
        }
    }

    let horizons = trace.realized_horizons();
    println!(
        "activations {}, realized horizons [{}]",
        trace.activated().count(),
        horizons.iter().map(|d| format!("{d:.6}")).collect::<Vec<_>>().join(", ")
    );
    let report = prediction_consistency_check(&trace);
    match &report.first_violation {
        None => println!("prediction consistency: pass ({} pieces checked)", report.checked_activations),
        Some(v) => println!("prediction consistency: fail at t = {:.6}: {}", v.time, v.detail),
    }
    if let Some(msg) = starved {
        bail!("actuator starved at {msg}");
    }
    match network_alpha(&exp.model, &spec, &trace, epsilon) {
        Ok(r) => println!("global alpha {:.6}, violations {}", r.global_alpha, r.lyapunov_violations.len()),
        Err(e) => log::warn!("no performance index: {e}"),
    }
    if !report.passed {
        return Err(anyhow!("prediction consistency violated"));
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let table = Table::load(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let steps = steps_from_run_table(&table)?;
    let report = PerformanceReport::from_steps(&steps, args.epsilon, args.alpha_bar.map(|a| (a, args.slack)));
    println!(
        "global alpha {:.6}, closed-loop cost {:.6}, steps {}",
        report.global_alpha,
        report.closed_loop_cost,
        report.steps.len()
    );
    if args.alpha_bar.is_some() {
        println!("decrease violations at steps {:?}", report.lyapunov_violations);
    }
    if let Some(path) = &args.output.out {
        save_either(&report_table(&report), &report, path, args.output.format)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_and_range_parsing() {
        let s: Sweep = "0:1:5".parse().unwrap();
        assert_eq!(s.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!("0:1".parse::<Sweep>().is_err());
        assert!("0:1:0".parse::<Sweep>().is_err());
        let r: Range = "0.1:0.3".parse().unwrap();
        assert_eq!((r.lo, r.hi), (0.1, 0.3));
    }
}
