//! Command-line driver: train, eval, oracle, calibrate, sweep.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use llmlink_core::agent::dqn::{self, NullObserver};
use llmlink_core::env::UserStepRecord;
use llmlink_core::oracle::{self, Policy, PolicyTable};
use llmlink_core::service::Action;
use llmlink_core::{calibrate, checkpoint, metrics, Env, RunConfig};

#[derive(Parser)]
#[command(name = "llmlink", version, about = "Simulate and optimize LLM serving over a fading wireless link")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Double DQN agent and write checkpoint, metrics, and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint against an oracle policy table.
    Eval(EvalArgs),
    /// Brute-force the optimal policy per reference-SNR bin.
    Oracle(OracleArgs),
    /// Fit compute-profile timing coefficients to observed timings.
    Calibrate(CalibrateArgs),
    /// Train across several seeds in parallel and summarize.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config's env seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Episode count; overrides the config's agent setting.
    #[arg(long)]
    episodes: Option<u32>,
    /// Output directory for checkpoint.txt, train_metrics.jsonl,
    /// config.toml, and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Oracle policy table produced by `llmlink oracle`.
    #[arg(long)]
    oracle: PathBuf,
    /// Evaluation episodes.
    #[arg(long, default_value_t = 200)]
    episodes: u32,
    /// Evaluation seed (distinct stream from training).
    #[arg(long, default_value_t = 1_000_003)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    /// Reference-SNR bin count; overrides the config.
    #[arg(long)]
    bins: Option<usize>,
    /// Monte Carlo samples per (bin, action); overrides the config.
    #[arg(long)]
    samples: Option<usize>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV of tokens,kappa,seconds rows; `#` comments allowed.
    #[arg(long)]
    timings: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Number of seeds (0..seeds-1 offset from the config seed).
    #[arg(long)]
    seeds: u64,
    /// Episode count; overrides the config's agent setting.
    #[arg(long)]
    episodes: Option<u32>,
    /// Output directory; one subdirectory per seed.
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

/// Setup failures (bad flags, unreadable or invalid config) exit 1;
/// failures after setup exit 2.
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(usage)
}

#[derive(Serialize)]
struct RunManifest {
    schema: &'static str,
    tool_version: &'static str,
    command: String,
    seed: u64,
    episodes: u32,
    config_snapshot: String,
    checkpoint: String,
    train_metrics: String,
    created_unix: u64,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Trains one agent and writes the artifact set into `out`. The manifest
/// carries a wall-clock stamp; every other artifact is a pure function of
/// (config, seed) so reruns are byte-identical.
fn run_train_once(config: &RunConfig, seed: u64, episodes: u32, out: &Path) -> Result<f64, CliError> {
    std::fs::create_dir_all(out).map_err(runtime)?;

    let mut env_config = config.env.clone();
    env_config.seed = seed;
    let mut agent_config = config.agent.clone();
    agent_config.episodes = episodes;

    let mut snapshot = config.clone();
    snapshot.env = env_config.clone();
    snapshot.agent = agent_config.clone();
    let snapshot_toml = snapshot.to_toml_string().map_err(runtime)?;
    std::fs::write(out.join("config.toml"), &snapshot_toml).map_err(runtime)?;

    let mut env = Env::new(env_config).map_err(usage)?;
    let trained = dqn::train(&mut env, &agent_config, seed, &mut NullObserver).map_err(runtime)?;

    checkpoint::save(&trained.net, &out.join("checkpoint.txt")).map_err(runtime)?;
    metrics::write_train_metrics(&out.join("train_metrics.jsonl"), &trained.metrics)
        .map_err(runtime)?;

    let manifest = RunManifest {
        schema: "llmlink.run-manifest/1",
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "train".into(),
        seed,
        episodes,
        config_snapshot: "config.toml".into(),
        checkpoint: "checkpoint.txt".into(),
        train_metrics: "train_metrics.jsonl".into(),
        created_unix: now_unix(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    std::fs::write(out.join("manifest.json"), manifest_json + "\n").map_err(runtime)?;

    let tail = trained.metrics.iter().rev().take(100).collect::<Vec<_>>();
    let recent = tail.iter().map(|m| m.mean_reward).sum::<f64>() / tail.len().max(1) as f64;
    Ok(recent)
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.env.seed);
    let episodes = args.episodes.unwrap_or(config.agent.episodes);
    if episodes == 0 {
        return Err(CliError::Usage("episodes must be >= 1".into()));
    }
    let recent = run_train_once(&config, seed, episodes, &args.out)?;
    println!("trained seed={seed} episodes={episodes}");
    println!("recent_mean_reward = {recent:.6}");
    println!("artifacts = {}", args.out.display());
    Ok(())
}

/// Always transmits uncompressed at the reference (median) power level.
struct FixedBaseline {
    action: Action,
}

impl Policy for FixedBaseline {
    fn act(&self, _user_state: &[f64]) -> llmlink_core::Result<Action> {
        Ok(self.action)
    }
}

fn mean<'a, I: Iterator<Item = &'a UserStepRecord>>(records: I, f: fn(&UserStepRecord) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        sum += f(r);
        n += 1;
    }
    if n == 0 { f64::NAN } else { sum / n as f64 }
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let net = checkpoint::load(&args.checkpoint).map_err(usage)?;
    let table_text = std::fs::read_to_string(&args.oracle).map_err(usage)?;
    let table = PolicyTable::from_text(&table_text).map_err(usage)?;

    let mut env = Env::new(config.env.clone()).map_err(usage)?;
    let records =
        oracle::rollout(&mut env, &net, args.episodes, args.seed).map_err(runtime)?;
    if records.is_empty() {
        return Err(CliError::Runtime("empty evaluation rollout".into()));
    }

    let mean_reward = mean(records.iter(), |r| r.reward);
    let mean_f = mean(records.iter(), |r| r.fidelity.f);
    let mean_ber = mean(records.iter(), |r| r.link.ber);
    let mean_power = mean(records.iter(), |r| r.p_tx_w);
    let violation_rate = records.iter().filter(|r| !r.violated.is_empty()).count() as f64
        / records.len() as f64;

    let report = oracle::regret(&net, &table, &config.env, args.episodes, args.seed)
        .map_err(runtime)?;

    // Latency baseline: no compression at the median power level, over the
    // very same fading and prompt draws. Outage pairs are dropped.
    let baseline = FixedBaseline {
        action: Action::new(0, config.env.reference_power_level).map_err(runtime)?,
    };
    let mut env = Env::new(config.env.clone()).map_err(usage)?;
    let baseline_records =
        oracle::rollout(&mut env, &baseline, args.episodes, args.seed).map_err(runtime)?;
    let mut sum_policy = 0.0;
    let mut sum_base = 0.0;
    let mut pairs = 0usize;
    for (p, b) in records.iter().zip(baseline_records.iter()) {
        if p.cost.time_total_s.is_finite() && b.cost.time_total_s.is_finite() {
            sum_policy += p.cost.time_total_s;
            sum_base += b.cost.time_total_s;
            pairs += 1;
        }
    }
    let latency_improvement = if pairs > 0 && sum_base > 0.0 {
        1.0 - (sum_policy / pairs as f64) / (sum_base / pairs as f64)
    } else {
        f64::NAN
    };

    // Oracle mean power over the same draws, for the power-band check.
    let mut env = Env::new(config.env.clone()).map_err(usage)?;
    let oracle_records =
        oracle::rollout(&mut env, &table, args.episodes, args.seed).map_err(runtime)?;
    let oracle_power = mean(oracle_records.iter(), |r| r.p_tx_w);
    let power_distance_w = (mean_power - oracle_power).abs();

    println!("episodes = {}", args.episodes);
    println!("mean_reward = {mean_reward:.6}");
    println!("mean_fidelity = {mean_f:.6}");
    println!("mean_ber = {mean_ber:.6}");
    println!("mean_power_w = {mean_power:.6}");
    println!("violation_rate = {violation_rate:.6}");
    println!("oracle_mean_reward = {:.6}", report.mean_reward_oracle);
    println!("regret = {:.6}", report.reward_gap);
    println!("action_agreement = {:.6}", report.action_agreement);
    println!("latency_improvement_vs_uncompressed = {latency_improvement:.6}");
    println!("oracle_mean_power_w = {oracle_power:.6}");
    println!("power_distance_w = {power_distance_w:.6}");
    if power_distance_w > 1.0 {
        eprintln!(
            "warning: mean transmit power is {power_distance_w:.2} W away from the oracle's"
        );
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let oc = &config.oracle;
    let bins = args.bins.unwrap_or(oc.bins);
    let samples = args.samples.unwrap_or(oc.mc_samples);
    if bins == 0 || samples == 0 {
        return Err(CliError::Usage("bins and samples must be >= 1".into()));
    }
    let table = oracle::optimal_policy(
        &config.env,
        oc.snr_min,
        oc.snr_max,
        bins,
        samples,
        config.env.seed,
    )
    .map_err(runtime)?;
    let text = table.to_text();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text).map_err(runtime)?;
            println!("wrote {bins}-bin policy table to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.timings).map_err(usage)?;
    let rows = calibrate::parse_timings(&text).map_err(usage)?;
    let fit = calibrate::fit(&rows, 60).map_err(usage)?;
    println!("slm_time_per_token_s = {:.15}", fit.slm_time_per_token_s);
    println!("llm_time_per_token_s = {:.15}", fit.llm_time_per_token_s);
    println!("llm_fixed_overhead_s = {:.15}", fit.llm_fixed_overhead_s);
    println!("output_tokens = {}", fit.output_tokens);
    println!("rmse_s = {:.6}", fit.rmse_s);
    for (row, res) in rows.iter().zip(fit.residuals_s.iter()) {
        println!(
            "residual tokens={} kappa={} observed={} predicted={:.3} error={:+.3}",
            row.tokens,
            row.kappa,
            row.seconds,
            fit.predict(row.tokens, row.kappa),
            res
        );
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("seeds must be >= 1".into()));
    }
    if args.workers == 0 {
        return Err(CliError::Usage("workers must be >= 1".into()));
    }
    let config = load_config(&args.config)?;
    let episodes = args.episodes.unwrap_or(config.agent.episodes);
    std::fs::create_dir_all(&args.out).map_err(runtime)?;

    let seeds: Vec<u64> = (0..args.seeds).map(|k| config.env.seed.wrapping_add(k)).collect();
    let results = std::sync::Mutex::new(Vec::<(u64, Result<f64, String>)>::new());
    let next = std::sync::atomic::AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..args.workers.min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let seed = seeds[i];
                let out = args.out.join(format!("seed-{seed}"));
                let res = run_train_once(&config, seed, episodes, &out)
                    .map_err(|e| e.message().to_string());
                results.lock().unwrap().push((seed, res));
            });
        }
    });

    let mut rows = results.into_inner().unwrap();
    rows.sort_by_key(|(seed, _)| *seed);
    let mut failures = 0;
    println!("seed\trecent_mean_reward");
    for (seed, res) in &rows {
        match res {
            Ok(r) => println!("{seed}\t{r:.6}"),
            Err(e) => {
                failures += 1;
                println!("{seed}\tFAILED: {e}");
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} seed(s) failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // usage error.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
