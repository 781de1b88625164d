use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aigate::agents::{self, write_curve, AgentKind};
use aigate::approx::Checkpoint;
use aigate::env::{GateEnv, TransitionWriter};
use aigate::harness::{self, CompareOptions, HeatmapFormat, PolicyEntry, ReproduceOptions};
use aigate::policy::NetworkPolicy;
use aigate::{Config, Policy};
use aigate_server::AppState;
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

/// Exit status for rejected input (bad flags, configuration, checkpoints).
const EXIT_VALIDATION: u8 = 2;
/// Exit status for failures after the input was accepted.
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "aigate", version, about = "Learned gating of assistant access for learners")]
struct Cli {
    /// JSON configuration file; defaults apply to omitted keys.
    #[arg(long, global = true, env = "AIGATE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its checkpoint and training curve.
    Train {
        #[arg(long)]
        agent: AgentKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `training.total_steps`.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate a checkpoint, optionally against the fixed baselines.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        baselines: bool,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Also write the comparison JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the P(Allow) heatmap of a checkpoint.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: usize,
        /// Per-task AI use of earlier tasks: "", "10" or "true,false".
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        history: String,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
        /// Output path without extension.
        #[arg(long, default_value = "heatmap")]
        out: PathBuf,
    },
    /// Run a fixed policy in the simulator.
    Simulate {
        /// always | never | random:P
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = harness::COMPARE_SEED_BASE)]
        seed_base: u64,
        /// Write every transition as JSON lines.
        #[arg(long)]
        transitions: Option<PathBuf>,
    },
    /// Run the session gate service.
    Serve {
        /// Checkpoint for the `rl` condition; repeatable, named by file stem.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Session journal for crash recovery (overrides the configuration).
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Train every agent on every seed, compare, and write a report bundle.
    Reproduce {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Overrides `training.total_steps`.
        #[arg(long)]
        steps: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Both,
}

impl From<Format> for HeatmapFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => HeatmapFormat::Csv,
            Format::Svg => HeatmapFormat::Svg,
            Format::Both => HeatmapFormat::Both,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<aigate::Error> for Failure {
    fn from(e: aigate::Error) -> Self {
        use aigate::Error as E;
        let input = e.is_validation()
            || matches!(
                e,
                E::Usage(_) | E::Format { .. } | E::CorruptCheckpoint(_) | E::CheckpointDimensions(_) | E::VersionMismatch { .. }
            );
        if input {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<aigate_server::ApiError> for Failure {
    fn from(e: aigate_server::ApiError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("AIGATE_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn parse_policy(text: &str) -> Result<Policy, Failure> {
    match text {
        "always" => Ok(Policy::Always),
        "never" => Ok(Policy::Never),
        _ => {
            let p = text
                .strip_prefix("random:")
                .and_then(|p| p.parse::<f64>().ok())
                .filter(|p| (0.0..=1.0).contains(p))
                .ok_or_else(|| Failure::Validation(format!("unknown policy {text:?}; expected always, never or random:P with 0≤P≤1")))?;
            Ok(Policy::Random(p))
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Train { agent, seed, out, steps } => {
            if let Some(steps) = steps {
                cfg.training.total_steps = steps;
            }
            cfg.validate()?;
            std::fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
            tracing::info!(%agent, seed, steps = cfg.training.total_steps, "training");
            let mut outcome = agents::train(agent, &cfg.sim(), &cfg.training, seed)?;
            outcome.checkpoint.config_hash = cfg.hash();
            let checkpoint = out.join(format!("{agent}-seed{seed}.json"));
            let curve = out.join(format!("{agent}-seed{seed}.csv"));
            outcome.checkpoint.save(&checkpoint)?;
            write_curve(&curve, &outcome.curve)?;
            print_json(&serde_json::json!({
                "agent": agent,
                "seed": seed,
                "steps": outcome.checkpoint.step,
                "checkpoint": checkpoint,
                "curve": curve,
                "final_mean_return": outcome.curve.last().map(|p| p.mean_return),
            }))
        }
        Command::Eval {
            checkpoint,
            baselines,
            episodes,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let policy = Policy::Network(NetworkPolicy::new(ckpt.net, cfg.training.features)?);
            let name = checkpoint
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "checkpoint".into());
            let mut entries = vec![PolicyEntry::ensemble(name, vec![policy], vec![])];
            if baselines {
                entries.extend([Policy::Always, Policy::Never, Policy::Random(0.5)].map(PolicyEntry::fixed));
            }
            let opts = CompareOptions {
                episodes,
                ..CompareOptions::default()
            };
            let report = harness::compare(&cfg.sim(), &entries, &opts)?;
            if let Some(out) = out {
                std::fs::write(&out, report.to_json()).map_err(|e| io_failure(&out, e))?;
            }
            println!("{}", report.to_json());
            Ok(())
        }
        Command::Heatmap {
            checkpoint,
            task,
            history,
            format,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let history = harness::parse_history(&history)?;
            let (map, written) =
                harness::export_heatmap(&ckpt, cfg.training.features, task, &history, format.into(), &out)?;
            print_json(&serde_json::json!({
                "files": written,
                "struggle_contrast": map.struggle_contrast(),
            }))
        }
        Command::Simulate {
            policy,
            episodes,
            seed_base,
            transitions,
        } => {
            let policy = parse_policy(&policy)?;
            let env = GateEnv::new(cfg.sim())?;
            if let Some(path) = &transitions {
                let mut writer = TransitionWriter::create(path)?;
                let mut buf = Vec::new();
                for i in 0..episodes as u64 {
                    buf.clear();
                    env.run_episode(&policy, seed_base.wrapping_add(i), Some(&mut buf))?;
                    for t in &buf {
                        writer.write(t).map_err(|e| io_failure(path, e))?;
                    }
                }
                writer.finish().map_err(|e| io_failure(path, e))?;
            }
            let opts = CompareOptions {
                episodes,
                seed_base,
                ..CompareOptions::default()
            };
            let report = harness::compare(&cfg.sim(), &[PolicyEntry::fixed(policy)], &opts)?;
            print_json(&report.policies[0])
        }
        Command::Serve {
            checkpoint,
            port,
            host,
            journal,
        } => {
            let mut state = AppState::new(&cfg)?;
            for path in &checkpoint {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| Failure::Validation(format!("bad checkpoint path {}", path.display())))?;
                state = state.with_checkpoint(&name, &Checkpoint::load(path)?, &cfg)?;
                tracing::info!(name, "registered checkpoint");
            }
            if let Some(journal) = journal {
                state = state.with_journal(journal);
            }
            let state = state.start()?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| Failure::Runtime(format!("bind {host}:{port}: {e}")))?;
                let addr = listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?;
                tracing::info!(%addr, "listening");
                aigate_server::serve(state, listener)
                    .await
                    .map_err(|e| Failure::Runtime(e.to_string()))
            })
        }
        Command::Reproduce {
            out,
            seeds,
            episodes,
            steps,
        } => {
            if let Some(steps) = steps {
                cfg.training.total_steps = steps;
            }
            let mut opts = ReproduceOptions::default();
            if let Some(seeds) = seeds {
                opts.seeds = seeds;
            }
            opts.compare.episodes = episodes;
            let result = harness::reproduce(&cfg, &opts, &out)?;
            for check in &result.ranking {
                tracing::info!(
                    other = %check.other,
                    ppo = check.ppo_mean,
                    other_mean = check.other_mean,
                    passed = check.passed,
                    "ranking"
                );
            }
            print_json(&result.manifest)
        }
    }
}
