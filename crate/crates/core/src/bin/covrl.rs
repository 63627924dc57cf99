use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use covrl::commands::{self, exit_code};
use covrl::config::Config;
use covrl::Result;

#[derive(Parser)]
#[command(name = "covrl", version, about = "Coverage-guided JS fuzzing with coverage-weighted rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) a fuzzing campaign.
    Fuzz,
    /// Score every file of a corpus against a saved weight map.
    RewardEval {
        #[arg(value_name = "CORPUS_DIR")]
        dir: PathBuf,
        /// Campaign state file [default: <output>/state.bin]
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Coverage and error-rate report of a corpus.
    Replay {
        #[arg(value_name = "CORPUS_DIR")]
        dir: PathBuf,
    },
    /// Serve the mock mutator over the wire protocol.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Stop after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
    /// Print the resolved configuration as key = value lines.
    ShowConfig,
}

/// Every flag mirrors a config key. Flags override the config file, which
/// overrides the defaults.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// "toy", "toy-inproc", or a command line with @@ for the input file [default: toy]
    #[arg(long, global = true)]
    target: Option<String>,
    /// Coverage channel: env-file or shared-region [default: env-file]
    #[arg(long, global = true)]
    channel: Option<String>,
    /// Per-execution timeout [default: 1000]
    #[arg(long, global = true)]
    timeout_ms: Option<String>,
    /// Address-space limit for the target, 0 for none [default: 0]
    #[arg(long, global = true)]
    memory_limit_mb: Option<String>,
    /// Coverage map size is 2^exponent, 8..=24 [default: 16]
    #[arg(long, global = true)]
    map_exponent: Option<String>,
    /// Reward scheme: cwr, crr or cr-binary [default: cwr]
    #[arg(long, global = true)]
    reward: Option<String>,
    /// Momentum factor for the weight map [default: 0.6]
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Executions per finetuning cycle [default: 10000]
    #[arg(long, global = true)]
    iter_cycle: Option<String>,
    /// Expected masked fraction of tokens [default: 0.15]
    #[arg(long, global = true)]
    mask_fraction: Option<String>,
    /// Most mask slots per case [default: 8]
    #[arg(long, global = true)]
    mask_slots: Option<String>,
    /// Insert,overwrite,splice weights [default: 1,1,1]
    #[arg(long, global = true)]
    mix: Option<String>,
    /// "mock" or host:port of a mutator service [default: mock]
    #[arg(long, global = true)]
    mutator: Option<String>,
    /// Share of error cases sampled into the training set [default: 0.25]
    #[arg(long, global = true)]
    error_sample_rate: Option<String>,
    /// RNG seed for the campaign and the mock mutator [default: 0]
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Campaign directory [default: covrl-out]
    #[arg(long, global = true)]
    output: Option<String>,
    /// Initial seed directory [default: built-in toy seeds]
    #[arg(long, global = true)]
    corpus: Option<String>,
    /// Execution budget, 0 for unlimited [default: 0]
    #[arg(long, global = true)]
    execs: Option<String>,
    /// Time budget in seconds, 0 for unlimited [default: 0]
    #[arg(long, global = true)]
    duration_s: Option<String>,
    /// Logarithm base for idf and the reward: e, 2 or 10 [default: e]
    #[arg(long, global = true)]
    log_base: Option<String>,
    /// Seed scheduling: weighted or uniform [default: weighted]
    #[arg(long, global = true)]
    schedule: Option<String>,
    /// Top-k for contrastive decoding, passed to the mutator [default: 32]
    #[arg(long, global = true)]
    top_k: Option<String>,
    /// Degeneration penalty for contrastive decoding [default: 0.6]
    #[arg(long, global = true)]
    contrastive_alpha: Option<String>,
    /// Mock mutator learning rate [default: 10]
    #[arg(long, global = true)]
    learning_rate: Option<String>,
    /// Mock mutator adapts to rewards: true or false [default: true]
    #[arg(long, global = true)]
    feedback: Option<String>,
    /// Same as --feedback false.
    #[arg(long, global = true)]
    no_feedback: bool,
    /// Record wall time in stats: true or false [default: true]
    #[arg(long, global = true)]
    wall_clock: Option<String>,
    /// Same as --wall-clock false; stats then depend only on the seed.
    #[arg(long, global = true)]
    no_wall_clock: bool,
    /// Continue the campaign checkpointed in the output directory.
    #[arg(long, global = true)]
    resume: bool,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs = [
            ("target", &self.target),
            ("channel", &self.channel),
            ("timeout_ms", &self.timeout_ms),
            ("memory_limit_mb", &self.memory_limit_mb),
            ("map_exponent", &self.map_exponent),
            ("reward", &self.reward),
            ("alpha", &self.alpha),
            ("iter_cycle", &self.iter_cycle),
            ("mask_fraction", &self.mask_fraction),
            ("mask_slots", &self.mask_slots),
            ("mix", &self.mix),
            ("mutator", &self.mutator),
            ("error_sample_rate", &self.error_sample_rate),
            ("seed", &self.seed),
            ("output", &self.output),
            ("corpus", &self.corpus),
            ("execs", &self.execs),
            ("duration_s", &self.duration_s),
            ("log_base", &self.log_base),
            ("schedule", &self.schedule),
            ("top_k", &self.top_k),
            ("contrastive_alpha", &self.contrastive_alpha),
            ("learning_rate", &self.learning_rate),
            ("feedback", &self.feedback),
            ("wall_clock", &self.wall_clock),
        ];
        let mut out: Vec<(String, String)> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        if self.no_feedback {
            out.push(("feedback".into(), "false".into()));
        }
        if self.no_wall_clock {
            out.push(("wall_clock".into(), "false".into()));
        }
        if self.resume {
            out.push(("resume".into(), "true".into()));
        }
        out
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::resolve(cli.config.config.as_deref(), &cli.config.overrides())?;
    match cli.command {
        Command::Fuzz => {
            let interrupt = Arc::new(AtomicBool::new(false));
            let flag = interrupt.clone();
            if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
                log::warn!("cannot install the interrupt handler: {e}");
            }
            let summary = commands::cmd_fuzz(&cfg, &interrupt)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::RewardEval { dir, state } => {
            let state = state.unwrap_or_else(|| cfg.output.join("state.bin"));
            let rows = commands::cmd_reward_eval(&cfg, &dir, &state)?;
            print!("{}", commands::format_reward_table(&rows));
        }
        Command::Replay { dir } => {
            let report = commands::cmd_replay(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::ServeMock {
            listen,
            max_connections,
        } => commands::cmd_serve_mock(&cfg, &listen, max_connections)?,
        Command::ShowConfig => print!("{}", cfg.dump()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(commands::EXIT_OK as u8),
        Err(e) => {
            eprintln!("covrl: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
