//! Command-line entry point: `gen-data`, `train-ts`, `train-rl`, `eval`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
//! Every run writes its fully-resolved configuration next to its outputs so
//! the run can be reproduced from the provenance file alone.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{grad_mode_from_str, RunConfig, Task};

/// Set by SIGINT; training loops poll it and shut down gracefully.
pub static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_signal_handler() {
    let handler = on_sigint as extern "C" fn(libc::c_int) as usize as libc::sighandler_t;
    unsafe {
        libc::signal(libc::SIGINT, handler);
        libc::signal(libc::SIGTERM, handler);
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config files, or checkpoints (exit code 2).
    Usage(String),
    /// Failures while running (exit code 1).
    Runtime(String),
}

#[derive(Parser)]
#[command(
    name = "qfwp-cli",
    about = "Fast weight programmer models: benchmark data, training, evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// shm | bessel | narma5 | narma10 | minigrid5 | minigrid6
    #[arg(long)]
    task: Option<String>,
    /// Master seed; all run randomness derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for run outputs
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config file of `key = value` lines; flags win over the file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    qubits: Option<usize>,
    /// all-steps | last-step
    #[arg(long = "grad-mode")]
    grad_mode: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    /// Min-max normalize the series before windowing
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long = "entropy-coef")]
    entropy_coef: Option<f64>,
    #[arg(long = "value-coef")]
    value_coef: Option<f64>,
    #[arg(long = "score-window")]
    score_window: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "lookup-steps")]
    lookup_steps: Option<usize>,
    /// Clip gradients to this L2 norm before applying
    #[arg(long = "grad-clip")]
    grad_clip: Option<f64>,
    /// Write a checkpoint every N episodes (0 = only at the end)
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark series as CSV
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        /// Output CSV path
        #[arg(long, default_value = "series.csv")]
        data_out: Option<PathBuf>,
    },
    /// Train on a windowed time series
    TrainTs {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the gridworld agent with asynchronous advantage actor-critic
    TrainRl {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint on a task
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint file to load
        #[arg(long)]
        checkpoint: PathBuf,
        /// Greedy-evaluation episode count for gridworld tasks
        #[arg(long = "eval-episodes", default_value_t = 20)]
        eval_episodes: usize,
    },
}

impl CommonArgs {
    /// defaults(task) <- config file <- flags.
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let task: Task = self
            .task
            .as_deref()
            .ok_or_else(|| CliError::Usage("--task is required".into()))?
            .parse()?;
        let mut cfg = RunConfig::defaults_for(task);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.layers {
            cfg.layers = v;
        }
        if let Some(v) = self.qubits {
            cfg.qubits = v;
        }
        if let Some(v) = &self.grad_mode {
            cfg.grad_mode = grad_mode_from_str(v)?;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if self.normalize {
            cfg.normalize = true;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.entropy_coef {
            cfg.entropy_coef = v;
        }
        if let Some(v) = self.value_coef {
            cfg.value_coef = v;
        }
        if let Some(v) = self.score_window {
            cfg.score_window = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.lookup_steps {
            cfg.lookup_steps = v;
        }
        if let Some(v) = self.grad_clip {
            cfg.grad_clip = Some(v);
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { common, data_out } => {
            let cfg = common.resolve()?;
            let out = data_out.unwrap_or_else(|| PathBuf::from("series.csv"));
            commands::cmd_gen_data(cfg.task, &out)
        }
        Command::TrainTs { common } => {
            let cfg = common.resolve()?;
            if cfg.task.is_rl() {
                return Err(CliError::Usage(format!(
                    "task {} is a gridworld task; use train-rl",
                    cfg.task
                )));
            }
            commands::cmd_train_ts(&cfg).map(|_| ())
        }
        Command::TrainRl { common } => {
            let cfg = common.resolve()?;
            commands::cmd_train_rl(&cfg).map(|_| ())
        }
        Command::Eval { common, checkpoint, eval_episodes } => {
            let cfg = common.resolve()?;
            commands::cmd_eval(&checkpoint, &cfg, eval_episodes).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    install_signal_handler();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
    }
}
