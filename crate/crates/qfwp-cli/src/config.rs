//! Resolved run configuration: task-specific defaults, overridden by an
//! optional `key = value` config file, overridden by command-line flags.
//! Every run directory receives the fully-resolved configuration back in the
//! same format, so a run can be reproduced from its own provenance file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qfwp::model::GradMode;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Shm,
    Bessel,
    Narma5,
    Narma10,
    Minigrid5,
    Minigrid6,
}

impl Task {
    pub fn is_rl(self) -> bool {
        matches!(self, Task::Minigrid5 | Task::Minigrid6)
    }

    pub fn grid_n(self) -> usize {
        match self {
            Task::Minigrid5 => 5,
            Task::Minigrid6 => 6,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Shm => "shm",
            Task::Bessel => "bessel",
            Task::Narma5 => "narma5",
            Task::Narma10 => "narma10",
            Task::Minigrid5 => "minigrid5",
            Task::Minigrid6 => "minigrid6",
        }
    }
}

impl FromStr for Task {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "shm" => Ok(Task::Shm),
            "bessel" => Ok(Task::Bessel),
            "narma5" => Ok(Task::Narma5),
            "narma10" => Ok(Task::Narma10),
            "minigrid5" => Ok(Task::Minigrid5),
            "minigrid6" => Ok(Task::Minigrid6),
            other => Err(CliError::Usage(format!(
                "unknown task '{}'; expected shm, bessel, narma5, narma10, minigrid5, or minigrid6",
                other
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn grad_mode_from_str(s: &str) -> Result<GradMode, CliError> {
    match s {
        "all-steps" => Ok(GradMode::AllSteps),
        "last-step" => Ok(GradMode::LastStepOnly),
        other => Err(CliError::Usage(format!(
            "unknown grad mode '{}'; expected all-steps or last-step",
            other
        ))),
    }
}

pub fn grad_mode_name(mode: GradMode) -> &'static str {
    match mode {
        GradMode::AllSteps => "all-steps",
        GradMode::LastStepOnly => "last-step",
    }
}

/// Every knob of a run, fully resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub out: PathBuf,
    // model
    pub qubits: usize,
    pub layers: usize,
    pub grad_mode: GradMode,
    // time series
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub normalize: bool,
    // reinforcement learning
    pub workers: usize,
    pub episodes: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub score_window: usize,
    pub gamma: f64,
    pub lookup_steps: usize,
    pub grad_clip: Option<f64>,
    pub checkpoint_every: usize,
}

impl RunConfig {
    /// Per-task defaults: 8 qubits, 2 layers, 4-value windows, Adam 3e-3 for
    /// the regression tasks; for the gridworld tasks Adam 1e-4 with betas
    /// (0.92, 0.999), 5-step segments, discount 0.9, 8 workers, and a
    /// 500-episode score window.
    pub fn defaults_for(task: Task) -> Self {
        Self {
            task,
            seed: 42,
            out: PathBuf::from("runs"),
            qubits: 8,
            layers: 2,
            grad_mode: GradMode::AllSteps,
            window: 4,
            epochs: 100,
            lr: if task.is_rl() { 1e-4 } else { 3e-3 },
            batch: 16,
            normalize: false,
            workers: 8,
            episodes: 30_000,
            entropy_coef: 0.01,
            value_coef: 0.5,
            score_window: 500,
            gamma: 0.9,
            lookup_steps: 5,
            grad_clip: None,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.qubits == 0 || self.layers == 0 {
            return Err(CliError::Usage("qubits and layers must be positive".into()));
        }
        if !self.task.is_rl() && self.window == 0 {
            return Err(CliError::Usage("window must be positive".into()));
        }
        Ok(())
    }

    /// Serialize in the provenance format (also the config-file format).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[run]\n");
        s.push_str(&format!("task = {}\n", self.task));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("out = {}\n", self.out.display()));
        s.push_str("\n[model]\n");
        s.push_str(&format!("qubits = {}\n", self.qubits));
        s.push_str(&format!("layers = {}\n", self.layers));
        s.push_str(&format!("grad_mode = {}\n", grad_mode_name(self.grad_mode)));
        s.push_str("\n[train]\n");
        s.push_str(&format!("window = {}\n", self.window));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!("lr = {}\n", self.lr));
        s.push_str(&format!("batch = {}\n", self.batch));
        s.push_str(&format!("normalize = {}\n", self.normalize));
        s.push_str("\n[rl]\n");
        s.push_str(&format!("workers = {}\n", self.workers));
        s.push_str(&format!("episodes = {}\n", self.episodes));
        s.push_str(&format!("entropy_coef = {}\n", self.entropy_coef));
        s.push_str(&format!("value_coef = {}\n", self.value_coef));
        s.push_str(&format!("score_window = {}\n", self.score_window));
        s.push_str(&format!("gamma = {}\n", self.gamma));
        s.push_str(&format!("lookup_steps = {}\n", self.lookup_steps));
        match self.grad_clip {
            Some(c) => s.push_str(&format!("grad_clip = {}\n", c)),
            None => s.push_str("grad_clip = none\n"),
        }
        s.push_str(&format!("checkpoint_every = {}\n", self.checkpoint_every));
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| CliError::Runtime(format!("writing {}: {}", path.display(), e)))
    }

    /// Apply `section.key = value` overrides from a config file. The task
    /// must already be fixed; a differing `task` line is rejected so defaults
    /// and file contents cannot silently disagree.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {}", path.display(), e)))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected 'key = value', got '{}'",
                    origin,
                    lineno + 1,
                    line
                )));
            };
            let key = format!("{}.{}", section, key.trim());
            let value = value.trim();
            self.apply_kv(&key, value).map_err(|e| match e {
                CliError::Usage(m) => {
                    CliError::Usage(format!("{}:{}: {}", origin, lineno + 1, m))
                }
                other => other,
            })?;
        }
        Ok(())
    }

    fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid value '{}' for {}", value, key)))
        }
        match key {
            "run.task" => {
                let task: Task = value.parse()?;
                if task != self.task {
                    return Err(CliError::Usage(format!(
                        "config file task '{}' conflicts with requested task '{}'",
                        task, self.task
                    )));
                }
            }
            "run.seed" => self.seed = num(key, value)?,
            "run.out" => self.out = PathBuf::from(value),
            "model.qubits" => self.qubits = num(key, value)?,
            "model.layers" => self.layers = num(key, value)?,
            "model.grad_mode" => self.grad_mode = grad_mode_from_str(value)?,
            "train.window" => self.window = num(key, value)?,
            "train.epochs" => self.epochs = num(key, value)?,
            "train.lr" => self.lr = num(key, value)?,
            "train.batch" => self.batch = num(key, value)?,
            "train.normalize" => self.normalize = num(key, value)?,
            "rl.workers" => self.workers = num(key, value)?,
            "rl.episodes" => self.episodes = num(key, value)?,
            "rl.entropy_coef" => self.entropy_coef = num(key, value)?,
            "rl.value_coef" => self.value_coef = num(key, value)?,
            "rl.score_window" => self.score_window = num(key, value)?,
            "rl.gamma" => self.gamma = num(key, value)?,
            "rl.lookup_steps" => self.lookup_steps = num(key, value)?,
            "rl.grad_clip" => {
                self.grad_clip = if value == "none" { None } else { Some(num(key, value)?) }
            }
            "rl.checkpoint_every" => self.checkpoint_every = num(key, value)?,
            other => {
                return Err(CliError::Usage(format!("unknown config key '{}'", other)));
            }
        }
        Ok(())
    }
}

/// Fresh run directory `<out>/<label>_s<seed>_<timestamp>`, suffixed on
/// collision.
pub fn create_run_dir(out: &Path, label: &str, seed: u64) -> Result<PathBuf, CliError> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{}_s{}_{}", label, seed, stamp);
    let mut dir = out.join(&base);
    let mut suffix = 1;
    while dir.exists() {
        suffix += 1;
        dir = out.join(format!("{}-{}", base, suffix));
    }
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {}", dir.display(), e)))?;
    Ok(dir)
}
