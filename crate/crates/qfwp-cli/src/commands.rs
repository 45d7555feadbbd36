//! Subcommand implementations: data generation, training, evaluation.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use qfwp::a3c::{greedy_eval, write_training_log, A3cConfig, A3cTrainer};
use qfwp::minigrid::GridEnv;
use qfwp::model::{QfwpModel, TaskHead};
use qfwp::timeseries::{
    evaluate, gen_bessel_j2, gen_damped_shm, gen_narma, make_dataset, min_max_normalize,
    predictions, train_timeseries, write_metrics_csv, write_predictions_csv, NarmaConfig,
    PendulumConfig, TrainConfig,
};

use crate::config::{create_run_dir, RunConfig, Task};
use crate::{CliError, INTERRUPTED};

fn usage(e: qfwp::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: qfwp::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// The raw series of a time-series task, optionally min-max normalized.
pub fn build_series(task: Task, normalize: bool) -> Result<Vec<f64>, CliError> {
    let series = match task {
        Task::Shm => gen_damped_shm(&PendulumConfig::default()).map_err(usage)?,
        Task::Bessel => gen_bessel_j2(20.0, 201).map_err(usage)?,
        Task::Narma5 | Task::Narma10 => {
            let order = if task == Task::Narma5 { 5 } else { 10 };
            gen_narma(&NarmaConfig::new(order).map_err(usage)?).map_err(usage)?.1
        }
        Task::Minigrid5 | Task::Minigrid6 => {
            return Err(CliError::Usage(format!("task {} is not a time-series task", task)))
        }
    };
    Ok(if normalize { min_max_normalize(&series) } else { series })
}

/// `gen-data`: write the raw series as CSV (`t,value`, or `t,u,y` for the
/// NARMA tasks). Deterministic, so repeated invocations are byte-identical.
pub fn cmd_gen_data(task: Task, out: &Path) -> Result<(), CliError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("creating {}: {}", parent.display(), e)))?;
    }
    let mut file = std::fs::File::create(out)
        .map_err(|e| CliError::Runtime(format!("creating {}: {}", out.display(), e)))?;
    let write = |file: &mut std::fs::File, text: String| {
        file.write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("writing {}: {}", out.display(), e)))
    };
    match task {
        Task::Shm => {
            let cfg = PendulumConfig::default();
            let series = gen_damped_shm(&cfg).map_err(runtime)?;
            let mut text = String::from("t,value\n");
            for (i, v) in series.iter().enumerate() {
                text.push_str(&format!("{},{}\n", i as f64 * cfg.dt, v));
            }
            write(&mut file, text)?;
        }
        Task::Bessel => {
            let series = gen_bessel_j2(20.0, 201).map_err(runtime)?;
            let mut text = String::from("t,value\n");
            for (i, v) in series.iter().enumerate() {
                text.push_str(&format!("{},{}\n", i as f64 * (20.0 / 200.0), v));
            }
            write(&mut file, text)?;
        }
        Task::Narma5 | Task::Narma10 => {
            let order = if task == Task::Narma5 { 5 } else { 10 };
            let (u, y) = gen_narma(&NarmaConfig::new(order).map_err(usage)?).map_err(runtime)?;
            let mut text = String::from("t,u,y\n");
            for (i, (ui, yi)) in u.iter().zip(&y).enumerate() {
                text.push_str(&format!("{},{},{}\n", i, ui, yi));
            }
            write(&mut file, text)?;
        }
        Task::Minigrid5 | Task::Minigrid6 => {
            return Err(CliError::Usage(format!("task {} has no series to generate", task)));
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn write_meta(path: &Path, lines: &[(&str, String)]) -> Result<(), CliError> {
    let mut text = String::new();
    for (key, value) in lines {
        text.push_str(&format!("{} = {}\n", key, value));
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("writing {}: {}", path.display(), e)))
}

/// `train-ts`: train on a windowed series, logging per-epoch losses and the
/// reference-epoch rows, then dump metrics, predictions, and a checkpoint.
pub fn cmd_train_ts(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let series = build_series(cfg.task, cfg.normalize)?;
    let dataset = make_dataset(&series, cfg.window).map_err(usage)?;
    let mut model =
        QfwpModel::time_series(cfg.qubits, cfg.layers, cfg.grad_mode, cfg.seed).map_err(usage)?;
    let (classical, quantum) = model.count_parameters();

    let dir = create_run_dir(&cfg.out, cfg.task.name(), cfg.seed)?;
    cfg.write(&dir.join("config.txt"))?;
    write_meta(
        &dir.join("meta.txt"),
        &[
            ("classical_params", classical.to_string()),
            ("quantum_params", quantum.to_string()),
            ("windows", dataset.windows.len().to_string()),
            ("split_index", dataset.split_index.to_string()),
        ],
    )?;
    println!("Run directory: {}", dir.display());
    println!("Model: {} classical / {} quantum parameters", classical, quantum);
    println!(
        "Dataset: {} windows ({} train / {} test)",
        dataset.windows.len(),
        dataset.split_index,
        dataset.windows.len() - dataset.split_index
    );

    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch_size: cfg.batch,
        seed: cfg.seed.wrapping_add(1),
    };
    let log = train_timeseries(&mut model, &dataset, &train_cfg).map_err(runtime)?;
    write_metrics_csv(&dir.join("metrics.csv"), &log).map_err(runtime)?;
    let rows = predictions(&mut model, &dataset).map_err(runtime)?;
    write_predictions_csv(&dir.join("predictions.csv"), &rows).map_err(runtime)?;
    model.checkpoint_save(&dir.join("checkpoint.json"), None).map_err(runtime)?;

    for epoch in [1usize, 15, 30, 100] {
        if let Some(row) = log.get(epoch - 1) {
            println!("Epoch {:<4} {:9.2e} / {:9.2e}", row.epoch, row.train_mse, row.test_mse);
        }
    }
    if let Some(last) = log.last() {
        if ![1, 15, 30, 100].contains(&last.epoch) {
            println!("Epoch {:<4} {:9.2e} / {:9.2e}", last.epoch, last.train_mse, last.test_mse);
        }
    }
    Ok(dir)
}

/// `train-rl`: asynchronous actor-critic on the gridworld with rolling-score
/// lines, a training log CSV, and a final (and optionally periodic)
/// checkpoint. An interrupt stops the workers and still flushes outputs.
pub fn cmd_train_rl(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    if !cfg.task.is_rl() {
        return Err(CliError::Usage(format!("task {} is not a gridworld task", cfg.task)));
    }
    let model = QfwpModel::rl(cfg.qubits, cfg.layers, cfg.grad_mode, cfg.seed).map_err(usage)?;
    let (classical, quantum) = model.count_parameters();
    let a3c_cfg = A3cConfig {
        lr: cfg.lr,
        beta1: 0.92,
        beta2: 0.999,
        lookup_steps: cfg.lookup_steps,
        gamma: cfg.gamma,
        num_workers: cfg.workers,
        entropy_coef: cfg.entropy_coef,
        value_coef: cfg.value_coef,
        max_episodes: cfg.episodes,
        score_window: cfg.score_window,
        grad_clip: cfg.grad_clip,
        grid_n: cfg.task.grid_n(),
        seed: cfg.seed,
    };
    let trainer = A3cTrainer::new(model, a3c_cfg).map_err(usage)?;
    let (probe_env, _) = GridEnv::reset(cfg.task.grid_n(), cfg.seed).map_err(usage)?;

    let dir = create_run_dir(&cfg.out, cfg.task.name(), cfg.seed)?;
    cfg.write(&dir.join("config.txt"))?;
    write_meta(
        &dir.join("meta.txt"),
        &[
            ("classical_params", classical.to_string()),
            ("quantum_params", quantum.to_string()),
            ("max_steps", probe_env.max_steps().to_string()),
        ],
    )?;
    println!("Run directory: {}", dir.display());
    println!("Model: {} classical / {} quantum parameters", classical, quantum);
    println!("Environment: {}x{} grid, max {} steps", cfg.task.grid_n(), cfg.task.grid_n(), probe_env.max_steps());

    let cadence = (cfg.episodes / 20).clamp(1, 500);
    let checkpoint_path = dir.join("checkpoint.json");
    let checkpoint_lock = Mutex::new(());
    let monitor_done = AtomicBool::new(false);

    let run_result = std::thread::scope(|scope| {
        let store = trainer.store();
        scope.spawn(|| {
            while !monitor_done.load(Ordering::SeqCst) {
                if INTERRUPTED.load(Ordering::SeqCst) {
                    store.request_stop();
                    break;
                }
                std::thread::sleep(Duration::from_millis(100));
            }
        });
        let result = trainer.run_with(|record| {
            if record.episode % cadence == 0 {
                println!(
                    "episode {:>7}  score {:.3}  rolling mean {:.3} +- {:.3}",
                    record.episode, record.score, record.rolling_mean, record.rolling_std
                );
            }
            if cfg.checkpoint_every > 0 && record.episode % cfg.checkpoint_every == 0 {
                if let Ok(_guard) = checkpoint_lock.try_lock() {
                    if let Ok(snapshot) = trainer.snapshot_model() {
                        let _ = snapshot.checkpoint_save(&checkpoint_path, None);
                    }
                }
            }
        });
        monitor_done.store(true, Ordering::SeqCst);
        result
    });

    // flush whatever was learned, then surface any worker failure
    let records = trainer.store().records();
    write_training_log(&dir.join("training_log.csv"), &records).map_err(runtime)?;
    let final_model = trainer.snapshot_model().map_err(runtime)?;
    final_model.checkpoint_save(&checkpoint_path, None).map_err(runtime)?;
    run_result.map_err(|e| CliError::Runtime(format!("worker failed: {}", e)))?;

    if let Some((mean, std)) = trainer.store().score_report() {
        println!(
            "finished after {} episodes; rolling mean {:.3} +- {:.3}",
            records.len(),
            mean,
            std
        );
    }
    if INTERRUPTED.load(Ordering::SeqCst) {
        println!("interrupted; log and checkpoint flushed");
    }
    Ok(dir)
}

/// `eval`: load a checkpoint and report metrics without mutating parameters.
/// Time-series tasks rebuild their dataset and report train/test MSE plus a
/// predictions CSV; gridworld tasks run a greedy-policy evaluation.
pub fn cmd_eval(
    checkpoint: &Path,
    cfg: &RunConfig,
    eval_episodes: usize,
) -> Result<PathBuf, CliError> {
    let (mut model, _) = QfwpModel::checkpoint_load(checkpoint).map_err(usage)?;
    let dir = create_run_dir(&cfg.out, &format!("eval-{}", cfg.task.name()), cfg.seed)?;
    cfg.write(&dir.join("config.txt"))?;
    println!("Run directory: {}", dir.display());

    match (&model.head, cfg.task.is_rl()) {
        (TaskHead::TimeSeries { .. }, false) => {}
        (TaskHead::Rl { compressor, .. }, true) => {
            let n = cfg.task.grid_n();
            if model.cfg.num_qubits != compressor.out_dim() {
                return Err(CliError::Usage(format!(
                    "checkpoint compressor emits {} angles but the circuit has {} qubits",
                    compressor.out_dim(),
                    model.cfg.num_qubits
                )));
            }
            let scores = greedy_eval(&mut model, n, eval_episodes, cfg.seed).map_err(runtime)?;
            let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
            let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                / scores.len().max(1) as f64;
            let mut text = String::from("episode,score\n");
            for (i, s) in scores.iter().enumerate() {
                text.push_str(&format!("{},{}\n", i + 1, s));
            }
            std::fs::write(dir.join("score_summary.csv"), text)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "greedy policy over {} episodes: mean score {:.4} +- {:.4}",
                scores.len(),
                mean,
                var.sqrt()
            );
            return Ok(dir);
        }
        (TaskHead::TimeSeries { post }, true) => {
            return Err(CliError::Usage(format!(
                "checkpoint holds the time-series head (post {}->1) but task {} needs the RL head",
                post.in_dim(),
                cfg.task
            )));
        }
        (TaskHead::Rl { compressor, .. }, false) => {
            return Err(CliError::Usage(format!(
                "checkpoint holds the RL head (compressor {}->{}) but task {} needs the time-series head",
                compressor.in_dim(),
                compressor.out_dim(),
                cfg.task
            )));
        }
    }

    let series = build_series(cfg.task, cfg.normalize)?;
    let dataset = make_dataset(&series, cfg.window).map_err(usage)?;
    let (train_mse, test_mse) = evaluate(&mut model, &dataset).map_err(runtime)?;
    let rows = predictions(&mut model, &dataset).map_err(runtime)?;
    write_predictions_csv(&dir.join("predictions.csv"), &rows).map_err(runtime)?;
    write_meta(
        &dir.join("metrics.txt"),
        &[("train_mse", format!("{}", train_mse)), ("test_mse", format!("{}", test_mse))],
    )?;
    println!("train MSE {:9.3e}  test MSE {:9.3e}", train_mse, test_mse);
    Ok(dir)
}
