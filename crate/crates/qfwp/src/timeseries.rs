//! Benchmark series, sliding-window datasets, and the windowed training loop.
//!
//! Four series are supported: the angular velocity of a damped pendulum
//! (4th-order Runge-Kutta), the Bessel function J2 (power series), and the
//! NARMA5 / NARMA10 recurrences. Windows of `N` consecutive values predict
//! the following value; the first 67% of windows train, the rest test.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::QfwpModel;
use crate::nn::AdamState;

/// Damped pendulum `theta'' + (b/m) theta' + (g/l) sin(theta) = 0`.
#[derive(Clone, Debug)]
pub struct PendulumConfig {
    pub gravity: f64,
    pub damping: f64,
    pub length: f64,
    pub mass: f64,
    pub theta_init: f64,
    pub omega_init: f64,
    pub dt: f64,
    pub duration: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            damping: 0.15,
            length: 1.0,
            mass: 1.0,
            theta_init: 0.0,
            omega_init: 3.0,
            dt: 0.1,
            duration: 20.0,
        }
    }
}

/// Angular velocity samples at `t = 0, dt, 2 dt, ..., duration`, integrated
/// with classic RK4.
pub fn gen_damped_shm(cfg: &PendulumConfig) -> Result<Vec<f64>> {
    if cfg.dt <= 0.0 || cfg.duration <= 0.0 {
        return Err(Error::Config("pendulum dt and duration must be positive".into()));
    }
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let deriv = |theta: f64, omega: f64| -> (f64, f64) {
        (
            omega,
            -(cfg.damping / cfg.mass) * omega - (cfg.gravity / cfg.length) * theta.sin(),
        )
    };
    let mut theta = cfg.theta_init;
    let mut omega = cfg.omega_init;
    let mut series = Vec::with_capacity(steps + 1);
    series.push(omega);
    let h = cfg.dt;
    for _ in 0..steps {
        let (k1t, k1w) = deriv(theta, omega);
        let (k2t, k2w) = deriv(theta + 0.5 * h * k1t, omega + 0.5 * h * k1w);
        let (k3t, k3w) = deriv(theta + 0.5 * h * k2t, omega + 0.5 * h * k2w);
        let (k4t, k4w) = deriv(theta + h * k3t, omega + h * k3w);
        theta += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
        omega += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        series.push(omega);
    }
    Ok(series)
}

/// Bessel function of the first kind with integer order, via the power
/// series with terms taken until they fall below 1e-16.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    // J_a(x) = sum_m (-1)^m / (m! (m+a)!) (x/2)^(2m+a)
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    let mut sum = term;
    let mut m = 1.0;
    while term.abs() >= 1e-16 && m < 200.0 {
        term *= -(half * half) / (m * (m + order as f64));
        sum += term;
        m += 1.0;
    }
    sum
}

/// `J2` sampled on `num_points` uniform grid points over `[0, x_max]`.
pub fn gen_bessel_j2(x_max: f64, num_points: usize) -> Result<Vec<f64>> {
    if x_max <= 0.0 || num_points < 2 {
        return Err(Error::Config("bessel grid needs x_max > 0 and at least 2 points".into()));
    }
    let step = x_max / (num_points - 1) as f64;
    Ok((0..num_points).map(|i| bessel_j(2, i as f64 * step)).collect())
}

/// NARMA recurrence parameters. `order` picks NARMA5 or NARMA10.
#[derive(Clone, Debug)]
pub struct NarmaConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub order: usize,
    pub input_alpha: f64,
    pub input_beta: f64,
    pub input_gamma: f64,
    pub input_period: f64,
    pub length: usize,
}

impl NarmaConfig {
    pub fn new(order: usize) -> Result<Self> {
        if order != 5 && order != 10 {
            return Err(Error::Config(format!("NARMA order {} not in {{5, 10}}", order)));
        }
        Ok(Self {
            alpha: 0.3,
            beta: 0.05,
            gamma: 1.5,
            delta: 0.1,
            order,
            input_alpha: 2.11,
            input_beta: 3.73,
            input_gamma: 4.11,
            input_period: 100.0,
            length: 300,
        })
    }
}

/// Deterministic input and output sequences of the NARMA benchmark:
/// `u_t = 0.1 (sin(2 pi a t / T) sin(2 pi b t / T) sin(2 pi c t / T) + 1)` and
/// `y_{t+1} = alpha y_t + beta y_t sum_{j<order} y_{t-j} + gamma u_{t-order+1} u_t + delta`,
/// with zero warm-up for the first `order` outputs.
pub fn gen_narma(cfg: &NarmaConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if cfg.length <= cfg.order {
        return Err(Error::Config(format!(
            "NARMA length {} must exceed its order {}",
            cfg.length, cfg.order
        )));
    }
    let two_pi = std::f64::consts::TAU;
    let u: Vec<f64> = (0..cfg.length)
        .map(|t| {
            let t = t as f64;
            0.1 * ((two_pi * cfg.input_alpha * t / cfg.input_period).sin()
                * (two_pi * cfg.input_beta * t / cfg.input_period).sin()
                * (two_pi * cfg.input_gamma * t / cfg.input_period).sin()
                + 1.0)
        })
        .collect();
    let mut y = vec![0.0; cfg.length];
    for t in (cfg.order - 1)..(cfg.length - 1) {
        let history: f64 = (0..cfg.order).map(|j| y[t - j]).sum();
        y[t + 1] = cfg.alpha * y[t]
            + cfg.beta * y[t] * history
            + cfg.gamma * u[t + 1 - cfg.order] * u[t]
            + cfg.delta;
    }
    Ok((u, y))
}

/// Sliding windows of `window` inputs plus the next value as target, split
/// 67/33 into train and test by time.
#[derive(Clone, Debug)]
pub struct TimeSeriesDataset {
    pub windows: Vec<(Vec<f64>, f64)>,
    pub split_index: usize,
}

pub fn make_dataset(series: &[f64], window: usize) -> Result<TimeSeriesDataset> {
    if window == 0 {
        return Err(Error::Argument("window size must be positive".into()));
    }
    if series.len() <= window {
        return Err(Error::Argument(format!(
            "series of {} values is too short for windows of {}",
            series.len(),
            window
        )));
    }
    let windows: Vec<(Vec<f64>, f64)> = (0..series.len() - window)
        .map(|i| (series[i..i + window].to_vec(), series[i + window]))
        .collect();
    let split_index = (0.67 * windows.len() as f64).floor() as usize;
    Ok(TimeSeriesDataset { windows, split_index })
}

impl TimeSeriesDataset {
    pub fn train(&self) -> &[(Vec<f64>, f64)] {
        &self.windows[..self.split_index]
    }

    pub fn test(&self) -> &[(Vec<f64>, f64)] {
        &self.windows[self.split_index..]
    }
}

/// Rescale a series to `[0, 1]`; constant series map to all zeros.
pub fn min_max_normalize(series: &[f64]) -> Vec<f64> {
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span == 0.0 {
        return vec![0.0; series.len()];
    }
    series.iter().map(|v| (v - lo) / span).collect()
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 3e-3, batch_size: 16, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

pub type MetricLog = Vec<EpochMetrics>;

/// Minibatch Adam training over the training windows. The logged train MSE
/// is the mean squared error accumulated while the epoch's updates happen;
/// the test MSE is evaluated after the epoch. Deterministic for a fixed
/// seed.
pub fn train_timeseries(
    model: &mut QfwpModel,
    dataset: &TimeSeriesDataset,
    cfg: &TrainConfig,
) -> Result<MetricLog> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if dataset.split_index == 0 {
        return Err(Error::Config("dataset has no training windows".into()));
    }
    let mut adam = AdamState::new(model.param_len(), cfg.lr, 0.9, 0.999);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.split_index).collect();

    // summed in window order so the logged loss does not depend on the
    // shuffle's float accumulation order
    let mut squared_errors = vec![0.0; dataset.split_index];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = vec![0.0; model.param_len()];
            for &wi in batch {
                let (input, target) = &dataset.windows[wi];
                let (pred, caches) = model.ts_forward(input)?;
                let err = pred - target;
                squared_errors[wi] = err * err;
                let g = model.ts_backward(caches, 2.0 * err / batch.len() as f64)?;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    *acc += gi;
                }
            }
            let mut params = model.flatten_params();
            adam.apply(&mut params, &grads)?;
            model.set_params(&params)?;
        }
        let train_mse = squared_errors.iter().sum::<f64>() / dataset.split_index as f64;
        let test_mse = mse_over(model, dataset.test())?;
        if !train_mse.is_finite() || !test_mse.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at epoch {}: train {}, test {}",
                epoch, train_mse, test_mse
            )));
        }
        log.push(EpochMetrics { epoch, train_mse, test_mse });
    }
    Ok(log)
}

fn mse_over(model: &mut QfwpModel, windows: &[(Vec<f64>, f64)]) -> Result<f64> {
    if windows.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (input, target) in windows {
        let (pred, _) = model.ts_forward(input)?;
        sum += (pred - target) * (pred - target);
    }
    Ok(sum / windows.len() as f64)
}

/// Post-training mean squared errors over the train and test splits.
pub fn evaluate(model: &mut QfwpModel, dataset: &TimeSeriesDataset) -> Result<(f64, f64)> {
    Ok((mse_over(model, dataset.train())?, mse_over(model, dataset.test())?))
}

#[derive(Clone, Debug)]
pub struct PredictionRow {
    pub index: usize,
    pub ground_truth: f64,
    pub prediction: f64,
    pub is_test: bool,
}

pub fn predictions(model: &mut QfwpModel, dataset: &TimeSeriesDataset) -> Result<Vec<PredictionRow>> {
    dataset
        .windows
        .iter()
        .enumerate()
        .map(|(index, (input, target))| {
            let (prediction, _) = model.ts_forward(input)?;
            Ok(PredictionRow {
                index,
                ground_truth: *target,
                prediction,
                is_test: index >= dataset.split_index,
            })
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, log: &MetricLog) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "epoch,train_mse,test_mse")?;
    for row in log {
        writeln!(file, "{},{},{}", row.epoch, row.train_mse, row.test_mse)?;
    }
    Ok(())
}

pub fn write_predictions_csv(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(file, "index,ground_truth,prediction,is_test")?;
    for row in rows {
        writeln!(
            file,
            "{},{},{},{}",
            row.index, row.ground_truth, row.prediction, row.is_test as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GradMode;
    use approx::assert_abs_diff_eq;

    #[test]
    fn shm_initial_velocity_and_sample_count() {
        let series = gen_damped_shm(&PendulumConfig::default()).unwrap();
        assert_eq!(series[0], 3.0);
        assert_eq!(series.len(), 201);
    }

    #[test]
    fn shm_energy_never_increases() {
        let cfg = PendulumConfig::default();
        // recompute theta alongside omega to evaluate the energy
        let mut theta = cfg.theta_init;
        let mut omega = cfg.omega_init;
        let energy = |theta: f64, omega: f64| {
            0.5 * cfg.mass * cfg.length * cfg.length * omega * omega
                + cfg.mass * cfg.gravity * cfg.length * (1.0 - theta.cos())
        };
        let deriv = |theta: f64, omega: f64| -> (f64, f64) {
            (omega, -(cfg.damping / cfg.mass) * omega - (cfg.gravity / cfg.length) * theta.sin())
        };
        let mut prev = energy(theta, omega);
        let h = cfg.dt;
        for _ in 0..200 {
            let (k1t, k1w) = deriv(theta, omega);
            let (k2t, k2w) = deriv(theta + 0.5 * h * k1t, omega + 0.5 * h * k1w);
            let (k3t, k3w) = deriv(theta + 0.5 * h * k2t, omega + 0.5 * h * k2w);
            let (k4t, k4w) = deriv(theta + h * k3t, omega + h * k3w);
            theta += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
            omega += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            let e = energy(theta, omega);
            assert!(e <= prev + 1e-9, "energy increased: {} -> {}", prev, e);
            prev = e;
        }
    }

    #[test]
    fn shm_step_halving_convergence() {
        let at = |dt: f64| {
            let cfg = PendulumConfig { dt, duration: 1.0, ..PendulumConfig::default() };
            *gen_damped_shm(&cfg).unwrap().last().unwrap()
        };
        let coarse = at(0.01);
        let fine = at(0.001);
        assert_abs_diff_eq!(coarse, fine, epsilon = 1e-6);
    }

    #[test]
    fn bessel_j2_known_values() {
        let series = gen_bessel_j2(20.0, 201).unwrap();
        assert_eq!(series.len(), 201);
        assert_eq!(series[0], 0.0);
        // frozen reference value for J2(1)
        assert_abs_diff_eq!(bessel_j(2, 1.0), 0.1149034849, epsilon = 1e-9);
    }

    #[test]
    fn bessel_matches_plain_term_sum() {
        // independent oracle: literal 40-term factorial sum
        let oracle = |order: u32, x: f64| -> f64 {
            let mut sum = 0.0;
            for m in 0..40u32 {
                let mut denom = 1.0;
                for k in 1..=m {
                    denom *= k as f64;
                }
                for k in 1..=(m + order) {
                    denom *= k as f64;
                }
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign / denom * (x / 2.0).powi((2 * m + order) as i32);
            }
            sum
        };
        // alternating-series cancellation grows with x, so the achievable
        // agreement between two summation orders loosens accordingly
        for x in [0.5, 1.0, 2.0, 7.3, 15.0] {
            assert_abs_diff_eq!(bessel_j(2, x), oracle(2, x), epsilon = 1e-9);
        }
    }

    #[test]
    fn bessel_recurrence_holds() {
        let x = 2.0;
        let lhs = bessel_j(1, x) + bessel_j(3, x);
        let rhs = 4.0 / x * bessel_j(2, x);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn narma_input_definition() {
        let cfg = NarmaConfig::new(5).unwrap();
        let (u, y) = gen_narma(&cfg).unwrap();
        assert_eq!(u.len(), 300);
        assert_eq!(y.len(), 300);
        assert_abs_diff_eq!(u[0], 0.1, epsilon = 1e-15);
        assert!(u.iter().all(|v| (0.0..=0.2).contains(v)));
    }

    #[test]
    fn narma_matches_independent_recurrence() {
        // second implementation, written directly from the update rule with
        // its own indexing
        for order in [5usize, 10] {
            let cfg = NarmaConfig::new(order).unwrap();
            let (u, y) = gen_narma(&cfg).unwrap();
            let mut y_ref = vec![0.0f64; cfg.length];
            for next in (cfg.order)..cfg.length {
                let t = next - 1;
                let window_sum: f64 = y_ref[(t + 1 - cfg.order)..=t].iter().sum();
                y_ref[next] = cfg.alpha * y_ref[t]
                    + cfg.beta * y_ref[t] * window_sum
                    + cfg.gamma * u[t + 1 - cfg.order] * u[t]
                    + cfg.delta;
            }
            for (a, b) in y.iter().zip(&y_ref) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn narma_is_pure() {
        let cfg = NarmaConfig::new(10).unwrap();
        assert_eq!(gen_narma(&cfg).unwrap(), gen_narma(&cfg).unwrap());
    }

    #[test]
    fn dataset_windowing() {
        let ds = make_dataset(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 4).unwrap();
        assert_eq!(ds.windows.len(), 2);
        assert_eq!(ds.windows[0], (vec![1.0, 2.0, 3.0, 4.0], 5.0));
        assert_eq!(ds.windows[1], (vec![2.0, 3.0, 4.0, 5.0], 6.0));

        let series: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let ds = make_dataset(&series, 4).unwrap();
        assert_eq!(ds.windows.len(), 296);
        assert_eq!(ds.split_index, 198);

        assert!(make_dataset(&[1.0, 2.0], 4).is_err());
    }

    #[test]
    fn dataset_windows_do_not_leak_targets() {
        let cfg = NarmaConfig::new(5).unwrap();
        let (_, y) = gen_narma(&cfg).unwrap();
        let ds = make_dataset(&y, 4).unwrap();
        for (i, (input, target)) in ds.windows.iter().enumerate() {
            assert_eq!(input, &y[i..i + 4]);
            assert_eq!(*target, y[i + 4]);
        }
        // test windows strictly later than all training windows
        assert!(ds.train().len() + ds.test().len() == ds.windows.len());
        assert_eq!(ds.split_index, (0.67f64 * 296.0).floor() as usize);
    }

    #[test]
    fn zero_lr_training_is_static() {
        let mut model = QfwpModel::time_series(4, 1, GradMode::AllSteps, 30).unwrap();
        let series: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let ds = make_dataset(&series, 4).unwrap();
        let cfg = TrainConfig { epochs: 3, lr: 0.0, batch_size: 8, seed: 1 };
        let log = train_timeseries(&mut model, &ds, &cfg).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log[0].train_mse, log[1].train_mse);
        assert_eq!(log[1].train_mse, log[2].train_mse);
        assert_eq!(log[0].test_mse, log[2].test_mse);
    }

    #[test]
    fn constant_series_loss_decreases() {
        let mut model = QfwpModel::time_series(4, 1, GradMode::AllSteps, 31).unwrap();
        let series = vec![0.8; 30];
        let ds = make_dataset(&series, 4).unwrap();
        let cfg = TrainConfig { epochs: 5, lr: 1e-2, batch_size: 8, seed: 2 };
        let log = train_timeseries(&mut model, &ds, &cfg).unwrap();
        for pair in log.windows(2) {
            assert!(
                pair[1].train_mse < pair[0].train_mse,
                "loss did not decrease: {:?}",
                log
            );
        }
    }

    #[test]
    fn metric_log_rows_are_ordered_and_finite() {
        let mut model = QfwpModel::time_series(4, 1, GradMode::AllSteps, 32).unwrap();
        let series: Vec<f64> = (0..30).map(|i| (i as f64 * 0.2).cos()).collect();
        let ds = make_dataset(&series, 4).unwrap();
        let cfg = TrainConfig { epochs: 4, lr: 1e-3, batch_size: 4, seed: 3 };
        let log = train_timeseries(&mut model, &ds, &cfg).unwrap();
        for (i, row) in log.iter().enumerate() {
            assert_eq!(row.epoch, i + 1);
            assert!(row.train_mse.is_finite() && row.test_mse.is_finite());
        }
    }

    #[test]
    fn generators_are_pure() {
        let cfg = PendulumConfig::default();
        assert_eq!(gen_damped_shm(&cfg).unwrap(), gen_damped_shm(&cfg).unwrap());
        assert_eq!(gen_bessel_j2(20.0, 64).unwrap(), gen_bessel_j2(20.0, 64).unwrap());
    }

    #[test]
    fn normalization_maps_to_unit_interval() {
        let series = vec![-2.0, 0.0, 6.0];
        assert_eq!(min_max_normalize(&series), vec![0.0, 0.25, 1.0]);
        assert_eq!(min_max_normalize(&[3.0, 3.0]), vec![0.0, 0.0]);
    }
}
