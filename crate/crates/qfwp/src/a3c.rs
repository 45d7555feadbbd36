//! Asynchronous advantage actor-critic training on the gridworld.
//!
//! `num_workers` threads each own a private environment, model replica, and
//! RNG stream. Every `lookup_steps` environment steps (or at episode end) a
//! worker computes n-step returns, the actor-critic loss, and gradients for
//! every classical parameter, then applies them to the one shared parameter
//! store through a single shared Adam state. Snapshots between applies may be
//! stale; apply operations themselves are serialized under a mutex, trading a
//! little throughput for reproducibility. With one worker the whole procedure
//! is deterministic.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::minigrid::GridEnv;
use crate::model::{scatter_layer, QfwpModel, StepCache, TaskHead};
use crate::nn::AdamState;

#[derive(Clone, Debug)]
pub struct A3cConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Trajectory segment length between gradient applications.
    pub lookup_steps: usize,
    pub gamma: f64,
    pub num_workers: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_episodes: usize,
    pub score_window: usize,
    pub grad_clip: Option<f64>,
    pub grid_n: usize,
    pub seed: u64,
}

impl Default for A3cConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.92,
            beta2: 0.999,
            lookup_steps: 5,
            gamma: 0.9,
            num_workers: 8,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_episodes: 30_000,
            score_window: 500,
            grad_clip: None,
            grid_n: 5,
            seed: 0,
        }
    }
}

impl A3cConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookup_steps == 0 {
            return Err(Error::Config("lookup_steps must be at least 1".into()));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} must lie in (0, 1)", self.gamma)));
        }
        if self.num_workers == 0 {
            return Err(Error::Config("at least one worker is required".into()));
        }
        if self.score_window == 0 {
            return Err(Error::Config("score_window must be at least 1".into()));
        }
        Ok(())
    }
}

/// One environment transition as seen by the learner.
#[derive(Clone, Debug)]
pub struct TrajectoryStep {
    pub observation: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub value_estimate: f64,
    pub reward: f64,
    pub done: bool,
}

/// Up to `lookup_steps` transitions plus the value bootstrapping the return
/// beyond the segment (zero when the segment ended the episode).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub bootstrap_value: f64,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|l| l.exp()).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_z).collect()
}

/// Categorical sample from softmax(logits); returns the action and its log
/// probability. Deterministic given the RNG state.
pub fn sample_action(logits: &[f64], rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    if logits.is_empty() || logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("action sampling needs finite logits".into()));
    }
    let log_probs = log_softmax(logits);
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut action = logits.len() - 1;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if draw < acc {
            action = i;
            break;
        }
    }
    Ok((action, log_probs[action]))
}

/// Discounted n-step returns `R_t = r_t + gamma R_{t+1}`, seeded past the
/// last step with the trajectory's bootstrap value.
pub fn compute_returns(traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    let last = traj
        .steps
        .last()
        .ok_or_else(|| Error::Argument("returns of an empty trajectory".into()))?;
    if last.done && traj.bootstrap_value != 0.0 {
        return Err(Error::State("terminal trajectory carries a nonzero bootstrap value".into()));
    }
    let mut acc = traj.bootstrap_value;
    let mut returns = vec![0.0; traj.steps.len()];
    for (slot, step) in returns.iter_mut().zip(&traj.steps).rev() {
        acc = step.reward + gamma * acc;
        *slot = acc;
    }
    Ok(returns)
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

fn check_aligned(traj: &Trajectory, returns: &[f64], logits: &[Vec<f64>], values: &[f64]) -> Result<()> {
    let t = traj.steps.len();
    if returns.len() != t || logits.len() != t || values.len() != t {
        return Err(Error::Argument(format!(
            "loss inputs misaligned: {} steps, {} returns, {} logit rows, {} values",
            t,
            returns.len(),
            logits.len(),
            values.len()
        )));
    }
    Ok(())
}

/// Actor-critic objective, averaged over the segment's steps:
/// `policy + value_coef * value - entropy_coef * entropy` with
/// `policy = -sum log pi(a_t) A_t`, `value = sum (R_t - V_t)^2`, and the
/// advantage `A_t = R_t - V_t` detached for the policy term.
pub fn a3c_loss(
    traj: &Trajectory,
    returns: &[f64],
    logits_per_step: &[Vec<f64>],
    values_per_step: &[f64],
    value_coef: f64,
    entropy_coef: f64,
) -> Result<LossParts> {
    check_aligned(traj, returns, logits_per_step, values_per_step)?;
    let mut policy = 0.0;
    let mut value = 0.0;
    let mut entropy = 0.0;
    for (t, step) in traj.steps.iter().enumerate() {
        let log_probs = log_softmax(&logits_per_step[t]);
        let advantage = returns[t] - values_per_step[t];
        policy -= log_probs[step.action] * advantage;
        value += advantage * advantage;
        entropy -= log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>();
    }
    let k = traj.steps.len() as f64;
    policy /= k;
    value /= k;
    entropy /= k;
    Ok(LossParts { total: policy + value_coef * value - entropy_coef * entropy, policy, value, entropy })
}

/// Exact gradients of [`a3c_loss`] with respect to each step's logits and
/// value estimate.
pub fn a3c_loss_grads(
    traj: &Trajectory,
    returns: &[f64],
    logits_per_step: &[Vec<f64>],
    values_per_step: &[f64],
    value_coef: f64,
    entropy_coef: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_aligned(traj, returns, logits_per_step, values_per_step)?;
    let k = traj.steps.len() as f64;
    let mut d_logits = Vec::with_capacity(traj.steps.len());
    let mut d_values = Vec::with_capacity(traj.steps.len());
    for (t, step) in traj.steps.iter().enumerate() {
        let log_probs = log_softmax(&logits_per_step[t]);
        let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
        let advantage = returns[t] - values_per_step[t];
        let h: f64 = -log_probs.iter().zip(&probs).map(|(lp, p)| p * lp).sum::<f64>();
        let row: Vec<f64> = probs
            .iter()
            .zip(&log_probs)
            .enumerate()
            .map(|(j, (p, lp))| {
                let indicator = if j == step.action { 1.0 } else { 0.0 };
                (advantage * (p - indicator) + entropy_coef * p * (lp + h)) / k
            })
            .collect();
        d_logits.push(row);
        d_values.push(-2.0 * value_coef * advantage / k);
    }
    Ok((d_logits, d_values))
}

/// Everything one actor-critic step leaves behind.
#[derive(Debug)]
pub struct AcStepCache {
    fwp: StepCache,
    actor_tape: crate::nn::GradTape,
    critic_tape: crate::nn::GradTape,
    logits: Vec<f64>,
    value: f64,
}

/// Run the model on one observation and attach the actor and critic heads.
pub fn actor_critic_forward(model: &mut QfwpModel, obs: &[f64]) -> Result<(Vec<f64>, f64, AcStepCache)> {
    let (expectations, fwp) = model.rl_forward(obs)?;
    let TaskHead::Rl { actor, critic, .. } = &model.head else {
        return Err(Error::State("actor-critic forward requires the RL configuration".into()));
    };
    let (logits, actor_tape) = actor.forward(&expectations)?;
    let (value, critic_tape) = critic.forward(&expectations)?;
    Ok((
        logits.clone(),
        value[0],
        AcStepCache { fwp, actor_tape, critic_tape, logits, value: value[0] },
    ))
}

/// Critic value for `obs` under the current policy without committing the
/// angle update; used to bootstrap returns at segment boundaries.
pub fn peek_value(model: &QfwpModel, obs: &[f64]) -> Result<f64> {
    let expectations = model.rl_peek(obs)?;
    let TaskHead::Rl { critic, .. } = &model.head else {
        return Err(Error::State("peek_value requires the RL configuration".into()));
    };
    let (value, _) = critic.forward(&expectations)?;
    Ok(value[0])
}

/// Loss gradients of a full segment with respect to every classical
/// parameter, flat in the model's parameter layout.
pub fn segment_gradients(
    model: &QfwpModel,
    traj: &Trajectory,
    caches: Vec<AcStepCache>,
    returns: &[f64],
    value_coef: f64,
    entropy_coef: f64,
) -> Result<(Vec<f64>, LossParts)> {
    if caches.len() != traj.steps.len() {
        return Err(Error::State(format!(
            "{} cached steps for a {}-step trajectory",
            caches.len(),
            traj.steps.len()
        )));
    }
    let logits_per_step: Vec<Vec<f64>> = caches.iter().map(|c| c.logits.clone()).collect();
    let values_per_step: Vec<f64> = caches.iter().map(|c| c.value).collect();
    let parts = a3c_loss(traj, returns, &logits_per_step, &values_per_step, value_coef, entropy_coef)?;
    let (d_logits, d_values) =
        a3c_loss_grads(traj, returns, &logits_per_step, &values_per_step, value_coef, entropy_coef)?;

    let TaskHead::Rl { actor, critic, .. } = &model.head else {
        return Err(Error::State("segment gradients require the RL configuration".into()));
    };
    let offsets = model.layer_offsets();
    let mut flat = vec![0.0; model.param_len()];
    let mut d_expectations = Vec::with_capacity(caches.len());
    let mut fwp_caches = Vec::with_capacity(caches.len());
    for (cache, (d_logit, d_value)) in caches.into_iter().zip(d_logits.iter().zip(&d_values)) {
        let (d_exp_actor, actor_grads) = actor.backward(cache.actor_tape, d_logit)?;
        let (d_exp_critic, critic_grads) = critic.backward(cache.critic_tape, &[*d_value])?;
        scatter_layer(&mut flat, offsets[4], &actor_grads);
        scatter_layer(&mut flat, offsets[5], &critic_grads);
        d_expectations.push(
            d_exp_actor.iter().zip(&d_exp_critic).map(|(a, c)| a + c).collect::<Vec<f64>>(),
        );
        fwp_caches.push(cache.fwp);
    }
    let fwp_grads = model.rl_backward(fwp_caches, &d_expectations)?;
    for (dst, src) in flat.iter_mut().zip(&fwp_grads) {
        *dst += src;
    }
    Ok((flat, parts))
}

/// One episode as recorded by the shared store.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub score: f64,
    pub rolling_mean: f64,
    pub rolling_std: f64,
    pub worker_id: usize,
    pub wall_clock_s: f64,
}

struct StoreInner {
    params: Vec<f64>,
    adam: AdamState,
    records: Vec<EpisodeRecord>,
    window_sum: f64,
    window_sum_sq: f64,
}

/// Master copy of the classical parameters plus the one shared Adam state
/// and the episode score log. Reads and writes are individually atomic.
pub struct GlobalStore {
    inner: Mutex<StoreInner>,
    stop: AtomicBool,
    max_episodes: usize,
    score_window: usize,
    grad_clip: Option<f64>,
    started: Instant,
}

impl GlobalStore {
    pub fn new(model: &QfwpModel, cfg: &A3cConfig) -> Self {
        let params = model.flatten_params();
        let adam = AdamState::new(params.len(), cfg.lr, cfg.beta1, cfg.beta2);
        Self {
            inner: Mutex::new(StoreInner {
                params,
                adam,
                records: Vec::new(),
                window_sum: 0.0,
                window_sum_sq: 0.0,
            }),
            stop: AtomicBool::new(false),
            max_episodes: cfg.max_episodes,
            score_window: cfg.score_window,
            grad_clip: cfg.grad_clip,
            started: Instant::now(),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, StoreInner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.lock().params.clone()
    }

    /// One shared-Adam step under the store lock.
    pub fn apply_gradients(&self, grads: &[f64]) -> Result<u64> {
        let mut clipped;
        let grads = match self.grad_clip {
            Some(limit) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > limit {
                    clipped = grads.to_vec();
                    let scale = limit / norm;
                    for g in &mut clipped {
                        *g *= scale;
                    }
                    &clipped[..]
                } else {
                    grads
                }
            }
            None => grads,
        };
        let mut inner = self.lock();
        let StoreInner { params, adam, .. } = &mut *inner;
        adam.apply(params, grads)?;
        Ok(adam.step_count)
    }

    pub fn step_count(&self) -> u64 {
        self.lock().adam.step_count
    }

    pub fn episode_count(&self) -> usize {
        self.lock().records.len()
    }

    /// Append an episode score, updating the rolling statistics; flips the
    /// stop flag once the episode budget is reached.
    pub fn record_episode(&self, score: f64, worker_id: usize) -> EpisodeRecord {
        let record = {
            let mut inner = self.lock();
            let count = inner.records.len();
            if count >= self.score_window {
                let leaving = inner.records[count - self.score_window].score;
                inner.window_sum -= leaving;
                inner.window_sum_sq -= leaving * leaving;
            }
            inner.window_sum += score;
            inner.window_sum_sq += score * score;
            let window_len = (count + 1).min(self.score_window) as f64;
            let mean = inner.window_sum / window_len;
            let variance = (inner.window_sum_sq / window_len - mean * mean).max(0.0);
            let record = EpisodeRecord {
                episode: count + 1,
                score,
                rolling_mean: mean,
                rolling_std: variance.sqrt(),
                worker_id,
                wall_clock_s: self.started.elapsed().as_secs_f64(),
            };
            inner.records.push(record.clone());
            if inner.records.len() >= self.max_episodes {
                self.stop.store(true, Ordering::SeqCst);
            }
            record
        };
        record
    }

    /// Rolling mean and population standard deviation over the last
    /// `score_window` episodes; `None` before the first episode.
    pub fn score_report(&self) -> Option<(f64, f64)> {
        let inner = self.lock();
        let count = inner.records.len();
        if count == 0 {
            return None;
        }
        let window_len = count.min(self.score_window) as f64;
        let mean = inner.window_sum / window_len;
        let variance = (inner.window_sum_sq / window_len - mean * mean).max(0.0);
        Some((mean, variance.sqrt()))
    }

    pub fn records(&self) -> Vec<EpisodeRecord> {
        self.lock().records.clone()
    }

    pub fn should_stop(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Owns the shared store and the worker configuration.
pub struct A3cTrainer {
    store: GlobalStore,
    template: QfwpModel,
    cfg: A3cConfig,
}

impl A3cTrainer {
    pub fn new(model: QfwpModel, cfg: A3cConfig) -> Result<Self> {
        cfg.validate()?;
        if !model.is_rl() {
            return Err(Error::Config("A3C training requires the RL configuration".into()));
        }
        let store = GlobalStore::new(&model, &cfg);
        Ok(Self { store, template: model, cfg })
    }

    pub fn store(&self) -> &GlobalStore {
        &self.store
    }

    /// The template model carrying the store's current parameters.
    pub fn snapshot_model(&self) -> Result<QfwpModel> {
        let mut model = self.template.clone();
        model.set_params(&self.store.snapshot())?;
        model.reset_fast();
        Ok(model)
    }

    pub fn run(&self) -> Result<Vec<EpisodeRecord>> {
        self.run_with(|_| {})
    }

    /// Train until the episode budget is exhausted or a stop is requested.
    /// `on_episode` fires after each recorded episode, on the worker thread
    /// that finished it.
    pub fn run_with<F>(&self, on_episode: F) -> Result<Vec<EpisodeRecord>>
    where
        F: Fn(&EpisodeRecord) + Send + Sync,
    {
        std::thread::scope(|scope| -> Result<()> {
            let mut handles = Vec::with_capacity(self.cfg.num_workers);
            for worker_id in 0..self.cfg.num_workers {
                let on_episode = &on_episode;
                let store = &self.store;
                let template = &self.template;
                let cfg = &self.cfg;
                handles.push(scope.spawn(move || {
                    worker_loop(worker_id, store, template, cfg, on_episode)
                }));
            }
            let mut first_error = None;
            for handle in handles {
                match handle.join() {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => {
                        self.store.request_stop();
                        first_error.get_or_insert(e);
                    }
                    Err(_) => {
                        self.store.request_stop();
                        first_error.get_or_insert(Error::State("worker thread panicked".into()));
                    }
                }
            }
            match first_error {
                Some(e) => Err(e),
                None => Ok(()),
            }
        })?;
        Ok(self.store.records())
    }
}

/// One worker: snapshot the shared parameters, roll a segment of up to
/// `lookup_steps` environment steps, push gradients, repeat. The fast angles
/// persist within an episode and reset at each episode boundary.
pub fn worker_loop<F>(
    worker_id: usize,
    store: &GlobalStore,
    template: &QfwpModel,
    cfg: &A3cConfig,
    on_episode: &F,
) -> Result<()>
where
    F: Fn(&EpisodeRecord),
{
    let mut model = template.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(worker_id as u64 + 1);
    let (mut env, mut obs) = GridEnv::reset(cfg.grid_n, cfg.seed)?;
    model.reset_fast();
    let mut episode_score = 0.0;

    while !store.should_stop() {
        let params = store.snapshot();
        model.set_params(&params)?;

        let mut steps = Vec::with_capacity(cfg.lookup_steps);
        let mut caches = Vec::with_capacity(cfg.lookup_steps);
        let mut terminal = false;
        for _ in 0..cfg.lookup_steps {
            let (logits, value, cache) = actor_critic_forward(&mut model, &obs)?;
            let (action, log_prob) = sample_action(&logits, &mut rng)?;
            let (next_obs, reward, done) = env.step(action)?;
            episode_score += reward;
            steps.push(TrajectoryStep {
                observation: std::mem::replace(&mut obs, next_obs),
                action,
                log_prob,
                value_estimate: value,
                reward,
                done,
            });
            caches.push(cache);
            if done {
                terminal = true;
                break;
            }
        }
        let bootstrap_value = if terminal { 0.0 } else { peek_value(&model, &obs)? };
        let traj = Trajectory { steps, bootstrap_value };
        let returns = compute_returns(&traj, cfg.gamma)?;
        let (grads, _) =
            segment_gradients(&model, &traj, caches, &returns, cfg.value_coef, cfg.entropy_coef)?;
        store.apply_gradients(&grads)?;

        if terminal {
            let record = store.record_episode(episode_score, worker_id);
            on_episode(&record);
            episode_score = 0.0;
            let (fresh_env, fresh_obs) = GridEnv::reset(cfg.grid_n, cfg.seed)?;
            env = fresh_env;
            obs = fresh_obs;
            model.reset_fast();
        }
    }
    Ok(())
}

/// Deterministic argmax-policy evaluation; returns one score per episode.
pub fn greedy_eval(model: &mut QfwpModel, grid_n: usize, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let (mut env, mut obs) = GridEnv::reset(grid_n, seed.wrapping_add(episode as u64))?;
        model.reset_fast();
        let mut total = 0.0;
        loop {
            let (logits, _, _) = actor_critic_forward(model, &obs)?;
            let action = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("nonempty logits");
            let (next_obs, reward, done) = env.step(action)?;
            total += reward;
            obs = next_obs;
            if done {
                break;
            }
        }
        scores.push(total);
    }
    Ok(scores)
}

/// CSV log: `episode,score,rolling_mean,rolling_std,worker_id,wall_clock_s`.
pub fn write_training_log(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "episode,score,rolling_mean,rolling_std,worker_id,wall_clock_s")?;
    for r in records {
        writeln!(
            file,
            "{},{},{},{},{},{:.3}",
            r.episode, r.score, r.rolling_mean, r.rolling_std, r.worker_id, r.wall_clock_s
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GradMode;
    use approx::assert_abs_diff_eq;

    fn traj_from(rewards: &[f64], done: bool, bootstrap: f64) -> Trajectory {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(i, &reward)| TrajectoryStep {
                observation: vec![],
                action: i % 6,
                log_prob: -1.0,
                value_estimate: 0.0,
                reward,
                done: done && i == rewards.len() - 1,
            })
            .collect();
        Trajectory { steps, bootstrap_value: bootstrap }
    }

    #[test]
    fn sample_action_saturated_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut logits = vec![0.0; 6];
        logits[2] = 1000.0;
        for _ in 0..50 {
            let (action, log_prob) = sample_action(&logits, &mut rng).unwrap();
            assert_eq!(action, 2);
            assert_abs_diff_eq!(log_prob, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sample_action_uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let logits = vec![0.0; 6];
        let mut counts = [0usize; 6];
        let draws = 60_000;
        for _ in 0..draws {
            let (action, log_prob) = sample_action(&logits, &mut rng).unwrap();
            counts[action] += 1;
            assert!(log_prob <= 0.0);
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "frequency off: {}", freq);
        }
    }

    #[test]
    fn sample_action_rejects_non_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_action(&[0.0, f64::NAN], &mut rng).is_err());
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[0.3, -2.0, 5.0, 0.0, 1.0, -0.4]);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn returns_examples() {
        let traj = traj_from(&[0.0, 0.0, 1.0], true, 0.0);
        let r = compute_returns(&traj, 0.9).unwrap();
        assert_abs_diff_eq!(r[0], 0.81, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(r[2], 1.0, epsilon = 1e-15);

        let traj = traj_from(&[0.0, 0.0], false, 1.0);
        let r = compute_returns(&traj, 0.9).unwrap();
        assert_abs_diff_eq!(r[0], 0.81, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.9, epsilon = 1e-15);

        let traj = traj_from(&[0.3, 0.7], false, 5.0);
        let r = compute_returns(&traj, 0.0).unwrap();
        assert_eq!(r, vec![0.3, 0.7]);
    }

    #[test]
    fn returns_reject_empty_and_bad_bootstrap() {
        let empty = Trajectory { steps: vec![], bootstrap_value: 0.0 };
        assert!(compute_returns(&empty, 0.9).is_err());
        let bad = traj_from(&[1.0], true, 0.5);
        assert!(compute_returns(&bad, 0.9).is_err());
    }

    #[test]
    fn loss_zero_advantage_has_zero_policy_term() {
        let traj = traj_from(&[0.0, 0.0], false, 0.0);
        let returns = vec![0.4, 0.7];
        let values = vec![0.4, 0.7]; // perfect critic
        let logits = vec![vec![0.2, -0.1, 0.0, 0.3, 0.0, 0.0]; 2];
        let parts = a3c_loss(&traj, &returns, &logits, &values, 0.5, 0.01).unwrap();
        assert_abs_diff_eq!(parts.policy, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(parts.value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn loss_rejects_misaligned_lengths() {
        let traj = traj_from(&[0.0, 0.0], false, 0.0);
        let err =
            a3c_loss(&traj, &[0.1], &[vec![0.0; 6], vec![0.0; 6]], &[0.0, 0.0], 0.5, 0.01)
                .unwrap_err();
        assert!(matches!(err, Error::Argument(_)), "unexpected error: {}", err);
    }

    #[test]
    fn loss_uniform_entropy_is_ln_six() {
        let traj = traj_from(&[0.0], false, 0.0);
        let parts =
            a3c_loss(&traj, &[0.3], &[vec![0.0; 6]], &[0.0], 0.5, 0.01).unwrap();
        assert_abs_diff_eq!(parts.entropy, 6.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn loss_grads_match_finite_differences() {
        let traj = traj_from(&[0.2, 0.0, 0.9], true, 0.0);
        let returns = compute_returns(&traj, 0.9).unwrap();
        let logits = vec![
            vec![0.3, -0.2, 0.1, 0.0, 0.7, -0.4],
            vec![-0.1, 0.2, 0.05, 0.6, -0.3, 0.0],
            vec![0.0, 0.0, 0.4, -0.6, 0.2, 0.1],
        ];
        let values = vec![0.25, -0.1, 0.4];
        let (d_logits, d_values) =
            a3c_loss_grads(&traj, &returns, &logits, &values, 0.5, 0.01).unwrap();

        let eps = 1e-6;
        let loss = |lg: &Vec<Vec<f64>>| a3c_loss(&traj, &returns, lg, &values, 0.5, 0.01).unwrap().total;
        for t in 0..3 {
            for j in 0..6 {
                let mut lp = logits.clone();
                let mut lm = logits.clone();
                lp[t][j] += eps;
                lm[t][j] -= eps;
                let fd = (loss(&lp) - loss(&lm)) / (2.0 * eps);
                assert_abs_diff_eq!(d_logits[t][j], fd, epsilon = 1e-6);
            }
            // the advantage is detached in the policy term, so the value
            // gradient is the closed form of the value loss alone
            let expected = -2.0 * 0.5 * (returns[t] - values[t]) / 3.0;
            assert_abs_diff_eq!(d_values[t], expected, epsilon = 1e-12);
        }
    }

    fn tiny_cfg() -> A3cConfig {
        A3cConfig {
            num_workers: 1,
            max_episodes: 2,
            score_window: 10,
            seed: 7,
            ..A3cConfig::default()
        }
    }

    #[test]
    fn store_zero_grads_keep_params() {
        let model = QfwpModel::rl(2, 1, GradMode::AllSteps, 40).unwrap();
        let store = GlobalStore::new(&model, &tiny_cfg());
        let before = store.snapshot();
        let step = store.apply_gradients(&vec![0.0; before.len()]).unwrap();
        assert_eq!(step, 1);
        assert_eq!(store.snapshot(), before);
    }

    #[test]
    fn store_counts_concurrent_applies() {
        let model = QfwpModel::rl(2, 1, GradMode::AllSteps, 41).unwrap();
        let store = GlobalStore::new(&model, &tiny_cfg());
        let grads = vec![0.01; model.param_len()];
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    for _ in 0..25 {
                        store.apply_gradients(&grads).unwrap();
                    }
                });
            }
        });
        assert_eq!(store.step_count(), 200);
    }

    #[test]
    fn store_sequential_applies_compose() {
        let model = QfwpModel::rl(2, 1, GradMode::AllSteps, 42).unwrap();
        let g1: Vec<f64> = (0..model.param_len()).map(|i| (i % 5) as f64 * 1e-3).collect();
        let g2: Vec<f64> = (0..model.param_len()).map(|i| ((i + 2) % 7) as f64 * -1e-3).collect();

        let store = GlobalStore::new(&model, &tiny_cfg());
        store.apply_gradients(&g1).unwrap();
        store.apply_gradients(&g2).unwrap();

        let mut adam = AdamState::new(model.param_len(), 1e-4, 0.92, 0.999);
        let mut params = model.flatten_params();
        adam.apply(&mut params, &g1).unwrap();
        adam.apply(&mut params, &g2).unwrap();
        assert_eq!(store.snapshot(), params);
    }

    #[test]
    fn rolling_scores_match_brute_force() {
        let model = QfwpModel::rl(2, 1, GradMode::AllSteps, 43).unwrap();
        let cfg = A3cConfig { score_window: 3, max_episodes: 100, ..tiny_cfg() };
        let store = GlobalStore::new(&model, &cfg);
        let scores = [1.0, 1.0, 1.0, 0.0, 1.0, 0.25, 0.5];
        for (i, &s) in scores.iter().enumerate() {
            store.record_episode(s, i % 2);
        }
        let records = store.records();
        for (i, record) in records.iter().enumerate() {
            let lo = (i + 1).saturating_sub(3);
            let window = &scores[lo..=i];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            let var = window.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                / window.len() as f64;
            assert_abs_diff_eq!(record.rolling_mean, mean, epsilon = 1e-12);
            assert_abs_diff_eq!(record.rolling_std, var.sqrt(), epsilon = 1e-12);
        }
        let (mean, std) = store.score_report().unwrap();
        assert_abs_diff_eq!(mean, (1.0 + 0.25 + 0.5) / 3.0, epsilon = 1e-12);
        assert!(std > 0.0);
    }

    #[test]
    fn score_report_simple_cases() {
        let model = QfwpModel::rl(2, 1, GradMode::AllSteps, 44).unwrap();
        let cfg = A3cConfig { score_window: 5, max_episodes: 100, ..tiny_cfg() };
        let store = GlobalStore::new(&model, &cfg);
        assert!(store.score_report().is_none());
        for _ in 0..3 {
            store.record_episode(1.0, 0);
        }
        let (mean, std) = store.score_report().unwrap();
        assert_eq!((mean, std), (1.0, 0.0));

        let store = GlobalStore::new(&model, &A3cConfig { score_window: 2, ..cfg });
        store.record_episode(0.0, 0);
        store.record_episode(1.0, 0);
        let (mean, _) = store.score_report().unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_heads_give_uniform_policy_and_zero_value() {
        let mut model = QfwpModel::rl(4, 2, GradMode::AllSteps, 50).unwrap();
        // zero the actor and critic (the last two layers in the flat layout)
        let offsets = model.layer_offsets();
        let mut flat = model.flatten_params();
        for v in &mut flat[offsets[4]..] {
            *v = 0.0;
        }
        model.set_params(&flat).unwrap();
        let obs = vec![0.4; crate::minigrid::OBS_LEN];
        let (logits, value, _) = actor_critic_forward(&mut model, &obs).unwrap();
        assert_eq!(logits, vec![0.0; 6]);
        assert_eq!(value, 0.0);
        let probs = softmax(&logits);
        for p in probs {
            assert_abs_diff_eq!(p, 1.0 / 6.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn actor_critic_forward_composes_model_and_heads() {
        let mut model = QfwpModel::rl(4, 2, GradMode::AllSteps, 51).unwrap();
        let obs: Vec<f64> =
            (0..crate::minigrid::OBS_LEN).map(|i| (i % 5) as f64 / 5.0).collect();

        let mut replica = model.clone();
        let (expectations, _) = replica.rl_forward(&obs).unwrap();
        let TaskHead::Rl { actor, critic, .. } = &replica.head else { unreachable!() };
        let (logits_ref, _) = actor.forward(&expectations).unwrap();
        let (value_ref, _) = critic.forward(&expectations).unwrap();

        let (logits, value, cache) = actor_critic_forward(&mut model, &obs).unwrap();
        assert_eq!(logits, logits_ref);
        assert_eq!(value, value_ref[0]);
        assert_eq!(cache.logits, logits);
    }

    #[test]
    fn single_worker_smoke_run() {
        let model = QfwpModel::rl(2, 1, GradMode::AllSteps, 45).unwrap();
        let cfg = A3cConfig {
            num_workers: 1,
            max_episodes: 3,
            score_window: 10,
            grid_n: 5,
            seed: 11,
            ..A3cConfig::default()
        };
        let trainer = A3cTrainer::new(model, cfg).unwrap();
        let records = trainer.run().unwrap();
        assert_eq!(records.len(), 3);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.episode, i + 1);
            assert!((0.0..=1.0).contains(&r.score));
        }
        assert!(trainer.store().step_count() > 0);
    }

    #[test]
    fn zero_lr_training_leaves_params_alone() {
        let model = QfwpModel::rl(2, 1, GradMode::AllSteps, 46).unwrap();
        let initial = model.flatten_params();
        let cfg = A3cConfig {
            lr: 0.0,
            num_workers: 1,
            max_episodes: 2,
            score_window: 10,
            seed: 3,
            ..A3cConfig::default()
        };
        let trainer = A3cTrainer::new(model, cfg).unwrap();
        trainer.run().unwrap();
        assert_eq!(trainer.store().snapshot(), initial);
    }

    #[test]
    fn greedy_eval_scores_are_bounded() {
        let mut model = QfwpModel::rl(4, 2, GradMode::AllSteps, 47).unwrap();
        let scores = greedy_eval(&mut model, 5, 3, 0).unwrap();
        assert_eq!(scores.len(), 3);
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
