//! The fast weight programmer model.
//!
//! At every time step the slow programmer maps the current input to a layer
//! vector `L` and a qubit vector `Q`; their outer product is added onto the
//! circuit's angle matrix (`theta_ij += L_i * Q_j`) *before* the circuit runs,
//! so the current observation shapes the current output. Because the angles
//! accumulate additively, the Jacobian of the final angles with respect to
//! each step's rank-1 update is the identity, and gradients reach every step
//! without backpropagation through time.
//!
//! Two configurations exist: time series (scalar input, post-processing head
//! over 4 measured qubits) and reinforcement learning (147-dim observation,
//! separate observation compressor, actor and critic heads over all qubits).

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minigrid;
use crate::nn::{uniform_matrix, Activation, AdamState, DenseLayer, GradTape, LayerGrads, Matrix};
use crate::sim::{param_shift_theta, run_vqc, Entangler, FastParams, VqcConfig};

/// Hidden width of the slow-programmer encoder.
pub const LATENT_DIM: usize = 8;
/// Dense layers start uniform in `[-0.1, 0.1]` so early angle updates stay
/// small and the circuit behaves like its base angles.
pub const INIT_SCALE: f64 = 0.1;
/// Base angles are drawn uniform in `[-pi, pi]`.
pub const THETA0_SCALE: f64 = PI;

/// How circuit-angle gradients are routed back to the slow programmer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    /// Route the final circuit's angle gradient to every step's rank-1
    /// update (exact, since the accumulation is additive). Default.
    AllSteps,
    /// Route only to the step that executed the circuit.
    LastStepOnly,
}

/// Encoder plus the two index heads that emit `L` and `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowProgrammer {
    pub encoder: DenseLayer,
    pub layer_head: DenseLayer,
    pub qubit_head: DenseLayer,
}

/// Forward tapes of one slow-programmer evaluation.
#[derive(Debug)]
pub struct SlowTapes {
    encoder: GradTape,
    layer: GradTape,
    qubit: GradTape,
}

impl SlowProgrammer {
    /// `latent = tanh(encoder(x)); L = layer_head(latent); Q = qubit_head(latent)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, SlowTapes)> {
        let (latent, encoder_tape) = self.encoder.forward(x)?;
        let (l_vec, layer_tape) = self.layer_head.forward(&latent)?;
        let (q_vec, qubit_tape) = self.qubit_head.forward(&latent)?;
        Ok((l_vec, q_vec, SlowTapes { encoder: encoder_tape, layer: layer_tape, qubit: qubit_tape }))
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.layer_head.param_count() + self.qubit_head.param_count()
    }
}

/// Task-specific heads around the shared slow programmer and circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskHead {
    /// Scalar regression head over the measured qubits.
    TimeSeries { post: DenseLayer },
    /// Observation compressor feeding the circuit, plus actor/critic heads.
    Rl { compressor: DenseLayer, actor: DenseLayer, critic: DenseLayer },
}

/// `theta' = theta + L Q^T`; pure function, shape-checked.
pub fn outer_update(theta: &Matrix, l_vec: &[f64], q_vec: &[f64]) -> Result<Matrix> {
    if l_vec.len() != theta.rows() || q_vec.len() != theta.cols() {
        return Err(Error::Argument(format!(
            "outer update with |L| = {}, |Q| = {} against a {}x{} angle matrix",
            l_vec.len(),
            q_vec.len(),
            theta.rows(),
            theta.cols()
        )));
    }
    let mut out = theta.clone();
    out.add_outer(l_vec, q_vec);
    Ok(out)
}

/// Everything one step leaves behind for the backward pass.
#[derive(Debug)]
pub struct StepCache {
    slow_tapes: SlowTapes,
    l_vec: Vec<f64>,
    q_vec: Vec<f64>,
    /// Angle matrix the circuit actually ran with (post-update).
    theta_used: Matrix,
    vqc_input: Vec<f64>,
    expectations: Vec<f64>,
    compressor_tape: Option<GradTape>,
}

impl StepCache {
    pub fn expectations(&self) -> &[f64] {
        &self.expectations
    }

    pub fn theta_used(&self) -> &Matrix {
        &self.theta_used
    }
}

/// Caches of a whole time-series window pass.
#[derive(Debug)]
pub struct TsCaches {
    steps: Vec<StepCache>,
    post_tape: GradTape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfwpModel {
    pub slow: SlowProgrammer,
    pub cfg: VqcConfig,
    pub fast: FastParams,
    pub head: TaskHead,
    pub grad_mode: GradMode,
    pub seed: u64,
}

impl QfwpModel {
    /// Time-series configuration: scalar input, `min(4, n)` measured qubits,
    /// scalar post-processing head. With the defaults (8 qubits, 2 layers)
    /// this has 111 classical and 16 quantum parameters.
    pub fn time_series(
        num_qubits: usize,
        num_layers: usize,
        grad_mode: GradMode,
        seed: u64,
    ) -> Result<Self> {
        let measured: Vec<usize> = (0..num_qubits.min(4)).collect();
        let cfg = VqcConfig::new(num_qubits, num_layers, measured, Entangler::Chain)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta0 = uniform_matrix(num_layers, num_qubits, THETA0_SCALE, &mut rng);
        let slow = SlowProgrammer {
            encoder: DenseLayer::seeded(LATENT_DIM, 1, Activation::Tanh, INIT_SCALE, &mut rng),
            layer_head: DenseLayer::seeded(
                num_layers,
                LATENT_DIM,
                Activation::Identity,
                INIT_SCALE,
                &mut rng,
            ),
            qubit_head: DenseLayer::seeded(
                num_qubits,
                LATENT_DIM,
                Activation::Identity,
                INIT_SCALE,
                &mut rng,
            ),
        };
        let post = DenseLayer::seeded(
            1,
            cfg.measured_qubits.len(),
            Activation::Identity,
            INIT_SCALE,
            &mut rng,
        );
        Ok(Self {
            slow,
            cfg,
            fast: FastParams::new(theta0),
            head: TaskHead::TimeSeries { post },
            grad_mode,
            seed,
        })
    }

    /// Reinforcement-learning configuration: 147-dim observations, all qubits
    /// measured, actor over 6 actions and scalar critic. With 8 qubits and 2
    /// layers this has 2521 classical and 16 quantum parameters.
    pub fn rl(num_qubits: usize, num_layers: usize, grad_mode: GradMode, seed: u64) -> Result<Self> {
        let cfg = VqcConfig::new(num_qubits, num_layers, (0..num_qubits).collect(), Entangler::Chain)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta0 = uniform_matrix(num_layers, num_qubits, THETA0_SCALE, &mut rng);
        let compressor = DenseLayer::seeded(
            num_qubits,
            minigrid::OBS_LEN,
            Activation::Tanh,
            INIT_SCALE,
            &mut rng,
        );
        let slow = SlowProgrammer {
            encoder: DenseLayer::seeded(
                LATENT_DIM,
                minigrid::OBS_LEN,
                Activation::Tanh,
                INIT_SCALE,
                &mut rng,
            ),
            layer_head: DenseLayer::seeded(
                num_layers,
                LATENT_DIM,
                Activation::Identity,
                INIT_SCALE,
                &mut rng,
            ),
            qubit_head: DenseLayer::seeded(
                num_qubits,
                LATENT_DIM,
                Activation::Identity,
                INIT_SCALE,
                &mut rng,
            ),
        };
        let actor = DenseLayer::seeded(
            minigrid::NUM_ACTIONS,
            cfg.measured_qubits.len(),
            Activation::Identity,
            INIT_SCALE,
            &mut rng,
        );
        let critic = DenseLayer::seeded(
            1,
            cfg.measured_qubits.len(),
            Activation::Identity,
            INIT_SCALE,
            &mut rng,
        );
        Ok(Self {
            slow,
            cfg,
            fast: FastParams::new(theta0),
            head: TaskHead::Rl { compressor, actor, critic },
            grad_mode,
            seed,
        })
    }

    pub fn is_rl(&self) -> bool {
        matches!(self.head, TaskHead::Rl { .. })
    }

    /// Rewind the fast angles to `theta0` (window or episode boundary).
    pub fn reset_fast(&mut self) {
        self.fast.reset();
    }

    /// One reprogram-then-run step: update the angles from the slow
    /// programmer's output, then execute the circuit.
    pub fn fwp_step(&mut self, slow_input: &[f64], vqc_input: &[f64]) -> Result<(Vec<f64>, StepCache)> {
        let (l_vec, q_vec, slow_tapes) = self.slow.forward(slow_input)?;
        self.fast.theta.add_outer(&l_vec, &q_vec);
        let theta_used = self.fast.theta.clone();
        let expectations = run_vqc(&self.cfg, vqc_input, &self.fast)?;
        Ok((
            expectations.clone(),
            StepCache {
                slow_tapes,
                l_vec,
                q_vec,
                theta_used,
                vqc_input: vqc_input.to_vec(),
                expectations,
                compressor_tape: None,
            },
        ))
    }

    /// Process one window: reset the angles, step through every value with
    /// the series loaded on qubit 0 only, and map the final expectations to a
    /// scalar prediction.
    pub fn ts_forward(&mut self, window: &[f64]) -> Result<(f64, TsCaches)> {
        if window.is_empty() {
            return Err(Error::Argument("time-series window is empty".into()));
        }
        if self.is_rl() {
            return Err(Error::State("ts_forward requires the time-series configuration".into()));
        }
        self.fast.reset();
        let n = self.cfg.num_qubits;
        let mut steps = Vec::with_capacity(window.len());
        for &x in window {
            let mut vqc_input = vec![0.0; n];
            vqc_input[0] = x;
            let (_, cache) = self.fwp_step(&[x], &vqc_input)?;
            steps.push(cache);
        }
        let TaskHead::TimeSeries { post } = &self.head else { unreachable!() };
        let final_exp = steps.last().expect("nonempty window").expectations.clone();
        let (out, post_tape) = post.forward(&final_exp)?;
        Ok((out[0], TsCaches { steps, post_tape }))
    }

    /// Gradients of `loss_grad * prediction` with respect to every classical
    /// parameter, flat in the layout of [`QfwpModel::flatten_params`].
    ///
    /// The final angle matrix is `theta0 + sum_t L(t) Q(t)^T`, so its gradient
    /// reaches each step's `L`/`Q` through an identity Jacobian; `theta0`
    /// itself receives no gradient. One parameter-shift evaluation of the
    /// final circuit serves every step.
    pub fn ts_backward(&self, caches: TsCaches, loss_grad: f64) -> Result<Vec<f64>> {
        let TaskHead::TimeSeries { post } = &self.head else {
            return Err(Error::State("ts_backward requires the time-series configuration".into()));
        };
        let offsets = self.layer_offsets();
        let mut flat = vec![0.0; self.param_len()];

        let (d_exp, post_grads) = post.backward(caches.post_tape, &[loss_grad])?;
        scatter_layer(&mut flat, offsets[3], &post_grads);

        let last = caches
            .steps
            .last()
            .ok_or_else(|| Error::State("ts_backward on empty caches".into()))?;
        let grad = param_shift_theta(&self.cfg, &last.vqc_input, &last.theta_used, false)?;
        let d_theta = contract_expectation_grads(&grad.d_theta, &d_exp, &self.cfg);

        let total = caches.steps.len();
        for (t, step) in caches.steps.into_iter().enumerate() {
            let routed = match self.grad_mode {
                GradMode::AllSteps => true,
                GradMode::LastStepOnly => t + 1 == total,
            };
            if !routed {
                continue;
            }
            self.backprop_slow_step(&d_theta, step, &mut flat, &offsets[0..3])?;
        }
        Ok(flat)
    }

    /// One RL step: compress the observation into circuit angles, reprogram,
    /// run, and measure all qubits. The angles persist across steps; call
    /// [`QfwpModel::reset_fast`] at episode boundaries.
    pub fn rl_forward(&mut self, obs: &[f64]) -> Result<(Vec<f64>, StepCache)> {
        let (vqc_input, comp_tape) = {
            let TaskHead::Rl { compressor, .. } = &self.head else {
                return Err(Error::State("rl_forward requires the RL configuration".into()));
            };
            if obs.len() != compressor.in_dim() {
                return Err(Error::Argument(format!(
                    "observation length {} does not match compressor input {}",
                    obs.len(),
                    compressor.in_dim()
                )));
            }
            compressor.forward(obs)?
        };
        let (exp, mut cache) = self.fwp_step(obs, &vqc_input)?;
        cache.compressor_tape = Some(comp_tape);
        Ok((exp, cache))
    }

    /// Expectations the circuit *would* produce for `obs`, without committing
    /// the angle update (used for bootstrap values at segment boundaries).
    pub fn rl_peek(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let TaskHead::Rl { compressor, .. } = &self.head else {
            return Err(Error::State("rl_peek requires the RL configuration".into()));
        };
        let (vqc_input, _) = compressor.forward(obs)?;
        let (l_vec, q_vec, _) = self.slow.forward(obs)?;
        let theta = outer_update(&self.fast.theta, &l_vec, &q_vec)?;
        run_vqc(&self.cfg, &vqc_input, &FastParams { theta: theta.clone(), theta0: theta })
    }

    /// Gradients for a trajectory segment: one parameter-shift evaluation per
    /// step (with input gradients for the compressor), angle gradients routed
    /// per [`GradMode`] within the segment, angles entering the segment
    /// treated as constant. `d_expectations[t]` is the upstream gradient on
    /// step `t`'s measured expectations.
    pub fn rl_backward(
        &self,
        caches: Vec<StepCache>,
        d_expectations: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let TaskHead::Rl { compressor, .. } = &self.head else {
            return Err(Error::State("rl_backward requires the RL configuration".into()));
        };
        if caches.len() != d_expectations.len() {
            return Err(Error::State(format!(
                "{} cached steps but {} upstream gradients",
                caches.len(),
                d_expectations.len()
            )));
        }
        let offsets = self.layer_offsets();
        let mut flat = vec![0.0; self.param_len()];
        let m = self.cfg.measured_qubits.len();

        let mut d_theta_per_step = Vec::with_capacity(caches.len());
        let mut d_input_per_step = Vec::with_capacity(caches.len());
        for (cache, d_exp) in caches.iter().zip(d_expectations) {
            if d_exp.len() != m {
                return Err(Error::Argument(format!(
                    "upstream gradient length {} does not match {} measured qubits",
                    d_exp.len(),
                    m
                )));
            }
            let grad = param_shift_theta(&self.cfg, &cache.vqc_input, &cache.theta_used, true)?;
            d_theta_per_step.push(contract_expectation_grads(&grad.d_theta, d_exp, &self.cfg));
            let mut d_input = vec![0.0; self.cfg.num_qubits];
            for (k, row) in grad.d_input.iter().enumerate() {
                for (di, g) in d_input.iter_mut().zip(row) {
                    *di += d_exp[k] * g;
                }
            }
            d_input_per_step.push(d_input);
        }

        // Step t's angles contain every rank-1 update with s <= t, so the
        // update at step s collects the angle gradients of all later steps.
        let routed: Vec<Matrix> = match self.grad_mode {
            GradMode::AllSteps => {
                let mut suffix = Matrix::zeros(self.cfg.num_layers, self.cfg.num_qubits);
                let mut rev: Vec<Matrix> = d_theta_per_step
                    .iter()
                    .rev()
                    .map(|d| {
                        for (s, g) in suffix.data_mut().iter_mut().zip(d.data()) {
                            *s += g;
                        }
                        suffix.clone()
                    })
                    .collect();
                rev.reverse();
                rev
            }
            GradMode::LastStepOnly => d_theta_per_step,
        };

        for ((mut cache, d_theta), d_input) in caches.into_iter().zip(&routed).zip(&d_input_per_step) {
            let comp_tape = cache
                .compressor_tape
                .take()
                .ok_or_else(|| Error::State("step cache is missing the compressor tape".into()))?;
            let (_, comp_grads) = compressor.backward(comp_tape, d_input)?;
            scatter_layer(&mut flat, offsets[0], &comp_grads);
            self.backprop_slow_step(d_theta, cache, &mut flat, &offsets[1..4])?;
        }
        Ok(flat)
    }

    /// Route an angle-matrix gradient through one step's slow-programmer
    /// tapes. `slow_offsets` are the flat offsets of encoder, layer head,
    /// and qubit head, in that order.
    fn backprop_slow_step(
        &self,
        d_theta: &Matrix,
        step: StepCache,
        flat: &mut [f64],
        slow_offsets: &[usize],
    ) -> Result<()> {
        let d_l = d_theta.matvec(&step.q_vec);
        let d_q = d_theta.t_matvec(&step.l_vec);
        let SlowTapes { encoder, layer, qubit } = step.slow_tapes;
        let (d_latent_l, layer_grads) = self.slow.layer_head.backward(layer, &d_l)?;
        let (d_latent_q, qubit_grads) = self.slow.qubit_head.backward(qubit, &d_q)?;
        let d_latent: Vec<f64> =
            d_latent_l.iter().zip(&d_latent_q).map(|(a, b)| a + b).collect();
        let (_, encoder_grads) = self.slow.encoder.backward(encoder, &d_latent)?;
        scatter_layer(flat, slow_offsets[0], &encoder_grads);
        scatter_layer(flat, slow_offsets[1], &layer_grads);
        scatter_layer(flat, slow_offsets[2], &qubit_grads);
        Ok(())
    }

    /// `(classical, quantum)` parameter counts. Classical counts every dense
    /// weight and bias attached to the model; quantum counts `l * n`.
    pub fn count_parameters(&self) -> (usize, usize) {
        let classical = self.layers().iter().map(|l| l.param_count()).sum();
        let quantum = self.cfg.num_layers * self.cfg.num_qubits;
        (classical, quantum)
    }

    /// Dense layers in their canonical flat order.
    fn layers(&self) -> Vec<&DenseLayer> {
        let slow = [&self.slow.encoder, &self.slow.layer_head, &self.slow.qubit_head];
        match &self.head {
            TaskHead::TimeSeries { post } => {
                slow.into_iter().chain([post]).collect()
            }
            TaskHead::Rl { compressor, actor, critic } => std::iter::once(compressor)
                .chain(slow)
                .chain([actor, critic])
                .collect(),
        }
    }

    fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let Self { slow, head, .. } = self;
        let slow = [&mut slow.encoder, &mut slow.layer_head, &mut slow.qubit_head];
        match head {
            TaskHead::TimeSeries { post } => slow.into_iter().chain([post]).collect(),
            TaskHead::Rl { compressor, actor, critic } => std::iter::once(compressor)
                .chain(slow)
                .chain([actor, critic])
                .collect(),
        }
    }

    /// Flat offset of each layer inside the parameter vector.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::new();
        let mut acc = 0;
        for layer in self.layers() {
            offsets.push(acc);
            acc += layer.param_count();
        }
        offsets
    }

    pub fn param_len(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// All classical parameters, layer by layer, weights (row-major) then
    /// bias. The base angles `theta0` are not trainable and not included.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_len());
        for layer in self.layers() {
            flat.extend_from_slice(layer.weights.data());
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_len() {
            return Err(Error::Argument(format!(
                "parameter vector length {} does not match model size {}",
                flat.len(),
                self.param_len()
            )));
        }
        let mut pos = 0;
        for layer in self.layers_mut() {
            let w = layer.weights.data_mut();
            w.copy_from_slice(&flat[pos..pos + w.len()]);
            pos += w.len();
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&flat[pos..pos + b]);
            pos += b;
        }
        Ok(())
    }

    /// Structural consistency of dimensions, used on construction-from-file.
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate().map_err(|e| Error::Format(format!("config: {}", e)))?;
        self.fast.matches(&self.cfg).map_err(|e| Error::Format(format!("fast: {}", e)))?;
        let m = self.cfg.measured_qubits.len();
        let mut checks: Vec<(&str, &DenseLayer, usize, usize)> = vec![
            ("slow.layer_head", &self.slow.layer_head, LATENT_DIM, self.cfg.num_layers),
            ("slow.qubit_head", &self.slow.qubit_head, LATENT_DIM, self.cfg.num_qubits),
        ];
        match &self.head {
            TaskHead::TimeSeries { post } => {
                checks.push(("slow.encoder", &self.slow.encoder, 1, LATENT_DIM));
                checks.push(("head.post", post, m, 1));
            }
            TaskHead::Rl { compressor, actor, critic } => {
                checks.push(("slow.encoder", &self.slow.encoder, minigrid::OBS_LEN, LATENT_DIM));
                checks.push((
                    "head.compressor",
                    compressor,
                    minigrid::OBS_LEN,
                    self.cfg.num_qubits,
                ));
                checks.push(("head.actor", actor, m, minigrid::NUM_ACTIONS));
                checks.push(("head.critic", critic, m, 1));
            }
        }
        for (name, layer, in_dim, out_dim) in checks {
            if layer.in_dim() != in_dim || layer.out_dim() != out_dim {
                return Err(Error::Format(format!(
                    "{}: expected a {}x{} layer, found {}x{}",
                    name,
                    out_dim,
                    in_dim,
                    layer.out_dim(),
                    layer.in_dim()
                )));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Format(format!(
                    "{}: bias length {} does not match output dimension {}",
                    name,
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.weights.data().len() != layer.out_dim() * layer.in_dim() {
                return Err(Error::Format(format!(
                    "{}: weight data length {} does not match {}x{}",
                    name,
                    layer.weights.data().len(),
                    layer.out_dim(),
                    layer.in_dim()
                )));
            }
        }
        for (name, m) in [("fast.theta", &self.fast.theta), ("fast.theta0", &self.fast.theta0)] {
            if m.data().len() != m.rows() * m.cols() {
                return Err(Error::Format(format!(
                    "{}: data length {} does not match {}x{}",
                    name,
                    m.data().len(),
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(())
    }

    /// Write the model (and optionally optimizer state) as human-readable
    /// JSON. Numbers round-trip exactly.
    pub fn checkpoint_save(&self, path: &Path, optimizer: Option<&AdamState>) -> Result<()> {
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: self.clone(),
            optimizer: optimizer.cloned(),
        };
        let text = serde_json::to_string_pretty(&ckpt)
            .map_err(|e| Error::Format(format!("checkpoint encode: {}", e)))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn checkpoint_load(path: &Path) -> Result<(Self, Option<AdamState>)> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("checkpoint parse: {}", e)))?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "format_version: expected {}, found {}",
                CHECKPOINT_VERSION, ckpt.format_version
            )));
        }
        ckpt.model.validate()?;
        Ok((ckpt.model, ckpt.optimizer))
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: QfwpModel,
    optimizer: Option<AdamState>,
}

/// `sum_k d_exp[k] * d<Z_k>/d theta` as one `l x n` matrix.
fn contract_expectation_grads(per_qubit: &[Matrix], d_exp: &[f64], cfg: &VqcConfig) -> Matrix {
    let mut out = Matrix::zeros(cfg.num_layers, cfg.num_qubits);
    for (g, w) in per_qubit.iter().zip(d_exp) {
        for (o, v) in out.data_mut().iter_mut().zip(g.data()) {
            *o += w * v;
        }
    }
    out
}

/// Add one layer's gradients into the flat vector at its offset.
pub(crate) fn scatter_layer(flat: &mut [f64], offset: usize, grads: &LayerGrads) {
    let src = grads.weights.data().iter().chain(&grads.bias);
    for (dst, s) in flat[offset..].iter_mut().zip(src) {
        *dst += s;
    }
}
