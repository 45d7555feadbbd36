//! Minimal dense-layer engine: row-major matrices, forward/backward passes,
//! seeded uniform initialization, and a bias-corrected Adam optimizer.
//!
//! Every classical head in the model (encoder, index heads, post-processing,
//! actor, critic, observation compressor) is a single [`DenseLayer`]; nothing
//! deeper is needed, so there is no general autograd graph. A forward pass
//! hands back a [`GradTape`] which the backward pass consumes by value, so a
//! tape cannot be replayed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(w, xi)| w * xi).sum())
            .collect()
    }

    /// `self^T * y` for a column vector `y`.
    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, yr) in y.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += u v^T`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (r, ur) in u.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, vc) in row.iter_mut().zip(v) {
                *w += ur * vc;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y = f(x)`.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected layer `y = f(W x + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Cached forward-pass values for one backward pass. Consumed by
/// [`DenseLayer::backward`], so each forward record is used at most once.
#[derive(Clone, Debug)]
pub struct GradTape {
    input: Vec<f64>,
    output: Vec<f64>,
}

/// Parameter gradients of a single layer.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Argument(format!(
                "bias length {} does not match output dimension {}",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias, activation })
    }

    /// Layer with weights and bias drawn i.i.d. uniform in `[-scale, scale]`.
    pub fn seeded(
        out_dim: usize,
        in_dim: usize,
        activation: Activation,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weights = uniform_matrix(out_dim, in_dim, scale, rng);
        let bias = uniform_vec(out_dim, scale, rng);
        Self { weights, bias, activation }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Weight plus bias count, e.g. `1 x 8 + 8 = 16` for a 1-to-8 layer.
    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, GradTape)> {
        if input.len() != self.in_dim() {
            return Err(Error::Argument(format!(
                "dense input length {} does not match in dimension {}",
                input.len(),
                self.in_dim()
            )));
        }
        let mut output = self.weights.matvec(input);
        for (o, b) in output.iter_mut().zip(&self.bias) {
            *o = self.activation.apply(*o + b);
        }
        let tape = GradTape { input: input.to_vec(), output: output.clone() };
        Ok((output, tape))
    }

    /// Reverse-mode gradients. Returns the gradient with respect to the input
    /// plus the parameter gradients of this layer.
    pub fn backward(&self, tape: GradTape, output_grad: &[f64]) -> Result<(Vec<f64>, LayerGrads)> {
        if output_grad.len() != self.out_dim() {
            return Err(Error::Argument(format!(
                "output gradient length {} does not match out dimension {}",
                output_grad.len(),
                self.out_dim()
            )));
        }
        // delta = f'(z) .* output_grad, with f' evaluated from the cached output
        let delta: Vec<f64> = tape
            .output
            .iter()
            .zip(output_grad)
            .map(|(y, g)| self.activation.grad_from_output(*y) * g)
            .collect();
        let input_grad = self.weights.t_matvec(&delta);
        let mut weight_grad = Matrix::zeros(self.out_dim(), self.in_dim());
        weight_grad.add_outer(&delta, &tape.input);
        Ok((input_grad, LayerGrads { weights: weight_grad, bias: delta }))
    }
}

/// Bias-corrected Adam state over a flat parameter vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    /// One update step; increments `step_count` by exactly 1.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != self.first_moment.len() {
            return Err(Error::Argument(format!(
                "adam expects {} parameters, got {} params / {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Seeded matrix with entries i.i.d. uniform in `[-scale, scale]`.
pub fn init_uniform(rows: usize, cols: usize, scale: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    uniform_matrix(rows, cols, scale, &mut rng)
}

pub(crate) fn uniform_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix { rows, cols, data: uniform_vec(rows * cols, scale, rng) }
}

pub(crate) fn uniform_vec(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..=scale)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn layer_3x2_tanh() -> DenseLayer {
        let weights =
            Matrix::from_vec(3, 2, vec![0.31, -0.12, 0.07, 0.54, -0.43, 0.28]).unwrap();
        DenseLayer::new(weights, vec![0.05, -0.2, 0.11], Activation::Tanh).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let weights = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = DenseLayer::new(weights, vec![0.0, 0.0], Activation::Identity).unwrap();
        let (out, _) = layer.forward(&[0.4, -1.7]).unwrap();
        assert_eq!(out, vec![0.4, -1.7]);
    }

    #[test]
    fn zero_weights_output_bias() {
        let layer =
            DenseLayer::new(Matrix::zeros(2, 3), vec![1.5, -2.5], Activation::Identity).unwrap();
        let (out, _) = layer.forward(&[9.0, 9.0, 9.0]).unwrap();
        assert_eq!(out, vec![1.5, -2.5]);
    }

    #[test]
    fn forward_matches_hand_matrix_product() {
        let layer = layer_3x2_tanh();
        let x = [0.9, -0.3];
        let (out, _) = layer.forward(&x).unwrap();
        // hand multiply: z = W x + b, y = tanh(z)
        let z: [f64; 3] = [
            0.31 * 0.9 + (-0.12) * (-0.3) + 0.05,
            0.07 * 0.9 + 0.54 * (-0.3) - 0.2,
            -0.43 * 0.9 + 0.28 * (-0.3) + 0.11,
        ];
        for (o, zi) in out.iter().zip(z) {
            assert_abs_diff_eq!(*o, zi.tanh(), epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_identity_passthrough() {
        let weights = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = DenseLayer::new(weights, vec![0.0, 0.0], Activation::Identity).unwrap();
        let (_, tape) = layer.forward(&[0.3, 0.6]).unwrap();
        let (input_grad, _) = layer.backward(tape, &[1.0, -2.0]).unwrap();
        assert_eq!(input_grad, vec![1.0, -2.0]);
    }

    #[test]
    fn weight_grad_is_outer_product() {
        let layer = layer_3x2_tanh();
        let x = [0.5, -1.1];
        let (out, tape) = layer.forward(&x).unwrap();
        let g = [0.7, -0.2, 1.3];
        let (_, grads) = layer.backward(tape, &g).unwrap();
        for r in 0..3 {
            let delta = (1.0 - out[r] * out[r]) * g[r];
            for c in 0..2 {
                assert_abs_diff_eq!(grads.weights.get(r, c), delta * x[c], epsilon = 1e-12);
            }
            assert_abs_diff_eq!(grads.bias[r], delta, epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let layer = layer_3x2_tanh();
        let x = [0.25, 0.65];
        let out_grad = [0.4, -0.9, 0.15];
        // scalar loss = sum(out .* out_grad) so dloss/dout = out_grad
        let loss = |l: &DenseLayer, x: &[f64]| -> f64 {
            let (o, _) = l.forward(x).unwrap();
            o.iter().zip(out_grad).map(|(a, b)| a * b).sum()
        };
        let (_, tape) = layer.forward(&x).unwrap();
        let (input_grad, grads) = layer.backward(tape, &out_grad).unwrap();
        let eps = 1e-6;

        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += eps;
            xm[c] -= eps;
            let fd = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps);
            assert_abs_diff_eq!(input_grad[c], fd, epsilon = 1e-6);
        }
        for r in 0..3 {
            for c in 0..2 {
                let mut lp = layer.clone();
                let mut lm = layer.clone();
                lp.weights.set(r, c, lp.weights.get(r, c) + eps);
                lm.weights.set(r, c, lm.weights.get(r, c) - eps);
                let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
                assert_abs_diff_eq!(grads.weights.get(r, c), fd, epsilon = 1e-6);
            }
            let mut lp = layer.clone();
            let mut lm = layer.clone();
            lp.bias[r] += eps;
            lm.bias[r] -= eps;
            let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
            assert_abs_diff_eq!(grads.bias[r], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn reusing_a_tape_is_rejected_at_compile_time() {
        // backward takes the tape by value; a second call cannot even be
        // written. This test just pins the consuming signature.
        let layer = layer_3x2_tanh();
        let (_, tape) = layer.forward(&[0.1, 0.2]).unwrap();
        let _ = layer.backward(tape, &[0.0, 0.0, 0.0]).unwrap();
    }

    #[test]
    fn adam_zero_grads_is_noop_on_params() {
        let mut adam = AdamState::new(3, 0.1, 0.9, 0.999);
        let mut params = vec![1.0, -2.0, 0.5];
        adam.apply(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // at t=1 the bias-corrected moments are m_hat = v_hat = g, so the
        // update is lr * g / (|g| + eps) = lr / (1 + eps) for g = 1
        let mut adam = AdamState::new(1, 1e-2, 0.9, 0.999);
        let mut params = vec![0.0];
        adam.apply(&mut params, &[1.0]).unwrap();
        assert_abs_diff_eq!(params[0], -1e-2 / (1.0 + 1e-8), epsilon = 1e-15);
    }

    #[test]
    fn adam_descends_quadratic() {
        // scalar run on f(w) = w^2 from w = 1 with lr = 0.1
        let mut adam = AdamState::new(1, 0.1, 0.9, 0.999);
        let mut w = vec![1.0];
        let mut prev = w[0];
        for _ in 0..3 {
            let g = [2.0 * w[0]];
            adam.apply(&mut w, &g).unwrap();
            assert!(w[0] < prev, "w did not decrease: {} -> {}", prev, w[0]);
            prev = w[0];
        }
        assert_eq!(adam.step_count, 3);
    }

    #[test]
    fn adam_shape_mismatch_is_error() {
        let mut adam = AdamState::new(2, 0.1, 0.9, 0.999);
        let mut params = vec![0.0; 3];
        assert!(adam.apply(&mut params, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn init_uniform_deterministic_and_bounded() {
        let a = init_uniform(4, 5, 0.1, 7);
        let b = init_uniform(4, 5, 0.1, 7);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 0.1));
        let c = init_uniform(4, 5, 0.1, 8);
        assert!(a.data().iter().zip(c.data()).any(|(x, y)| x != y));
    }

    #[test]
    fn dense_shape_mismatch_is_error() {
        let layer = layer_3x2_tanh();
        assert!(layer.forward(&[1.0, 2.0, 3.0]).is_err());
    }
}
