//! Exact statevector simulation of the circuit family used by the fast
//! programmer: Hadamards on every wire, data-encoding `Ry` rotations, and `L`
//! repetitions of a CNOT entangler followed by trainable `Ry` rotations.
//!
//! Expectation values are exact (no shot sampling). Gradients come from the
//! parameter-shift rule: every parameterized gate is an `Ry`, whose generator
//! has eigenvalues +-1/2, so `dE/dtheta = (E(theta + pi/2) - E(theta - pi/2)) / 2`
//! holds exactly.
//!
//! Convention: qubit 0 is the most significant bit of the basis index, so for
//! 2 qubits the amplitude order is |00>, |01>, |10>, |11>.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Dense simulation is kept deliberately small; experiments use n <= 8.
pub const MAX_QUBITS: usize = 12;

/// Unit-norm complex amplitude vector over `2^n` basis states.
#[derive(Clone, Debug)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn new_zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count {} outside supported range 1..={}",
                num_qubits, MAX_QUBITS
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// State with explicit amplitudes; must be unit norm.
    pub fn from_amplitudes(num_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count {} outside supported range 1..={}",
                num_qubits, MAX_QUBITS
            )));
        }
        if amps.len() != 1 << num_qubits {
            return Err(Error::Argument(format!(
                "amplitude vector length {} does not match 2^{}",
                amps.len(),
                num_qubits
            )));
        }
        let state = Self { num_qubits, amps };
        if (state.norm_sqr() - 1.0).abs() > 1e-8 {
            return Err(Error::Argument(format!(
                "amplitudes are not unit norm (|a|^2 = {})",
                state.norm_sqr()
            )));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Reset to `|0...0>` without reallocating.
    pub fn reset_zero(&mut self) {
        self.amps.fill(Complex64::new(0.0, 0.0));
        self.amps[0] = Complex64::new(1.0, 0.0);
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::Argument(format!(
                "qubit index {} out of range for {} qubits",
                qubit, self.num_qubits
            )));
        }
        Ok(())
    }

    /// Bit mask of `qubit` in the basis index (qubit 0 = most significant).
    #[inline]
    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    /// Apply a real 2x2 gate `[[a, b], [c, d]]` on one wire.
    fn apply_real_1q(&mut self, qubit: usize, a: f64, b: f64, c: f64, d: f64) {
        let stride = self.mask(qubit);
        let dim = self.amps.len();
        let mut base = 0;
        while base < dim {
            for idx in base..base + stride {
                let lo = self.amps[idx];
                let hi = self.amps[idx + stride];
                self.amps[idx] = Complex64::new(a * lo.re + b * hi.re, a * lo.im + b * hi.im);
                self.amps[idx + stride] =
                    Complex64::new(c * lo.re + d * hi.re, c * lo.im + d * hi.im);
            }
            base += 2 * stride;
        }
    }

    pub fn apply_h(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let s = FRAC_1_SQRT_2;
        self.apply_real_1q(qubit, s, s, s, -s);
        Ok(())
    }

    pub fn apply_ry(&mut self, qubit: usize, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        if !angle.is_finite() {
            return Err(Error::Argument(format!("non-finite Ry angle {}", angle)));
        }
        let (sin, cos) = (0.5 * angle).sin_cos();
        self.apply_real_1q(qubit, cos, -sin, sin, cos);
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Argument(format!(
                "cnot control and target are both qubit {}",
                control
            )));
        }
        let cmask = self.mask(control);
        let tmask = self.mask(target);
        for idx in 0..self.amps.len() {
            if idx & cmask != 0 && idx & tmask == 0 {
                self.amps.swap(idx, idx | tmask);
            }
        }
        Ok(())
    }

    /// `<Z> = P(bit = 0) - P(bit = 1)` on the given wire; no state mutation.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        let mut value = 0.0;
        for (idx, amp) in self.amps.iter().enumerate() {
            let p = amp.norm_sqr();
            if idx & mask == 0 {
                value += p;
            } else {
                value -= p;
            }
        }
        Ok(value)
    }
}

/// CNOT layout inside one variational block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entangler {
    /// `CNOT(j, j+1)` for `j = 0..n-2`. Default.
    Chain,
    /// Chain plus the wrap-around `CNOT(n-1, 0)`.
    Ring,
}

/// Static description of the circuit: wire count, block count, which qubits
/// are measured, and the entangler layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqcConfig {
    pub num_qubits: usize,
    pub num_layers: usize,
    pub measured_qubits: Vec<usize>,
    pub entangler: Entangler,
}

impl VqcConfig {
    pub fn new(
        num_qubits: usize,
        num_layers: usize,
        measured_qubits: Vec<usize>,
        entangler: Entangler,
    ) -> Result<Self> {
        let cfg = Self { num_qubits, num_layers, measured_qubits, entangler };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 || self.num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "num_qubits {} outside supported range 1..={}",
                self.num_qubits, MAX_QUBITS
            )));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        let mut seen = vec![false; self.num_qubits];
        for &q in &self.measured_qubits {
            if q >= self.num_qubits {
                return Err(Error::Config(format!(
                    "measured qubit {} out of range for {} qubits",
                    q, self.num_qubits
                )));
            }
            if seen[q] {
                return Err(Error::Config(format!("measured qubit {} listed twice", q)));
            }
            seen[q] = true;
        }
        if self.measured_qubits.is_empty() {
            return Err(Error::Config("at least one qubit must be measured".into()));
        }
        Ok(())
    }
}

/// Trainable rotation angles: `theta[(layer, qubit)]`, plus the base matrix
/// `theta0` the angles are reset to at sequence boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastParams {
    pub theta: Matrix,
    pub theta0: Matrix,
}

impl FastParams {
    pub fn new(theta0: Matrix) -> Self {
        Self { theta: theta0.clone(), theta0 }
    }

    /// Rewind the working angles to the base matrix.
    pub fn reset(&mut self) {
        self.theta = self.theta0.clone();
    }

    pub fn matches(&self, cfg: &VqcConfig) -> Result<()> {
        for (name, m) in [("theta", &self.theta), ("theta0", &self.theta0)] {
            if m.rows() != cfg.num_layers || m.cols() != cfg.num_qubits {
                return Err(Error::Argument(format!(
                    "{} is {}x{}, expected {}x{} from the circuit config",
                    name,
                    m.rows(),
                    m.cols(),
                    cfg.num_layers,
                    cfg.num_qubits
                )));
            }
        }
        Ok(())
    }
}

/// Parameter-shift gradients of each measured qubit's `<Z>`.
///
/// `d_theta[k]` is the `l x n` matrix of `d<Z_k>/d theta_ij`; `d_input[k]`
/// holds `d<Z_k>/d x_j` and is empty unless input gradients were requested.
#[derive(Clone, Debug)]
pub struct VqcGradient {
    pub d_theta: Vec<Matrix>,
    pub d_input: Vec<Vec<f64>>,
}

fn check_shapes(cfg: &VqcConfig, input_angles: &[f64], theta: &Matrix) -> Result<()> {
    cfg.validate()?;
    if input_angles.len() != cfg.num_qubits {
        return Err(Error::Argument(format!(
            "input angle vector length {} does not match {} qubits",
            input_angles.len(),
            cfg.num_qubits
        )));
    }
    for (i, a) in input_angles.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::Argument(format!("non-finite input angle at index {}", i)));
        }
    }
    if theta.rows() != cfg.num_layers || theta.cols() != cfg.num_qubits {
        return Err(Error::Argument(format!(
            "theta is {}x{}, expected {}x{}",
            theta.rows(),
            theta.cols(),
            cfg.num_layers,
            cfg.num_qubits
        )));
    }
    Ok(())
}

/// Runs the circuit into caller-provided buffers. `state` must have
/// `cfg.num_qubits` qubits; `out` is cleared and refilled with one `<Z>` per
/// measured qubit. Shapes are assumed already checked.
fn run_circuit_into(
    cfg: &VqcConfig,
    input_angles: &[f64],
    theta: &Matrix,
    state: &mut StateVector,
    out: &mut Vec<f64>,
) -> Result<()> {
    let n = cfg.num_qubits;
    state.reset_zero();
    for q in 0..n {
        state.apply_h(q)?;
    }
    for (q, angle) in input_angles.iter().enumerate() {
        state.apply_ry(q, *angle)?;
    }
    for layer in 0..cfg.num_layers {
        if n > 1 {
            for j in 0..n - 1 {
                state.apply_cnot(j, j + 1)?;
            }
            if cfg.entangler == Entangler::Ring {
                state.apply_cnot(n - 1, 0)?;
            }
        }
        for q in 0..n {
            state.apply_ry(q, theta.get(layer, q))?;
        }
    }
    out.clear();
    for &q in &cfg.measured_qubits {
        out.push(state.expectation_z(q)?);
    }
    Ok(())
}

/// Full circuit evaluation: `(H on all wires) . (Ry(x_j) on wire j) . [per
/// layer: entangler CNOTs, then Ry(theta_ij)]`, returning `<Z_k>` for each
/// measured qubit in order. Deterministic and side-effect-free.
pub fn run_vqc(cfg: &VqcConfig, input_angles: &[f64], params: &FastParams) -> Result<Vec<f64>> {
    check_shapes(cfg, input_angles, &params.theta)?;
    let mut state = StateVector::new_zero(cfg.num_qubits)?;
    let mut out = Vec::with_capacity(cfg.measured_qubits.len());
    run_circuit_into(cfg, input_angles, &params.theta, &mut state, &mut out)?;
    Ok(out)
}

/// Parameter-shift gradients for every trainable angle, and optionally for
/// every encoding angle. Costs two circuit evaluations per differentiated
/// angle; the caller's parameters are never modified.
pub fn param_shift_gradient(
    cfg: &VqcConfig,
    input_angles: &[f64],
    params: &FastParams,
    want_input_grad: bool,
) -> Result<VqcGradient> {
    param_shift_theta(cfg, input_angles, &params.theta, want_input_grad)
}

/// Same as [`param_shift_gradient`] for a bare angle matrix (used when
/// differentiating a cached theta snapshot rather than live parameters).
pub(crate) fn param_shift_theta(
    cfg: &VqcConfig,
    input_angles: &[f64],
    theta_base: &Matrix,
    want_input_grad: bool,
) -> Result<VqcGradient> {
    check_shapes(cfg, input_angles, theta_base)?;
    let n = cfg.num_qubits;
    let l = cfg.num_layers;
    let m = cfg.measured_qubits.len();

    let mut theta = theta_base.clone();
    let mut inputs = input_angles.to_vec();
    let mut state = StateVector::new_zero(n)?;
    let mut e_plus = Vec::with_capacity(m);
    let mut e_minus = Vec::with_capacity(m);

    let mut d_theta = vec![Matrix::zeros(l, n); m];
    for layer in 0..l {
        for q in 0..n {
            let base = theta.get(layer, q);
            theta.set(layer, q, base + FRAC_PI_2);
            run_circuit_into(cfg, &inputs, &theta, &mut state, &mut e_plus)?;
            theta.set(layer, q, base - FRAC_PI_2);
            run_circuit_into(cfg, &inputs, &theta, &mut state, &mut e_minus)?;
            theta.set(layer, q, base);
            for k in 0..m {
                d_theta[k].set(layer, q, 0.5 * (e_plus[k] - e_minus[k]));
            }
        }
    }

    let mut d_input = Vec::new();
    if want_input_grad {
        d_input = vec![vec![0.0; n]; m];
        for q in 0..n {
            let base = inputs[q];
            inputs[q] = base + FRAC_PI_2;
            run_circuit_into(cfg, &inputs, &theta, &mut state, &mut e_plus)?;
            inputs[q] = base - FRAC_PI_2;
            run_circuit_into(cfg, &inputs, &theta, &mut state, &mut e_minus)?;
            inputs[q] = base;
            for k in 0..m {
                d_input[k][q] = 0.5 * (e_plus[k] - e_minus[k]);
            }
        }
    }

    Ok(VqcGradient { d_theta, d_input })
}
