//! Test oracles (enabled by the `testkit` feature), kept independent of the
//! simulator's gate kernels: circuits are built here as explicit
//! `2^n x 2^n` unitaries from Kronecker products and evaluated by dense
//! matrix arithmetic. Only test targets should enable this feature.

use num_complex::Complex64;

use crate::nn::Matrix;
use crate::sim::{Entangler, VqcConfig};

pub type CMat = Vec<Vec<Complex64>>;

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn cone() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

pub fn identity(dim: usize) -> CMat {
    let mut m = vec![vec![czero(); dim]; dim];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = cone();
    }
    m
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    let mut out = vec![vec![czero(); m]; n];
    for i in 0..n {
        for t in 0..k {
            let av = a[i][t];
            if av == czero() {
                continue;
            }
            for j in 0..m {
                out[i][j] += av * b[t][j];
            }
        }
    }
    out
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = (a.len(), a[0].len());
    let (br, bc) = (b.len(), b[0].len());
    let mut out = vec![vec![czero(); ac * bc]; ar * br];
    for i in 0..ar {
        for j in 0..ac {
            for p in 0..br {
                for q in 0..bc {
                    out[i * br + p][j * bc + q] = a[i][j] * b[p][q];
                }
            }
        }
    }
    out
}

fn h_gate() -> CMat {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    vec![vec![s, s], vec![s, -s]]
}

fn ry_gate(angle: f64) -> CMat {
    let (sin, cos) = (0.5 * angle).sin_cos();
    vec![
        vec![Complex64::new(cos, 0.0), Complex64::new(-sin, 0.0)],
        vec![Complex64::new(sin, 0.0), Complex64::new(cos, 0.0)],
    ]
}

fn x_gate() -> CMat {
    vec![vec![czero(), cone()], vec![cone(), czero()]]
}

fn z_gate() -> CMat {
    vec![vec![cone(), czero()], vec![czero(), -cone()]]
}

fn proj(bit: usize) -> CMat {
    let mut m = vec![vec![czero(); 2], vec![czero(); 2]];
    m[bit][bit] = cone();
    m
}

/// Kronecker chain with `factor` on `wire` and identities elsewhere. Wire 0
/// is the leftmost factor, matching the most-significant-bit convention.
pub fn on_wire(num_qubits: usize, wire: usize, factor: &CMat) -> CMat {
    let mut out = if wire == 0 { factor.clone() } else { identity(2) };
    for w in 1..num_qubits {
        let next = if w == wire { factor.clone() } else { identity(2) };
        out = kron(&out, &next);
    }
    out
}

/// `CNOT(control, target)` as `P0 (x) I + P1 (x) X` placed on the wires.
pub fn cnot_matrix(num_qubits: usize, control: usize, target: usize) -> CMat {
    let keep_factor = |w: usize| if w == control { proj(0) } else { identity(2) };
    let flip_factor = |w: usize| {
        if w == control {
            proj(1)
        } else if w == target {
            x_gate()
        } else {
            identity(2)
        }
    };
    let mut keep = keep_factor(0);
    let mut flip = flip_factor(0);
    for w in 1..num_qubits {
        keep = kron(&keep, &keep_factor(w));
        flip = kron(&flip, &flip_factor(w));
    }
    let dim = keep.len();
    let mut out = vec![vec![czero(); dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i][j] = keep[i][j] + flip[i][j];
        }
    }
    out
}

/// Full circuit unitary: encoding Hadamards and rotations, then each layer's
/// entangler and trainable rotations, multiplied out as dense matrices.
pub fn circuit_unitary(cfg: &VqcConfig, inputs: &[f64], theta: &Matrix) -> CMat {
    let n = cfg.num_qubits;
    let mut u = identity(1 << n);
    for q in 0..n {
        u = matmul(&on_wire(n, q, &h_gate()), &u);
    }
    for (q, angle) in inputs.iter().enumerate() {
        u = matmul(&on_wire(n, q, &ry_gate(*angle)), &u);
    }
    for layer in 0..cfg.num_layers {
        if n > 1 {
            for j in 0..n - 1 {
                u = matmul(&cnot_matrix(n, j, j + 1), &u);
            }
            if cfg.entangler == Entangler::Ring {
                u = matmul(&cnot_matrix(n, n - 1, 0), &u);
            }
        }
        for q in 0..n {
            u = matmul(&on_wire(n, q, &ry_gate(theta.get(layer, q))), &u);
        }
    }
    u
}

/// `<Z_k>` for each measured qubit from the dense unitary applied to `|0..0>`.
pub fn oracle_expectations(cfg: &VqcConfig, inputs: &[f64], theta: &Matrix) -> Vec<f64> {
    let dim = 1 << cfg.num_qubits;
    let u = circuit_unitary(cfg, inputs, theta);
    let state: Vec<Complex64> = (0..dim).map(|i| u[i][0]).collect();
    cfg.measured_qubits
        .iter()
        .map(|&q| {
            let z = on_wire(cfg.num_qubits, q, &z_gate());
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..dim {
                let mut zi = Complex64::new(0.0, 0.0);
                for j in 0..dim {
                    zi += z[i][j] * state[j];
                }
                acc += state[i].conj() * zi;
            }
            acc.re
        })
        .collect()
}
