#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use shotlab::circuit::{Binding, CircuitSpec, EncoderLayout, GateOp};
use shotlab::extractor::Architecture;
use shotlab::heads::Head;
use shotlab::loss::LossConfig;
use shotlab::model::{Model, ModelSpec};
use shotlab::sim::{Axis, StateVector};

pub const AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

pub fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

/// Random rotations and CNOTs with fixed angles.
pub fn random_gates<R: Rng>(rng: &mut R, n_qubits: usize, n_gates: usize) -> Vec<GateOp> {
    (0..n_gates)
        .map(|_| {
            if n_qubits > 1 && rng.random_bool(0.3) {
                let control = rng.random_range(0..n_qubits);
                let mut target = rng.random_range(0..n_qubits - 1);
                if target >= control {
                    target += 1;
                }
                GateOp::Cnot { control, target }
            } else {
                GateOp::Rotation {
                    axis: AXES[rng.random_range(0..3)],
                    qubit: rng.random_range(0..n_qubits),
                    binding: Binding::Fixed(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                }
            }
        })
        .collect()
}

pub fn random_circuit<R: Rng>(rng: &mut R, n_qubits: usize, n_gates: usize) -> CircuitSpec {
    CircuitSpec::new(n_qubits, 0, 0, 0, random_gates(rng, n_qubits, n_gates)).unwrap()
}

/// A generic entangled state: a random circuit run from |0…0⟩.
pub fn random_state<R: Rng>(rng: &mut R, n_qubits: usize) -> StateVector {
    random_circuit(rng, n_qubits, 12 * n_qubits).execute(&[], &[]).unwrap()
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// A random small model: n_q in 2..=4, N_b in 1..=3, either extractor.
pub fn random_small_model<R: Rng>(rng: &mut R, seed: u64, input_dim: usize) -> Model {
    let n_qubits = rng.random_range(2..=4);
    let head = if n_qubits == 4 && rng.random_bool(0.5) {
        Head::Vanilla
    } else {
        Head::Yomo
    };
    let n_classes = match head {
        Head::Vanilla => rng.random_range(2..=10),
        Head::Yomo => rng.random_range(2..=(1usize << n_qubits).min(6)),
    };
    let architecture = if rng.random_bool(0.5) {
        Architecture::Affine
    } else {
        Architecture::Mlp {
            hidden: rng.random_range(2..=5),
        }
    };
    let spec = ModelSpec {
        head,
        n_qubits,
        n_blocks: rng.random_range(1..=3),
        n_classes,
        input_dim,
        n_features: rng.random_range(1..=2 * n_qubits),
        architecture,
        layout: EncoderLayout::Layerwise,
    };
    let loss = LossConfig {
        gamma: rng.random_range(0.0..0.3),
        omega: rng.random_range(0.0..0.3),
        tau: rng.random_range(0.2..0.8),
        ..LossConfig::default()
    };
    Model::init(spec, loss, seed).unwrap()
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
