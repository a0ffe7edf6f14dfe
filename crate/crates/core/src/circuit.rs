//! Angle encoder, variational ansatz, and their execution.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::noise::{self, NoiseModel};
use crate::sim::{Axis, StateVector};
use crate::{Error, Result};

/// Where a rotation angle comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Binding {
    /// `z[i]`, the i-th extracted feature.
    Feature(usize),
    /// `theta[j]`, the j-th trainable angle.
    Theta(usize),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateOp {
    Rotation { axis: Axis, qubit: usize, binding: Binding },
    Cnot { control: usize, target: usize },
}

impl GateOp {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            GateOp::Rotation { qubit, .. } => vec![qubit],
            GateOp::Cnot { control, target } => vec![control, target],
        }
    }
}

/// Axis cycle used by the encoder: `y, z, x, y, z, ...`.
pub const ENCODER_AXES: [Axis; 3] = [Axis::Y, Axis::Z, Axis::X];

/// How the encoder picks the rotation axis of feature `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderLayout {
    /// A full layer of `R_y` over all qubits, then a layer of `R_z`, then
    /// `R_x`: axis index `floor(i / n_q) mod 3`.
    #[default]
    Layerwise,
    /// Axis cycles per gate: axis index `i mod 3`.
    PerGate,
}

/// An ordered gate program with its parameter bookkeeping.
///
/// Encoders have `n_theta = 0`, ansatz-only programs have `n_features = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    n_qubits: usize,
    n_features: usize,
    n_theta: usize,
    n_blocks: usize,
    gates: Vec<GateOp>,
}

impl CircuitSpec {
    /// Validate and wrap a gate list. Every feature and theta index must be
    /// bound exactly once and every qubit index must be in range.
    pub fn new(
        n_qubits: usize,
        n_features: usize,
        n_theta: usize,
        n_blocks: usize,
        gates: Vec<GateOp>,
    ) -> Result<Self> {
        if !(1..=crate::sim::MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::config(format!(
                "n_qubits = {n_qubits} outside 1..={}",
                crate::sim::MAX_QUBITS
            )));
        }
        let mut feature_seen = vec![0usize; n_features];
        let mut theta_seen = vec![0usize; n_theta];
        for (g, gate) in gates.iter().enumerate() {
            match *gate {
                GateOp::Rotation { qubit, binding, .. } => {
                    if qubit >= n_qubits {
                        return Err(Error::QubitIndex { index: qubit, n_qubits });
                    }
                    match binding {
                        Binding::Feature(i) => {
                            *feature_seen.get_mut(i).ok_or_else(|| {
                                Error::config(format!("gate {g} binds feature {i} >= n_f = {n_features}"))
                            })? += 1
                        }
                        Binding::Theta(j) => {
                            *theta_seen.get_mut(j).ok_or_else(|| {
                                Error::config(format!("gate {g} binds theta {j} >= n_theta = {n_theta}"))
                            })? += 1
                        }
                        Binding::Fixed(a) if !a.is_finite() => {
                            return Err(Error::config(format!("gate {g} has non-finite angle")))
                        }
                        Binding::Fixed(_) => {}
                    }
                }
                GateOp::Cnot { control, target } => {
                    for q in [control, target] {
                        if q >= n_qubits {
                            return Err(Error::QubitIndex { index: q, n_qubits });
                        }
                    }
                    if control == target {
                        return Err(Error::config(format!("gate {g}: CNOT on a single qubit {control}")));
                    }
                }
            }
        }
        if let Some(i) = feature_seen.iter().position(|&c| c != 1) {
            return Err(Error::config(format!(
                "feature {i} is bound {} times, expected once",
                feature_seen[i]
            )));
        }
        if let Some(j) = theta_seen.iter().position(|&c| c != 1) {
            return Err(Error::config(format!(
                "theta {j} is bound {} times, expected once",
                theta_seen[j]
            )));
        }
        Ok(Self {
            n_qubits,
            n_features,
            n_theta,
            n_blocks,
            gates,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
    pub fn n_features(&self) -> usize {
        self.n_features
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }
    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, GateOp::Cnot { .. })).count()
    }

    /// Gate index carrying `binding` (feature or theta), if any.
    pub fn gate_of(&self, binding: Binding) -> Option<usize> {
        self.gates.iter().position(|g| match (*g, binding) {
            (
                GateOp::Rotation {
                    binding: Binding::Feature(a),
                    ..
                },
                Binding::Feature(b),
            ) => a == b,
            (
                GateOp::Rotation {
                    binding: Binding::Theta(a),
                    ..
                },
                Binding::Theta(b),
            ) => a == b,
            _ => false,
        })
    }

    fn check_inputs(&self, z: &[f64], theta: &[f64]) -> Result<()> {
        if z.len() != self.n_features {
            return Err(Error::argument(format!(
                "feature vector has length {}, circuit expects n_f = {}",
                z.len(),
                self.n_features
            )));
        }
        if theta.len() != self.n_theta {
            return Err(Error::argument(format!(
                "parameter vector has length {}, circuit expects n_theta = {}",
                theta.len(),
                self.n_theta
            )));
        }
        Ok(())
    }

    /// Angle of every gate for these inputs (0 for CNOTs).
    pub fn gate_angles(&self, z: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(z, theta)?;
        Ok(self
            .gates
            .iter()
            .map(|g| match *g {
                GateOp::Rotation { binding, .. } => match binding {
                    Binding::Feature(i) => z[i],
                    Binding::Theta(j) => theta[j],
                    Binding::Fixed(a) => a,
                },
                GateOp::Cnot { .. } => 0.0,
            })
            .collect())
    }

    /// Run the program on `|0…0⟩` with explicit per-gate angles.
    pub fn run_angles(&self, angles: &[f64]) -> Result<StateVector> {
        self.run_angles_with(angles, |_, _| Ok(()))
    }

    fn run_angles_with<F>(&self, angles: &[f64], mut after_gate: F) -> Result<StateVector>
    where
        F: FnMut(&mut StateVector, &GateOp) -> Result<()>,
    {
        if angles.len() != self.gates.len() {
            return Err(Error::argument(format!(
                "{} angles supplied for {} gates",
                angles.len(),
                self.gates.len()
            )));
        }
        let mut state = StateVector::zero(self.n_qubits)?;
        for (gate, &angle) in self.gates.iter().zip(angles) {
            match *gate {
                GateOp::Rotation { axis, qubit, .. } => state.apply_rotation(axis, qubit, angle)?,
                GateOp::Cnot { control, target } => state.apply_cnot(control, target)?,
            }
            after_gate(&mut state, gate)?;
        }
        Ok(state)
    }

    /// Noiseless final state `U(theta) V(z) |0…0⟩`.
    pub fn execute(&self, z: &[f64], theta: &[f64]) -> Result<StateVector> {
        let angles = self.gate_angles(z, theta)?;
        self.run_angles(&angles)
    }

    /// One noisy trajectory: after each rotation a 1-qubit depolarizing
    /// draw hits its qubit, after each CNOT a 2-qubit draw hits both.
    pub fn execute_noisy<R: Rng + ?Sized>(
        &self,
        z: &[f64],
        theta: &[f64],
        model: &NoiseModel,
        rng: &mut R,
    ) -> Result<StateVector> {
        let angles = self.gate_angles(z, theta)?;
        self.run_angles_with(&angles, |state, gate| {
            match *gate {
                GateOp::Rotation { qubit, .. } => {
                    if let Some(p) = noise::sample_noise_1q(model.p1(), rng) {
                        state.apply_pauli(p, qubit)?;
                    }
                }
                GateOp::Cnot { control, target } => {
                    if let Some(pair) = noise::sample_noise_2q(model.p2(), rng) {
                        pair.apply(state, control, target)?;
                    }
                }
            }
            Ok(())
        })
    }
}

impl fmt::Display for CircuitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "circuit n_q={} n_f={} n_theta={} N_b={} gates={}",
            self.n_qubits,
            self.n_features,
            self.n_theta,
            self.n_blocks,
            self.gates.len()
        )?;
        for (i, g) in self.gates.iter().enumerate() {
            match *g {
                GateOp::Rotation { axis, qubit, binding } => {
                    let src = match binding {
                        Binding::Feature(k) => format!("z[{k}]"),
                        Binding::Theta(k) => format!("theta[{k}]"),
                        Binding::Fixed(a) => format!("{a}"),
                    };
                    writeln!(f, "{i:>4}  R{axis}    q{qubit:<6} {src}")?;
                }
                GateOp::Cnot { control, target } => {
                    writeln!(f, "{i:>4}  CNOT  q{control} -> q{target}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn build_encoder(n_qubits: usize, n_features: usize) -> Result<CircuitSpec> {
    build_encoder_with(n_qubits, n_features, EncoderLayout::Layerwise)
}

/// Feature `i` becomes a rotation on qubit `i mod n_q`; `layout` picks the
/// axis from the `(y, z, x)` cycle.
pub fn build_encoder_with(n_qubits: usize, n_features: usize, layout: EncoderLayout) -> Result<CircuitSpec> {
    if n_features == 0 {
        return Err(Error::argument("encoder needs n_f >= 1"));
    }
    let gates = (0..n_features)
        .map(|i| {
            let axis_idx = match layout {
                EncoderLayout::Layerwise => (i / n_qubits) % 3,
                EncoderLayout::PerGate => i % 3,
            };
            GateOp::Rotation {
                axis: ENCODER_AXES[axis_idx],
                qubit: i % n_qubits,
                binding: Binding::Feature(i),
            }
        })
        .collect();
    CircuitSpec::new(n_qubits, n_features, 0, 0, gates)
}

/// `n_blocks` blocks of `R_y(theta)` on every qubit followed by the open
/// CNOT ladder `(0,1), (1,2), ..., (n_q-2, n_q-1)`.
pub fn build_ansatz(n_qubits: usize, n_blocks: usize) -> Result<CircuitSpec> {
    if n_blocks == 0 {
        return Err(Error::config("ansatz needs N_b >= 1 blocks"));
    }
    if n_qubits < 2 {
        return Err(Error::config(format!(
            "ansatz needs n_q >= 2 for the entangling ladder, got {n_qubits}"
        )));
    }
    let mut gates = Vec::with_capacity(n_blocks * (2 * n_qubits - 1));
    for block in 0..n_blocks {
        for q in 0..n_qubits {
            gates.push(GateOp::Rotation {
                axis: Axis::Y,
                qubit: q,
                binding: Binding::Theta(block * n_qubits + q),
            });
        }
        for q in 0..n_qubits - 1 {
            gates.push(GateOp::Cnot {
                control: q,
                target: q + 1,
            });
        }
    }
    CircuitSpec::new(n_qubits, 0, n_blocks * n_qubits, n_blocks, gates)
}

/// Encoder gates followed by ansatz gates.
pub fn compose(encoder: &CircuitSpec, ansatz: &CircuitSpec) -> Result<CircuitSpec> {
    if encoder.n_qubits != ansatz.n_qubits {
        return Err(Error::config(format!(
            "encoder has {} qubits but ansatz has {}",
            encoder.n_qubits, ansatz.n_qubits
        )));
    }
    if encoder.n_features == 0 {
        return Err(Error::argument("encoder must bind at least one feature"));
    }
    if encoder.n_theta != 0 || ansatz.n_features != 0 {
        return Err(Error::argument(
            "compose expects a feature-only encoder and a theta-only ansatz",
        ));
    }
    let gates = encoder.gates.iter().chain(&ansatz.gates).copied().collect();
    CircuitSpec::new(
        encoder.n_qubits,
        encoder.n_features,
        ansatz.n_theta,
        ansatz.n_blocks,
        gates,
    )
}

/// `compose(build_encoder_with(..), build_ansatz(..))`.
pub fn classifier_circuit(
    n_qubits: usize,
    n_features: usize,
    n_blocks: usize,
    layout: EncoderLayout,
) -> Result<CircuitSpec> {
    compose(
        &build_encoder_with(n_qubits, n_features, layout)?,
        &build_ansatz(n_qubits, n_blocks)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation(g: &GateOp) -> (Axis, usize, Binding) {
        match *g {
            GateOp::Rotation { axis, qubit, binding } => (axis, qubit, binding),
            _ => panic!("expected rotation, got {g:?}"),
        }
    }

    #[test]
    fn encoder_first_layer_is_ry() {
        let enc = build_encoder(4, 4).unwrap();
        assert_eq!(enc.gates().len(), 4);
        for (i, g) in enc.gates().iter().enumerate() {
            assert_eq!(rotation(g), (Axis::Y, i, Binding::Feature(i)));
        }
    }

    #[test]
    fn encoder_second_layer_is_rz() {
        let enc = build_encoder(4, 8).unwrap();
        for (i, g) in enc.gates().iter().enumerate() {
            let axis = if i < 4 { Axis::Y } else { Axis::Z };
            assert_eq!(rotation(g), (axis, i % 4, Binding::Feature(i)));
        }
    }

    #[test]
    fn encoder_single_qubit_cycles_axes() {
        let enc = build_encoder(1, 3).unwrap();
        let axes: Vec<_> = enc.gates().iter().map(|g| rotation(g).0).collect();
        assert_eq!(axes, vec![Axis::Y, Axis::Z, Axis::X]);
        assert!(enc.gates().iter().all(|g| rotation(g).1 == 0));
    }

    #[test]
    fn per_gate_layout() {
        let enc = build_encoder_with(4, 6, EncoderLayout::PerGate).unwrap();
        let axes: Vec<_> = enc.gates().iter().map(|g| rotation(g).0).collect();
        assert_eq!(axes, vec![Axis::Y, Axis::Z, Axis::X, Axis::Y, Axis::Z, Axis::X]);
    }

    #[test]
    fn ansatz_shapes() {
        let a = build_ansatz(2, 1).unwrap();
        assert_eq!(
            a.gates(),
            &[
                GateOp::Rotation {
                    axis: Axis::Y,
                    qubit: 0,
                    binding: Binding::Theta(0)
                },
                GateOp::Rotation {
                    axis: Axis::Y,
                    qubit: 1,
                    binding: Binding::Theta(1)
                },
                GateOp::Cnot { control: 0, target: 1 },
            ]
        );
        let a = build_ansatz(4, 5).unwrap();
        assert_eq!(a.n_theta(), 20);
        assert_eq!(a.cnot_count(), 15);
        // theta index (block * n_q + qubit)
        assert_eq!(rotation(&a.gates()[7]), (Axis::Y, 0, Binding::Theta(4)));
        assert!(matches!(build_ansatz(2, 0), Err(Error::Config(_))));
        assert!(matches!(build_ansatz(1, 3), Err(Error::Config(_))));
    }

    #[test]
    fn compose_counts_and_guards() {
        let c = compose(&build_encoder(4, 8).unwrap(), &build_ansatz(4, 5).unwrap()).unwrap();
        assert_eq!(c.gates().len(), 43);
        assert_eq!((c.n_features(), c.n_theta(), c.n_blocks()), (8, 20, 5));
        assert!(matches!(rotation(&c.gates()[0]), (_, _, Binding::Feature(0))));
        assert!(matches!(
            compose(&build_encoder(3, 3).unwrap(), &build_ansatz(4, 1).unwrap()),
            Err(Error::Config(_))
        ));
        assert!(matches!(build_encoder(4, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn builders_are_pure() {
        assert_eq!(build_encoder(3, 7).unwrap(), build_encoder(3, 7).unwrap());
        assert_eq!(build_ansatz(3, 2).unwrap(), build_ansatz(3, 2).unwrap());
    }

    #[test]
    fn coverage_is_validated() {
        let dup = vec![
            GateOp::Rotation {
                axis: Axis::Y,
                qubit: 0,
                binding: Binding::Theta(0),
            },
            GateOp::Rotation {
                axis: Axis::Y,
                qubit: 1,
                binding: Binding::Theta(0),
            },
        ];
        assert!(CircuitSpec::new(2, 0, 2, 1, dup).is_err());
        let bad_qubit = vec![GateOp::Cnot { control: 0, target: 2 }];
        assert!(CircuitSpec::new(2, 0, 0, 0, bad_qubit).is_err());
    }

    #[test]
    fn execute_single_ry() {
        let enc = build_encoder(1, 1).unwrap();
        let p = enc.execute(&[PI], &[]).unwrap().probabilities();
        assert!(p[0].abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn execute_at_zero_angles_is_ground_state() {
        let c = classifier_circuit(4, 8, 3, EncoderLayout::Layerwise).unwrap();
        let s = c.execute(&[0.0; 8], &[0.0; 12]).unwrap();
        assert_eq!(s, StateVector::zero(4).unwrap());
    }

    #[test]
    fn execute_checks_lengths_and_is_deterministic() {
        let c = classifier_circuit(3, 3, 2, EncoderLayout::Layerwise).unwrap();
        assert!(matches!(c.execute(&[0.1; 2], &[0.0; 6]), Err(Error::Argument(_))));
        assert!(matches!(c.execute(&[0.1; 3], &[0.0; 5]), Err(Error::Argument(_))));
        let z = [0.3, -1.2, 2.0];
        let t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(c.execute(&z, &t).unwrap(), c.execute(&z, &t).unwrap());
    }

    #[test]
    fn listing_mentions_every_gate() {
        let c = classifier_circuit(2, 2, 1, EncoderLayout::Layerwise).unwrap();
        let text = c.to_string();
        assert!(text.starts_with("circuit n_q=2 n_f=2 n_theta=2 N_b=1 gates=5"));
        assert!(text.contains("Ry    q0      z[0]"));
        assert!(text.contains("CNOT  q0 -> q1"));
        assert_eq!(text.lines().count(), 6);
    }
}
