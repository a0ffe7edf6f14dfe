//! Gradients of the training loss and the Adam optimizer.
//!
//! The main path is an adjoint sweep over the state vector. Parameter-shift
//! and central differences are kept as independent cross-checks.

use std::f64::consts::FRAC_PI_2;

use crate::circuit::{Binding, CircuitSpec, GateOp};
use crate::loss::{loss_with_score_grad, BatchPrediction, LossBreakdown};
use crate::model::{Batch, Model, Readout, SampleForward};
use crate::noise::NoiseModel;
use crate::sim::StateVector;
use crate::{par, Error, Result};

/// Loss and its gradient with respect to every trainable parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub d_theta_c: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub loss: LossBreakdown,
}

impl GradientBundle {
    /// `[d_theta_c…, d_theta…]`, the layout of [`Model::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut g = self.d_theta_c.clone();
        g.extend_from_slice(&self.d_theta);
        g
    }
}

/// `∂⟨ψ|M|ψ⟩/∂angle_g` for every gate, given the final state `ψ` and
/// `λ = Mψ` for a Hermitian `M`. CNOT entries are zero.
pub fn adjoint_gate_gradients(
    circuit: &CircuitSpec,
    angles: &[f64],
    final_state: &StateVector,
    lambda: &StateVector,
) -> Result<Vec<f64>> {
    if angles.len() != circuit.gates().len() {
        return Err(Error::argument(format!(
            "{} angles supplied for {} gates",
            angles.len(),
            circuit.gates().len()
        )));
    }
    let mut psi = final_state.clone();
    let mut lam = lambda.clone();
    let mut grads = vec![0.0; angles.len()];
    for (g, gate) in circuit.gates().iter().enumerate().rev() {
        match *gate {
            GateOp::Rotation { axis, qubit, .. } => {
                let mut scratch = psi.clone();
                scratch.apply_pauli(axis.pauli(), qubit)?;
                grads[g] = lam.inner(&scratch).im;
                psi.apply_rotation(axis, qubit, -angles[g])?;
                lam.apply_rotation(axis, qubit, -angles[g])?;
            }
            GateOp::Cnot { control, target } => {
                psi.apply_cnot(control, target)?;
                lam.apply_cnot(control, target)?;
            }
        }
    }
    Ok(grads)
}

/// Gate-angle gradient of `Σ_φ w_φ P(φ)`.
pub fn adjoint_probability_gradient(
    circuit: &CircuitSpec,
    z: &[f64],
    theta: &[f64],
    weights: &[f64],
) -> Result<Vec<f64>> {
    let angles = circuit.gate_angles(z, theta)?;
    let state = circuit.run_angles(&angles)?;
    if weights.len() != state.dim() {
        return Err(Error::argument(format!(
            "{} weights for a {}-dimensional state",
            weights.len(),
            state.dim()
        )));
    }
    let lambda = weighted_diagonal(&state, weights)?;
    adjoint_gate_gradients(circuit, &angles, &state, &lambda)
}

fn weighted_diagonal(state: &StateVector, weights: &[f64]) -> Result<StateVector> {
    StateVector::from_unnormalized(state.amplitudes().iter().zip(weights).map(|(a, w)| a * w).collect())
}

/// `λ = M ψ` where `M` linearizes the loss in the circuit outputs.
fn loss_operator(model: &Model, state: &StateVector, output_grad: &[f64]) -> Result<StateVector> {
    match model.readout() {
        Readout::Yomo(_) => weighted_diagonal(state, output_grad),
        Readout::Vanilla(obs) => {
            let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); state.dim()];
            for (o, &b) in obs.iter().zip(output_grad) {
                let applied = o.apply(state)?;
                for (a, v) in acc.iter_mut().zip(applied.amplitudes()) {
                    *a += v * b;
                }
            }
            StateVector::from_unnormalized(acc)
        }
    }
}

/// Fold per-gate gradients into `(d_z, d_theta)`.
fn route_gate_gradients(circuit: &CircuitSpec, gate_grads: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut dz = vec![0.0; circuit.n_features()];
    let mut dtheta = vec![0.0; circuit.n_theta()];
    for (gate, &g) in circuit.gates().iter().zip(gate_grads) {
        if let GateOp::Rotation { binding, .. } = *gate {
            match binding {
                Binding::Feature(i) => dz[i] += g,
                Binding::Theta(j) => dtheta[j] += g,
                Binding::Fixed(_) => {}
            }
        }
    }
    (dz, dtheta)
}

fn forward_batch(model: &Model, batch: &Batch) -> Result<(Vec<SampleForward>, BatchPrediction)> {
    let fwds = par::map_slice(&batch.inputs, |_, x| model.forward(x))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let pred = BatchPrediction::new(fwds.iter().map(|f| f.scores.clone()).collect(), batch.labels.clone())?;
    Ok((fwds, pred))
}

fn sample_backward(model: &Model, fwd: &SampleForward, score_grad: &[f64]) -> Result<Vec<f64>> {
    let out_grad = model.output_grad(&fwd.outputs, score_grad)?;
    let lambda = loss_operator(model, &fwd.state, &out_grad)?;
    let angles = model.circuit.gate_angles(&fwd.z, &model.theta)?;
    let gate_grads = adjoint_gate_gradients(&model.circuit, &angles, &fwd.state, &lambda)?;
    let (dz, dtheta) = route_gate_gradients(&model.circuit, &gate_grads);
    let (mut flat, _) = model.extractor.backward(&fwd.cache, &dz)?;
    flat.extend(dtheta);
    Ok(flat)
}

/// Exact gradient of the batch loss by reverse-mode through the head, the
/// circuit and the extractor. Per-sample gradients are summed in sample
/// order.
pub fn backprop_gradients(model: &Model, batch: &Batch) -> Result<GradientBundle> {
    let (fwds, pred) = forward_batch(model, batch)?;
    let (loss, score_grads) = loss_with_score_grad(&pred, &model.loss, model.head());
    let per_sample = par::map_indexed(fwds.len(), |i| sample_backward(model, &fwds[i], &score_grads[i]));
    let mut total = vec![0.0; model.param_count()];
    for g in per_sample {
        for (t, v) in total.iter_mut().zip(g?) {
            *t += v;
        }
    }
    let d_theta = total.split_off(model.extractor.params().len());
    Ok(GradientBundle {
        d_theta_c: total,
        d_theta,
        loss,
    })
}

/// [`backprop_gradients`] for a run configured with `noise`. Training is
/// exact simulation only, so any non-trivial channel is refused.
pub fn backprop_gradients_under(model: &Model, batch: &Batch, noise: &NoiseModel) -> Result<GradientBundle> {
    if !noise.is_noiseless() {
        return Err(Error::Unsupported(format!(
            "training under noise model {noise} is not supported; gradients need exact simulation"
        )));
    }
    backprop_gradients(model, batch)
}

/// `[o(a_g + π/2) − o(a_g − π/2)] / 2` for every circuit output `o`.
fn shifted_output_derivative(model: &Model, angles: &[f64], gate: usize) -> Result<Vec<f64>> {
    let mut shifted = angles.to_vec();
    shifted[gate] = angles[gate] + FRAC_PI_2;
    let plus = model.outputs_of(&model.circuit.run_angles(&shifted)?)?;
    shifted[gate] = angles[gate] - FRAC_PI_2;
    let minus = model.outputs_of(&model.circuit.run_angles(&shifted)?)?;
    Ok(plus.iter().zip(&minus).map(|(p, m)| 0.5 * (p - m)).collect())
}

/// Parameter-shift derivative of the basis distribution with respect to the
/// gate carrying `binding`.
pub fn shift_probability_derivative(
    circuit: &CircuitSpec,
    z: &[f64],
    theta: &[f64],
    binding: Binding,
) -> Result<Vec<f64>> {
    let gate = circuit
        .gate_of(binding)
        .ok_or_else(|| Error::argument(format!("no gate carries {binding:?}")))?;
    let mut angles = circuit.gate_angles(z, theta)?;
    let a = angles[gate];
    angles[gate] = a + FRAC_PI_2;
    let plus = circuit.run_angles(&angles)?.probabilities();
    angles[gate] = a - FRAC_PI_2;
    let minus = circuit.run_angles(&angles)?.probabilities();
    Ok(plus.iter().zip(&minus).map(|(p, m)| 0.5 * (p - m)).collect())
}

/// One coordinate of the loss gradient, `param_index` into
/// [`Model::params`]. Ansatz angles are shifted directly; extractor
/// parameters get shifted encoder-angle derivatives chained through the
/// extractor Jacobian.
pub fn parameter_shift_gradient(model: &Model, batch: &Batch, param_index: usize) -> Result<f64> {
    let n_c = model.extractor.params().len();
    if param_index >= model.param_count() {
        return Err(Error::argument(format!(
            "parameter index {param_index} outside 0..{}",
            model.param_count()
        )));
    }
    let (fwds, pred) = forward_batch(model, batch)?;
    let (_, score_grads) = loss_with_score_grad(&pred, &model.loss, model.head());
    let per_sample = par::map_indexed(fwds.len(), |i| -> Result<f64> {
        let fwd = &fwds[i];
        let out_grad = model.output_grad(&fwd.outputs, &score_grads[i])?;
        let angles = model.circuit.gate_angles(&fwd.z, &model.theta)?;
        let d_loss_d_gate = |gate: usize| -> Result<f64> {
            let d = shifted_output_derivative(model, &angles, gate)?;
            Ok(d.iter().zip(&out_grad).map(|(a, b)| a * b).sum())
        };
        if param_index >= n_c {
            let gate = model
                .circuit
                .gate_of(Binding::Theta(param_index - n_c))
                .expect("every theta is bound");
            d_loss_d_gate(gate)
        } else {
            let dz = (0..model.circuit.n_features())
                .map(|f| d_loss_d_gate(model.circuit.gate_of(Binding::Feature(f)).expect("bound")))
                .collect::<Result<Vec<_>>>()?;
            Ok(model.extractor.backward(&fwd.cache, &dz)?.0[param_index])
        }
    });
    per_sample.into_iter().sum()
}

/// Every coordinate via [`parameter_shift_gradient`].
pub fn parameter_shift_gradients(model: &Model, batch: &Batch) -> Result<Vec<f64>> {
    (0..model.param_count())
        .map(|i| parameter_shift_gradient(model, batch, i))
        .collect()
}

/// Central differences of the total loss with step `h`.
pub fn finite_difference_gradient(model: &Model, batch: &Batch, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::argument(format!("step {h} must be positive")));
    }
    let base = model.params();
    let coords = par::map_indexed(base.len(), |i| -> Result<f64> {
        let mut probe = model.clone();
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p)?;
        let up = probe.batch_loss(batch)?.total;
        p[i] = base[i] - h;
        probe.set_params(&p)?;
        let down = probe.batch_loss(batch)?.total;
        Ok((up - down) / (2.0 * h))
    });
    coords.into_iter().collect()
}

/// `max|a − b| / max(‖a‖∞, ‖b‖∞, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / inf(a).max(inf(b)).max(1e-12)
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 5e-3;

    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::argument(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::EncoderLayout;
    use crate::extractor::{Architecture, FeatureExtractor};
    use crate::heads::Head;
    use crate::loss::LossConfig;
    use crate::model::ModelSpec;
    use crate::sim::Axis;

    fn single_ry() -> CircuitSpec {
        CircuitSpec::new(
            1,
            0,
            1,
            0,
            vec![GateOp::Rotation {
                axis: Axis::Y,
                qubit: 0,
                binding: Binding::Theta(0),
            }],
        )
        .unwrap()
    }

    #[test]
    fn shift_rule_on_single_rotation() {
        let c = single_ry();
        let d = shift_probability_derivative(&c, &[], &[FRAC_PI_2], Binding::Theta(0)).unwrap();
        assert!((d[1] - 0.5).abs() < 1e-12);
        let d = shift_probability_derivative(&c, &[], &[0.0], Binding::Theta(0)).unwrap();
        assert!(d[1].abs() < 1e-12);
        for theta in [0.0, 0.3, FRAC_PI_2, 2.0] {
            let shift = shift_probability_derivative(&c, &[], &[theta], Binding::Theta(0)).unwrap();
            let adj = adjoint_probability_gradient(&c, &[], &[theta], &[0.0, 1.0]).unwrap();
            assert!((shift[1] - adj[0]).abs() < 1e-9);
            assert!((adj[0] - 0.5 * theta.sin()).abs() < 1e-12);
        }
    }

    fn tiny_model(gamma: f64) -> Model {
        let spec = ModelSpec {
            head: Head::Yomo,
            n_qubits: 2,
            n_blocks: 1,
            n_classes: 4,
            input_dim: 2,
            n_features: 2,
            architecture: Architecture::Affine,
            layout: EncoderLayout::Layerwise,
        };
        let loss = LossConfig {
            gamma,
            omega: gamma,
            ..LossConfig::default()
        };
        let ext = FeatureExtractor::from_params(Architecture::Affine, 2, 2, vec![0.0; 6]).unwrap();
        Model::from_parts(spec, ext, vec![0.0; 2], loss).unwrap()
    }

    #[test]
    fn gradient_vanishes_at_certain_prediction() {
        let m = tiny_model(0.0);
        let x = [0.4, 0.7];
        let batch = Batch::new(vec![&x[..]], vec![0]).unwrap();
        let g = backprop_gradients(&m, &batch).unwrap();
        assert!(g.loss.total.abs() < 1e-15);
        assert!(g.flat().iter().all(|v| v.abs() < 1e-12), "{:?}", g.flat());
        let noisy = NoiseModel::new("x", 0.01, 0.01).unwrap();
        assert!(matches!(
            backprop_gradients_under(&m, &batch, &noisy),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn three_oracles_agree_on_a_small_model() {
        let spec = ModelSpec {
            head: Head::Vanilla,
            n_qubits: 4,
            n_blocks: 2,
            n_classes: 10,
            input_dim: 3,
            n_features: 5,
            architecture: Architecture::Mlp { hidden: 3 },
            layout: EncoderLayout::Layerwise,
        };
        let m = Model::init(spec, LossConfig::default(), 4).unwrap();
        let xs = [[0.2, 0.8, 0.5], [0.9, 0.1, 0.3]];
        let batch = Batch::new(xs.iter().map(|x| &x[..]).collect(), vec![3, 9]).unwrap();
        let bp = backprop_gradients(&m, &batch).unwrap().flat();
        let ps = parameter_shift_gradients(&m, &batch).unwrap();
        let fd = finite_difference_gradient(&m, &batch, 1e-5).unwrap();
        assert!(relative_error(&bp, &ps) < 1e-9);
        assert!(relative_error(&bp, &fd) < 1e-6);
        assert!(parameter_shift_gradient(&m, &batch, m.param_count()).is_err());
    }

    #[test]
    fn adam_rules() {
        let mut opt = AdamState::new(3, 0.01);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);

        let mut opt = AdamState::new(3, 0.01);
        let mut p = vec![0.0; 3];
        opt.step(&mut p, &[0.3, -7.0, 1e-3]).unwrap();
        for (v, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - s * 0.01).abs() < 2e-7, "{v}");
        }

        let mut a = AdamState::new(2, 0.1);
        let mut b = a.clone();
        let (mut pa, mut pb) = (vec![0.3, 0.4], vec![0.3, 0.4]);
        a.step(&mut pa, &[1.0, 2.0]).unwrap();
        b.step(&mut pb, &[1.0, 2.0]).unwrap();
        assert_eq!((pa, a), (pb, b));
        assert!(AdamState::new(2, 0.1).step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
