//! Hybrid classifier: extractor, encoder + ansatz circuit, and a readout head.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{classifier_circuit, CircuitSpec, EncoderLayout};
use crate::extractor::{Architecture, ExtractorCache, FeatureExtractor};
use crate::heads::{default_observables, expectation, vanilla_probs, ClassPartition, Head, Observable};
use crate::loss::{total_loss, BatchPrediction, LossBreakdown, LossConfig};
use crate::sim::StateVector;
use crate::{par, rng, Error, Result};

/// Shape of a classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub head: Head,
    pub n_qubits: usize,
    pub n_blocks: usize,
    pub n_classes: usize,
    pub input_dim: usize,
    pub n_features: usize,
    pub architecture: Architecture,
    pub layout: EncoderLayout,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config(format!("n_classes = {} must be >= 2", self.n_classes)));
        }
        match self.head {
            Head::Yomo => {
                ClassPartition::new(self.n_qubits, self.n_classes)?;
            }
            Head::Vanilla => {
                default_observables(self.n_qubits, self.n_classes)?;
            }
        }
        Ok(())
    }
}

/// How circuit outputs become class scores.
#[derive(Clone, Debug, PartialEq)]
pub enum Readout {
    /// Outputs are basis probabilities, scores their per-class means.
    Yomo(ClassPartition),
    /// Outputs are Pauli expectations, scores their softmax.
    Vanilla(Vec<Observable>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    pub extractor: FeatureExtractor,
    pub circuit: CircuitSpec,
    pub theta: Vec<f64>,
    pub loss: LossConfig,
    readout: Readout,
}

/// Everything a single noiseless forward pass produced.
#[derive(Clone, Debug)]
pub struct SampleForward {
    pub(crate) cache: ExtractorCache,
    pub z: Vec<f64>,
    pub state: StateVector,
    /// Basis probabilities (Yomo) or expectations (Vanilla).
    pub outputs: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Borrowed inputs and labels.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: Vec<&'a [f64]>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::argument(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Model {
    /// Fresh model: extractor per its init rule, ansatz angles uniform in
    /// `[-π, π)`.
    pub fn init(spec: ModelSpec, loss: LossConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        loss.validate()?;
        let mut ext_rng = rng::stream(seed, &[0x6578]);
        let extractor = FeatureExtractor::init(spec.architecture, spec.input_dim, spec.n_features, &mut ext_rng)?;
        let circuit = classifier_circuit(spec.n_qubits, spec.n_features, spec.n_blocks, spec.layout)?;
        let mut theta_rng = rng::stream(seed, &[0x7468]);
        let theta = (0..circuit.n_theta())
            .map(|_| theta_rng.random_range(-PI..PI))
            .collect();
        Self::from_parts(spec, extractor, theta, loss)
    }

    pub fn from_parts(spec: ModelSpec, extractor: FeatureExtractor, theta: Vec<f64>, loss: LossConfig) -> Result<Self> {
        spec.validate()?;
        loss.validate()?;
        if extractor.input_dim() != spec.input_dim
            || extractor.output_dim() != spec.n_features
            || extractor.architecture() != spec.architecture
        {
            return Err(Error::config("extractor shape does not match model spec"));
        }
        let circuit = classifier_circuit(spec.n_qubits, spec.n_features, spec.n_blocks, spec.layout)?;
        if theta.len() != circuit.n_theta() {
            return Err(Error::argument(format!(
                "{} ansatz angles supplied, circuit has {}",
                theta.len(),
                circuit.n_theta()
            )));
        }
        let readout = match spec.head {
            Head::Yomo => Readout::Yomo(ClassPartition::new(spec.n_qubits, spec.n_classes)?),
            Head::Vanilla => Readout::Vanilla(default_observables(spec.n_qubits, spec.n_classes)?),
        };
        Ok(Self {
            spec,
            extractor,
            circuit,
            theta,
            loss,
            readout,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn head(&self) -> Head {
        self.spec.head
    }

    pub fn readout(&self) -> &Readout {
        &self.readout
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    /// Length of the flat parameter vector `[θc…, θ…]`.
    pub fn param_count(&self) -> usize {
        self.extractor.params().len() + self.theta.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.extractor.params().to_vec();
        p.extend_from_slice(&self.theta);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::argument(format!(
                "{} parameters supplied, model has {}",
                params.len(),
                self.param_count()
            )));
        }
        let (c, q) = params.split_at(self.extractor.params().len());
        self.extractor.params_mut().copy_from_slice(c);
        self.theta.copy_from_slice(q);
        Ok(())
    }

    /// Encoding angles for one input.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.extractor.forward(x)?.0)
    }

    /// Noiseless final state for one input.
    pub fn final_state(&self, x: &[f64]) -> Result<StateVector> {
        let z = self.features(x)?;
        self.circuit.execute(&z, &self.theta)
    }

    /// Circuit outputs feeding the head for a given state.
    pub fn outputs_of(&self, state: &StateVector) -> Result<Vec<f64>> {
        match &self.readout {
            Readout::Yomo(_) => Ok(state.probabilities()),
            Readout::Vanilla(obs) => obs.iter().map(|o| expectation(state, o)).collect(),
        }
    }

    /// Class scores from circuit outputs.
    pub fn scores_from_outputs(&self, outputs: &[f64]) -> Result<Vec<f64>> {
        match &self.readout {
            Readout::Yomo(part) => {
                let mean = part.aggregate_mean(outputs)?;
                if self.loss.renormalize {
                    let total: f64 = mean.iter().sum();
                    Ok(mean.into_iter().map(|m| m / total).collect())
                } else {
                    Ok(mean)
                }
            }
            Readout::Vanilla(_) => Ok(vanilla_probs(outputs)),
        }
    }

    /// `∂L/∂outputs` given `∂L/∂scores` and the outputs themselves.
    pub fn output_grad(&self, outputs: &[f64], score_grad: &[f64]) -> Result<Vec<f64>> {
        match &self.readout {
            Readout::Yomo(part) => {
                let mut g = score_grad.to_vec();
                if self.loss.renormalize {
                    let mean = part.aggregate_mean(outputs)?;
                    let total: f64 = mean.iter().sum();
                    let dot: f64 = score_grad.iter().zip(&mean).map(|(a, m)| a * m / total).sum();
                    for gk in &mut g {
                        *gk = (*gk - dot) / total;
                    }
                }
                Ok((0..outputs.len())
                    .map(|phi| {
                        let k = part.class_of(phi);
                        g[k] / part.set(k).len() as f64
                    })
                    .collect())
            }
            Readout::Vanilla(_) => {
                let s = vanilla_probs(outputs);
                let dot: f64 = score_grad.iter().zip(&s).map(|(a, b)| a * b).sum();
                Ok(s.iter().zip(score_grad).map(|(sk, gk)| sk * (gk - dot)).collect())
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<SampleForward> {
        let (z, cache) = self.extractor.forward(x)?;
        let state = self.circuit.execute(&z, &self.theta)?;
        let outputs = self.outputs_of(&state)?;
        let scores = self.scores_from_outputs(&outputs)?;
        Ok(SampleForward {
            cache,
            z,
            state,
            outputs,
            scores,
        })
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.scores)
    }

    /// Noiseless scores for every sample.
    pub fn predict_batch(&self, batch: &Batch) -> Result<BatchPrediction> {
        let scores = par::map_slice(&batch.inputs, |_, x| self.scores(x))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        BatchPrediction::new(scores, batch.labels.clone())
    }

    pub fn batch_loss(&self, batch: &Batch) -> Result<LossBreakdown> {
        let pred = self.predict_batch(batch)?;
        Ok(total_loss(&pred, &self.loss, self.head()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(head: Head) -> ModelSpec {
        ModelSpec {
            head,
            n_qubits: 4,
            n_blocks: 2,
            n_classes: 4,
            input_dim: 6,
            n_features: 4,
            architecture: Architecture::Affine,
            layout: EncoderLayout::Layerwise,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = Model::init(spec(Head::Yomo), LossConfig::default(), 9).unwrap();
        let b = Model::init(spec(Head::Yomo), LossConfig::default(), 9).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.param_count(), 6 * 4 + 4 + 8);
        let c = Model::init(spec(Head::Yomo), LossConfig::default(), 10).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn param_round_trip() {
        let mut m = Model::init(spec(Head::Vanilla), LossConfig::default(), 1).unwrap();
        let p: Vec<f64> = (0..m.param_count()).map(|i| i as f64 * 0.01).collect();
        m.set_params(&p).unwrap();
        assert_eq!(m.params(), p);
        assert!(m.set_params(&p[1..]).is_err());
    }

    #[test]
    fn scores_are_distributions() {
        let x = [0.1, 0.9, 0.3, 0.0, 0.5, 0.7];
        let v = Model::init(spec(Head::Vanilla), LossConfig::default(), 2).unwrap();
        let s = v.scores(&x).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let loss = LossConfig {
            renormalize: true,
            ..LossConfig::default()
        };
        let y = Model::init(spec(Head::Yomo), loss, 2).unwrap();
        let s = y.scores(&x).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_guards() {
        let mut s = spec(Head::Yomo);
        s.n_classes = 17;
        assert!(Model::init(s, LossConfig::default(), 0).is_err());
        let mut s = spec(Head::Vanilla);
        s.n_qubits = 3;
        assert!(Model::init(s, LossConfig::default(), 0).is_err());
    }
}
