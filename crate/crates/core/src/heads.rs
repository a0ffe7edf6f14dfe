//! Classifier heads.
//!
//! * Probability aggregation: basis states are split into `K` consecutive
//!   groups and a class score is the mean probability of its group.
//! * Pauli expectation: one Pauli-string observable per class, softmax over
//!   the expectation values.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sim::{Pauli, StateVector};
use crate::{Error, Result};

/// Which output mechanism a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Probability aggregation over basis-state groups.
    Yomo,
    /// Softmax over Pauli-string expectation values.
    Vanilla,
}

impl Head {
    pub fn as_str(self) -> &'static str {
        match self {
            Head::Yomo => "yomo",
            Head::Vanilla => "vanilla",
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yomo" => Ok(Head::Yomo),
            "vanilla" => Ok(Head::Vanilla),
            other => Err(Error::config(format!("head: unknown head {other:?} (yomo|vanilla)"))),
        }
    }
}

/// Assignment of basis states to classes by index order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPartition {
    n_qubits: usize,
    sets: Vec<Range<usize>>,
    class_of: Vec<usize>,
}

impl ClassPartition {
    /// Each class gets `floor(2^n / K)` consecutive states; the remaining
    /// `r` states go one each to the first `r` classes.
    pub fn new(n_qubits: usize, n_classes: usize) -> Result<Self> {
        if !(1..=crate::sim::MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::config(format!("n_qubits = {n_qubits} out of range")));
        }
        let dim = 1usize << n_qubits;
        if n_classes == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        if n_classes > dim {
            return Err(Error::config(format!(
                "more classes than basis states: K = {n_classes} > 2^{n_qubits} = {dim}"
            )));
        }
        let base = dim / n_classes;
        let extra = dim - base * n_classes;
        let mut sets = Vec::with_capacity(n_classes);
        let mut class_of = vec![0; dim];
        let mut start = 0;
        for k in 0..n_classes {
            let len = base + usize::from(k < extra);
            class_of[start..start + len].fill(k);
            sets.push(start..start + len);
            start += len;
        }
        Ok(Self {
            n_qubits,
            sets,
            class_of,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_classes(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, class: usize) -> Range<usize> {
        self.sets[class].clone()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.len()).collect()
    }

    /// Class of basis state `index`.
    pub fn class_of(&self, index: usize) -> usize {
        self.class_of[index]
    }

    fn check(&self, probs: &[f64]) -> Result<()> {
        if probs.len() != self.class_of.len() {
            return Err(Error::argument(format!(
                "distribution has {} entries, partition covers {}",
                probs.len(),
                self.class_of.len()
            )));
        }
        Ok(())
    }

    /// Mean probability per group: `p_k = (1/|S_k|) Σ_{φ∈S_k} P(φ)`.
    pub fn aggregate_mean(&self, probs: &[f64]) -> Result<Vec<f64>> {
        self.check(probs)?;
        Ok(self
            .sets
            .iter()
            .map(|s| probs[s.clone()].iter().sum::<f64>() / s.len() as f64)
            .collect())
    }

    /// Total probability per group; the distribution of a single shot's
    /// class label.
    pub fn aggregate_sum(&self, probs: &[f64]) -> Result<Vec<f64>> {
        self.check(probs)?;
        Ok(self.sets.iter().map(|s| probs[s.clone()].iter().sum::<f64>()).collect())
    }
}

/// Convenience wrapper over [`ClassPartition::new`].
pub fn build_partition(n_qubits: usize, n_classes: usize) -> Result<ClassPartition> {
    ClassPartition::new(n_qubits, n_classes)
}

/// Index of the largest score; ties go to the smallest index.
pub fn predict_class(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::argument("cannot take argmax of an empty score vector"));
    }
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Tensor product of single-qubit Paulis; `None` is the identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Observable {
    paulis: Vec<Option<Pauli>>,
}

impl Observable {
    pub fn new(paulis: Vec<Option<Pauli>>) -> Result<Self> {
        if paulis.is_empty() {
            return Err(Error::argument("observable must act on at least one qubit"));
        }
        Ok(Self { paulis })
    }

    pub fn len(&self) -> usize {
        self.paulis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paulis.is_empty()
    }

    pub fn paulis(&self) -> &[Option<Pauli>] {
        &self.paulis
    }

    /// Pad with identities on the right up to `n_qubits`.
    pub fn padded(&self, n_qubits: usize) -> Result<Self> {
        if n_qubits < self.paulis.len() {
            return Err(Error::argument(format!(
                "cannot pad a {}-qubit observable to {n_qubits} qubits",
                self.paulis.len()
            )));
        }
        let mut paulis = self.paulis.clone();
        paulis.resize(n_qubits, None);
        Ok(Self { paulis })
    }

    /// Qubits carrying a non-identity factor.
    pub fn support(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        self.paulis.iter().enumerate().filter_map(|(q, p)| p.map(|p| (q, p)))
    }

    /// `true` if every non-identity factor is `pauli`.
    pub fn only(&self, pauli: Pauli) -> bool {
        self.support().all(|(_, p)| p == pauli)
    }

    /// `O|state⟩`.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let mut out = state.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, state: &mut StateVector) -> Result<()> {
        if self.paulis.len() != state.n_qubits() {
            return Err(Error::argument(format!(
                "observable acts on {} qubits, state has {}",
                self.paulis.len(),
                state.n_qubits()
            )));
        }
        for (q, p) in self.support() {
            state.apply_pauli(p, q)?;
        }
        Ok(())
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.paulis {
            let c = p.map_or('I', Pauli::symbol);
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let paulis = s
            .trim()
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(None),
                'X' => Ok(Some(Pauli::X)),
                'Y' => Ok(Some(Pauli::Y)),
                'Z' => Ok(Some(Pauli::Z)),
                other => Err(Error::argument(format!("invalid Pauli symbol {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(paulis)
    }
}

const DEFAULT_OBSERVABLES: [&str; 10] = [
    "ZIII", "IZII", "IIZI", "IIIZ", "ZZII", "ZIZI", "IZZI", "IIZZ", "YIYI", "IYIY",
];

/// The fixed 10-string observable set on the first four qubits, padded with
/// identities to `n_qubits`. Returns the first `n_classes` strings.
pub fn default_observables(n_qubits: usize, n_classes: usize) -> Result<Vec<Observable>> {
    if n_qubits < 4 {
        return Err(Error::config(format!(
            "default observables need n_q >= 4, got {n_qubits}"
        )));
    }
    if n_classes == 0 || n_classes > DEFAULT_OBSERVABLES.len() {
        return Err(Error::config(format!(
            "default observable set supports 1..=10 classes, got K = {n_classes}"
        )));
    }
    DEFAULT_OBSERVABLES[..n_classes]
        .iter()
        .map(|s| s.parse::<Observable>()?.padded(n_qubits))
        .collect()
}

/// Exact `⟨ψ|O|ψ⟩`.
pub fn expectation(state: &StateVector, obs: &Observable) -> Result<f64> {
    let applied = obs.apply(state)?;
    Ok(state.inner(&applied).re)
}

/// Softmax `exp(μ_k) / Σ_j exp(μ_j)`, shifted by the maximum for stability.
pub fn vanilla_probs(mu: &[f64]) -> Vec<f64> {
    let max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = mu.iter().map(|m| (m - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
