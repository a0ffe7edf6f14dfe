//! Finite- and infinite-shot prediction for both heads.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::circuit::CircuitSpec;
use crate::heads::{predict_class, vanilla_probs, ClassPartition, Observable};
use crate::model::{Model, Readout};
use crate::noise::{trajectory_average, NoiseEvalConfig, NoiseModel};
use crate::sim::{Axis, BasisSampler, Pauli, StateVector};
use crate::{par, rng, Error, Result};

/// Number of measurement shots, or the exact limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShotBudget {
    Finite(u64),
    Infinite,
}

impl ShotBudget {
    pub fn finite(self) -> Option<u64> {
        match self {
            ShotBudget::Finite(n) => Some(n),
            ShotBudget::Infinite => None,
        }
    }
}

impl fmt::Display for ShotBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShotBudget::Finite(n) => write!(f, "{n}"),
            ShotBudget::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for ShotBudget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(ShotBudget::Infinite);
        }
        match s.parse::<u64>() {
            Ok(n) if n >= 1 => Ok(ShotBudget::Finite(n)),
            _ => Err(Error::config(format!("shots {s:?} must be an integer >= 1 or \"inf\""))),
        }
    }
}

impl Serialize for ShotBudget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ShotBudget::Finite(n) => s.serialize_u64(*n),
            ShotBudget::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ShotBudget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(n) => n.to_string(),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a measurement is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementBasis {
    Computational,
    /// `RX(π/2)` on every qubit before measuring, mapping `Y` to `Z`.
    YRotated,
}

/// How a finite budget is split across measurement bases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Allocation {
    /// Alternate shots between non-empty groups, computational first.
    #[default]
    RoundRobin,
    /// Every shot in the computational basis.
    AllToZ,
    /// Proportional to observable count, remainder to the first group.
    Proportional,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisGroup {
    pub basis: MeasurementBasis,
    /// Indices into the observable list.
    pub observables: Vec<usize>,
    pub shots: u64,
}

/// Shot allocation for expectation estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotPlan {
    pub total: ShotBudget,
    pub groups: Vec<BasisGroup>,
}

fn basis_of(obs: &Observable) -> Result<MeasurementBasis> {
    if obs.only(Pauli::Z) {
        Ok(MeasurementBasis::Computational)
    } else if obs.only(Pauli::Y) {
        Ok(MeasurementBasis::YRotated)
    } else {
        Err(Error::Unsupported(format!(
            "observable {obs} mixes bases; only Z-only and Y-only strings can be sampled"
        )))
    }
}

impl ShotPlan {
    pub fn new(observables: &[Observable], total: ShotBudget, allocation: Allocation) -> Result<Self> {
        let mut groups = vec![
            BasisGroup {
                basis: MeasurementBasis::Computational,
                observables: Vec::new(),
                shots: 0,
            },
            BasisGroup {
                basis: MeasurementBasis::YRotated,
                observables: Vec::new(),
                shots: 0,
            },
        ];
        for (i, o) in observables.iter().enumerate() {
            match basis_of(o)? {
                MeasurementBasis::Computational => groups[0].observables.push(i),
                MeasurementBasis::YRotated => groups[1].observables.push(i),
            }
        }
        if let ShotBudget::Finite(n) = total {
            let active: Vec<usize> = (0..2).filter(|&g| !groups[g].observables.is_empty()).collect();
            match allocation {
                Allocation::AllToZ => groups[0].shots = n,
                Allocation::RoundRobin => {
                    let m = active.len().max(1) as u64;
                    for (rank, &g) in active.iter().enumerate() {
                        groups[g].shots = n / m + u64::from((rank as u64) < n % m);
                    }
                }
                Allocation::Proportional => {
                    let total_obs = observables.len().max(1) as u64;
                    let mut assigned = 0;
                    for &g in &active {
                        groups[g].shots = n * groups[g].observables.len() as u64 / total_obs;
                        assigned += groups[g].shots;
                    }
                    if let Some(&first) = active.first() {
                        groups[first].shots += n - assigned;
                    }
                }
            }
        }
        Ok(Self { total, groups })
    }

    /// Shots assigned across groups.
    pub fn allocated(&self) -> u64 {
        self.groups.iter().map(|g| g.shots).sum()
    }
}

/// Outcome of one prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionOutcome {
    pub class: usize,
    /// Vote counts (finite-shot majority voting) or scores.
    pub tallies: Vec<f64>,
    /// `None` for the exact path.
    pub shots_used: Option<u64>,
}

/// Majority vote over `budget` bitstrings drawn from `probs`, or the
/// argmax of per-class means for the exact path.
pub fn predict_yomo_shots<R: Rng + ?Sized>(
    probs: &[f64],
    partition: &ClassPartition,
    budget: ShotBudget,
    rng: &mut R,
) -> Result<PredictionOutcome> {
    match budget {
        ShotBudget::Infinite => {
            let scores = partition.aggregate_mean(probs)?;
            Ok(PredictionOutcome {
                class: predict_class(&scores)?,
                tallies: scores,
                shots_used: None,
            })
        }
        ShotBudget::Finite(n) => {
            if probs.len() != 1 << partition.n_qubits() {
                return Err(Error::argument(format!(
                    "distribution has {} entries, partition covers {}",
                    probs.len(),
                    1usize << partition.n_qubits()
                )));
            }
            let sampler = BasisSampler::new(probs)?;
            let mut votes = vec![0.0; partition.n_classes()];
            for _ in 0..n {
                votes[partition.class_of(sampler.draw(rng))] += 1.0;
            }
            Ok(PredictionOutcome {
                class: predict_class(&votes)?,
                tallies: votes,
                shots_used: Some(n),
            })
        }
    }
}

/// Computational-basis and Y-rotated distributions of one circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisDistributions {
    pub computational: Vec<f64>,
    pub y_rotated: Vec<f64>,
}

/// Distribution after `RX(π/2)` on every qubit.
pub fn y_basis_probabilities(state: &StateVector) -> Result<Vec<f64>> {
    let mut rotated = state.clone();
    for q in 0..state.n_qubits() {
        rotated.apply_rotation(Axis::X, q, FRAC_PI_2)?;
    }
    Ok(rotated.probabilities())
}

impl BasisDistributions {
    pub fn of_state(state: &StateVector) -> Result<Self> {
        Ok(Self {
            computational: state.probabilities(),
            y_rotated: y_basis_probabilities(state)?,
        })
    }
}

fn parity_mask(obs: &Observable) -> usize {
    let n = obs.len();
    obs.support().fold(0, |m, (q, _)| m | (1 << (n - 1 - q)))
}

fn eigenvalue(index: usize, mask: usize) -> f64 {
    if (index & mask).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Exact expectations read off the two distributions.
pub fn exact_expectations(dist: &BasisDistributions, observables: &[Observable]) -> Result<Vec<f64>> {
    observables
        .iter()
        .map(|o| {
            let p = match basis_of(o)? {
                MeasurementBasis::Computational => &dist.computational,
                MeasurementBasis::YRotated => &dist.y_rotated,
            };
            let mask = parity_mask(o);
            Ok(p.iter().enumerate().map(|(i, &pi)| pi * eigenvalue(i, mask)).sum())
        })
        .collect()
}

/// Sample-mean expectations following `plan`. Observables whose group got
/// no shots are estimated as 0.
pub fn estimate_expectations<R: Rng + ?Sized>(
    dist: &BasisDistributions,
    observables: &[Observable],
    plan: &ShotPlan,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if plan.total == ShotBudget::Infinite {
        return exact_expectations(dist, observables);
    }
    let mut mu = vec![0.0; observables.len()];
    for group in &plan.groups {
        if group.shots == 0 || group.observables.is_empty() {
            continue;
        }
        let p = match group.basis {
            MeasurementBasis::Computational => &dist.computational,
            MeasurementBasis::YRotated => &dist.y_rotated,
        };
        let sample = BasisSampler::new(p)?.sample_counts(group.shots, rng)?;
        for &k in &group.observables {
            let mask = parity_mask(&observables[k]);
            let signed: f64 = sample
                .counts
                .iter()
                .map(|(&idx, &c)| eigenvalue(idx, mask) * c as f64)
                .sum();
            mu[k] = signed / group.shots as f64;
        }
    }
    Ok(mu)
}

/// Softmax-argmax over estimated expectations.
pub fn predict_vanilla_shots<R: Rng + ?Sized>(
    dist: &BasisDistributions,
    observables: &[Observable],
    plan: &ShotPlan,
    rng: &mut R,
) -> Result<PredictionOutcome> {
    let mu = estimate_expectations(dist, observables, plan, rng)?;
    let scores = vanilla_probs(&mu);
    Ok(PredictionOutcome {
        class: predict_class(&scores)?,
        tallies: scores,
        shots_used: plan.total.finite(),
    })
}

/// Depolarizing channel and trajectory count used at evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSetting {
    pub model: NoiseModel,
    pub trajectories: usize,
}

/// Readout distributions for one input, exact or trajectory-averaged.
/// Basis-change rotations are applied noiselessly.
pub fn readout_distributions(
    model: &Model,
    x: &[f64],
    noise: Option<&NoiseSetting>,
    trajectory_seed: u64,
) -> Result<BasisDistributions> {
    let z = model.features(x)?;
    let needs_y = matches!(model.readout(), Readout::Vanilla(_));
    match noise {
        Some(setting) if !setting.model.is_noiseless() => {
            noisy_distributions(&model.circuit, &z, &model.theta, setting, trajectory_seed, needs_y)
        }
        _ => {
            let state = model.circuit.execute(&z, &model.theta)?;
            Ok(BasisDistributions {
                computational: state.probabilities(),
                y_rotated: if needs_y {
                    y_basis_probabilities(&state)?
                } else {
                    Vec::new()
                },
            })
        }
    }
}

fn noisy_distributions(
    circuit: &CircuitSpec,
    z: &[f64],
    theta: &[f64],
    setting: &NoiseSetting,
    seed: u64,
    needs_y: bool,
) -> Result<BasisDistributions> {
    let cfg = NoiseEvalConfig::new(setting.trajectories, seed)?;
    let dim = 1usize << circuit.n_qubits();
    let width = if needs_y { 2 * dim } else { dim };
    let mut avg = trajectory_average(circuit, z, theta, &setting.model, &cfg, width, |state, acc| {
        for (a, amp) in acc.iter_mut().zip(state.amplitudes()) {
            *a += amp.norm_sqr();
        }
        if needs_y {
            let py = y_basis_probabilities(state).expect("state is well formed");
            for (a, p) in acc[dim..].iter_mut().zip(py) {
                *a += p;
            }
        }
    })?;
    let y_rotated = avg.split_off(dim);
    Ok(BasisDistributions {
        computational: avg,
        y_rotated,
    })
}

/// Evaluation protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub shots: ShotBudget,
    pub repeats: usize,
    pub seed: u64,
    pub noise: Option<NoiseSetting>,
    pub allocation: Allocation,
}

impl EvalOptions {
    pub fn new(shots: ShotBudget, repeats: usize, seed: u64) -> Self {
        Self {
            shots,
            repeats,
            seed,
            noise: None,
            allocation: Allocation::RoundRobin,
        }
    }
}

/// Accuracy averaged over repeats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyReport {
    pub accuracy: f64,
    /// Standard error of the mean over repeats; 0 for exact evaluation.
    pub std_err: f64,
    pub repeats: usize,
}

const TRAJECTORY_TAG: u64 = 0x7472616a;
const SHOT_TAG: u64 = 0x73686f74;

/// Test accuracy of `model` under `opts`. Sample `i`, repeat `r` draws its
/// shots from stream `(seed, i, r)`, so results do not depend on the
/// scheduling order.
pub fn evaluate_accuracy(
    model: &Model,
    inputs: &[&[f64]],
    labels: &[usize],
    opts: &EvalOptions,
) -> Result<AccuracyReport> {
    if inputs.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::argument("cannot evaluate on an empty dataset"));
    }
    if opts.repeats == 0 {
        return Err(Error::config("repeats must be >= 1"));
    }
    let plan = match model.readout() {
        Readout::Vanilla(obs) => Some(ShotPlan::new(obs, opts.shots, opts.allocation)?),
        Readout::Yomo(_) => None,
    };
    let repeats = if opts.shots == ShotBudget::Infinite {
        1
    } else {
        opts.repeats
    };
    // hits[i][r]
    let hits = par::map_slice(inputs, |i, x| -> Result<Vec<bool>> {
        let traj_seed = rng::derive(opts.seed, &[TRAJECTORY_TAG, i as u64]);
        let dist = readout_distributions(model, x, opts.noise.as_ref(), traj_seed)?;
        (0..repeats)
            .map(|r| {
                let mut stream = rng::stream(opts.seed, &[SHOT_TAG, i as u64, r as u64]);
                let outcome = match (model.readout(), &plan) {
                    (Readout::Yomo(part), _) => predict_yomo_shots(&dist.computational, part, opts.shots, &mut stream)?,
                    (Readout::Vanilla(obs), Some(plan)) => predict_vanilla_shots(&dist, obs, plan, &mut stream)?,
                    (Readout::Vanilla(_), None) => unreachable!("plan built for vanilla"),
                };
                Ok(outcome.class == labels[i])
            })
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let n = inputs.len() as f64;
    let per_repeat: Vec<f64> = (0..repeats)
        .map(|r| hits.iter().filter(|h| h[r]).count() as f64 / n)
        .collect();
    let mean = per_repeat.iter().sum::<f64>() / repeats as f64;
    let std_err = if repeats > 1 {
        let var = per_repeat.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
        (var / repeats as f64).sqrt()
    } else {
        0.0
    };
    Ok(AccuracyReport {
        accuracy: mean,
        std_err,
        repeats,
    })
}
