//! Depolarizing noise: hardware presets, Pauli-trajectory sampling, and an
//! exact density-matrix oracle for small registers.
//!
//! A depolarizing channel with probability `p` leaves the state alone with
//! probability `1 - p` and otherwise applies a uniformly random
//! non-identity Pauli (3 choices on one qubit, 15 on two).

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;

use crate::circuit::{CircuitSpec, GateOp};
use crate::sim::{rotation_matrix, Matrix2, Pauli, StateVector};
use crate::{par, rng, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    name: String,
    p1: f64,
    p2: f64,
}

impl NoiseModel {
    pub fn new(name: impl Into<String>, p1: f64, p2: f64) -> Result<Self> {
        for (field, p) in [("p1", p1), ("p2", p2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{field} = {p} is not a probability in [0, 1]")));
            }
        }
        Ok(Self {
            name: name.into(),
            p1,
            p2,
        })
    }

    /// `p1 = p2 = 0`.
    pub fn noiseless() -> Self {
        Self {
            name: "noiseless".into(),
            p1: 0.0,
            p2: 0.0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn p1(&self) -> f64 {
        self.p1
    }
    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0
    }

    /// Same model with both probabilities multiplied by `factor` (capped at 1).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            format!("{}x{factor}", self.name),
            (self.p1 * factor).min(1.0),
            (self.p2 * factor).min(1.0),
        )
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (p1={}, p2={})", self.name, self.p1, self.p2)
    }
}

const PRESET_TABLE: [(&str, f64, f64); 4] = [
    ("IBM_Pittsburgh", 2.02e-4, 1.69e-3),
    ("Google Willow", 3.5e-4, 3.3e-3),
    ("Quantinuum H1-1", 1.8e-5, 9.7e-4),
    ("IonQ Forte", 2e-4, 4e-3),
];

/// Published 1Q/2Q error rates of four devices, used as depolarizing
/// probabilities.
pub fn presets() -> Vec<NoiseModel> {
    PRESET_TABLE
        .iter()
        .map(|&(name, p1, p2)| NoiseModel {
            name: name.into(),
            p1,
            p2,
        })
        .collect()
}

fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Look up a preset by name, ignoring case, spaces, `_` and `-`.
pub fn preset(name: &str) -> Result<NoiseModel> {
    let key = normalize_name(name);
    presets()
        .into_iter()
        .find(|m| normalize_name(&m.name) == key)
        .ok_or_else(|| {
            let known: Vec<_> = PRESET_TABLE.iter().map(|p| p.0).collect();
            Error::config(format!("unknown noise preset {name:?}; known: {}", known.join(", ")))
        })
}

/// Resolve a noise spec: `none`/`noiseless`, a preset name, or `p1:p2`.
pub fn parse_noise(spec: &str) -> Result<NoiseModel> {
    let trimmed = spec.trim();
    if matches!(normalize_name(trimmed).as_str(), "none" | "noiseless") {
        return Ok(NoiseModel::noiseless());
    }
    if let Some((a, b)) = trimmed.split_once(':') {
        let parse = |s: &str, field: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("noise {field}: cannot parse {s:?}")))
        };
        return NoiseModel::new(trimmed, parse(a, "p1")?, parse(b, "p2")?);
    }
    preset(trimmed)
}

/// Preset table as CSV (`name,p1,p2`). Probabilities use the shortest
/// decimal form that round-trips to the same `f64`.
pub fn write_presets_csv<W: Write>(out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "p1", "p2"])?;
    for m in presets() {
        w.write_record([m.name.clone(), m.p1.to_string(), m.p2.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// 1-qubit depolarizing draw: `None` with probability `1 - p1`, otherwise
/// X, Y or Z each with probability `p1 / 3`.
pub fn sample_noise_1q<R: Rng + ?Sized>(p1: f64, rng: &mut R) -> Option<Pauli> {
    if rng.random::<f64>() < p1 {
        Some(Pauli::ALL[rng.random_range(0..3)])
    } else {
        None
    }
}

/// A non-identity two-qubit Pauli `P_a ⊗ P_b`; `None` stands for `I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliPair {
    pub first: Option<Pauli>,
    pub second: Option<Pauli>,
}

fn pauli_from_code(code: usize) -> Option<Pauli> {
    match code {
        0 => None,
        1 => Some(Pauli::X),
        2 => Some(Pauli::Y),
        _ => Some(Pauli::Z),
    }
}

impl PauliPair {
    /// `code` in `1..16`, with `first = code / 4` and `second = code % 4`
    /// (0 = I, 1 = X, 2 = Y, 3 = Z).
    pub fn from_code(code: usize) -> Self {
        assert!((1..16).contains(&code), "pair code {code} outside 1..16");
        Self {
            first: pauli_from_code(code / 4),
            second: pauli_from_code(code % 4),
        }
    }

    /// All 15 non-identity pairs.
    pub fn all() -> impl Iterator<Item = PauliPair> {
        (1..16).map(Self::from_code)
    }

    pub fn apply(&self, state: &mut StateVector, qa: usize, qb: usize) -> Result<()> {
        if let Some(p) = self.first {
            state.apply_pauli(p, qa)?;
        }
        if let Some(p) = self.second {
            state.apply_pauli(p, qb)?;
        }
        Ok(())
    }
}

/// 2-qubit depolarizing draw: `None` with probability `1 - p2`, otherwise
/// one of the 15 non-identity pairs uniformly.
pub fn sample_noise_2q<R: Rng + ?Sized>(p2: f64, rng: &mut R) -> Option<PauliPair> {
    if rng.random::<f64>() < p2 {
        Some(PauliPair::from_code(rng.random_range(1..16)))
    } else {
        None
    }
}

/// Monte-Carlo settings for trajectory averaging.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseEvalConfig {
    pub trajectories: usize,
    pub seed: u64,
}

impl NoiseEvalConfig {
    pub const DEFAULT_TRAJECTORIES: usize = 2000;

    pub fn new(trajectories: usize, seed: u64) -> Result<Self> {
        if trajectories == 0 {
            return Err(Error::config("trajectories must be >= 1"));
        }
        Ok(Self { trajectories, seed })
    }
}

const TRAJECTORY_CHUNK: usize = 64;

/// Average `accumulate(final_state, acc)` over independent noisy
/// trajectories; trajectory `t` draws from stream `(cfg.seed, t)`. The
/// result is divided by the trajectory count.
pub fn trajectory_average<F>(
    circuit: &CircuitSpec,
    z: &[f64],
    theta: &[f64],
    model: &NoiseModel,
    cfg: &NoiseEvalConfig,
    dim: usize,
    accumulate: F,
) -> Result<Vec<f64>>
where
    F: Fn(&StateVector, &mut [f64]) + Sync + Send,
{
    if cfg.trajectories == 0 {
        return Err(Error::config("trajectories must be >= 1"));
    }
    // Surface shape errors before fanning out.
    circuit.gate_angles(z, theta)?;
    let total = par::ordered_vector_sum(cfg.trajectories, dim, TRAJECTORY_CHUNK, |t, acc| {
        let mut stream = rng::stream(cfg.seed, &[t as u64]);
        let state = circuit
            .execute_noisy(z, theta, model, &mut stream)
            .expect("inputs validated above");
        accumulate(&state, acc);
    });
    let m = cfg.trajectories as f64;
    Ok(total.into_iter().map(|v| v / m).collect())
}

/// Computational-basis distribution averaged over noisy trajectories.
pub fn noisy_probabilities(
    circuit: &CircuitSpec,
    z: &[f64],
    theta: &[f64],
    model: &NoiseModel,
    cfg: &NoiseEvalConfig,
) -> Result<Vec<f64>> {
    let dim = 1usize << circuit.n_qubits();
    trajectory_average(circuit, z, theta, model, cfg, dim, |state, acc| {
        for (a, amp) in acc.iter_mut().zip(state.amplitudes()) {
            *a += amp.norm_sqr();
        }
    })
}

/// Largest register accepted by the density-matrix oracle.
pub const DENSITY_MAX_QUBITS: usize = 6;

/// Dense density matrix, row-major, basis convention as [`StateVector`].
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    n_qubits: usize,
    dim: usize,
    rho: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if !(1..=DENSITY_MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::config(format!(
                "density-matrix oracle supports 1..={DENSITY_MAX_QUBITS} qubits, got {n_qubits}"
            )));
        }
        let dim = 1 << n_qubits;
        let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
        rho[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, dim, rho })
    }

    pub fn from_pure(state: &StateVector) -> Result<Self> {
        let mut dm = Self::zero(state.n_qubits())?;
        let a = state.amplitudes();
        for i in 0..dm.dim {
            for j in 0..dm.dim {
                dm.rho[i * dm.dim + j] = a[i] * a[j].conj();
            }
        }
        Ok(dm)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rho[i * self.dim + j]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i).re).collect()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// `rho -> M rho M†` with `M` acting on `qubit`.
    pub fn apply_1q(&mut self, qubit: usize, m: &Matrix2) {
        let d = self.dim;
        let mask = self.mask(qubit);
        // Left multiplication mixes rows i0/i1 of every column.
        for i0 in (0..d).filter(|i| i & mask == 0) {
            let i1 = i0 | mask;
            for j in 0..d {
                let (a, b) = (self.rho[i0 * d + j], self.rho[i1 * d + j]);
                self.rho[i0 * d + j] = m[0][0] * a + m[0][1] * b;
                self.rho[i1 * d + j] = m[1][0] * a + m[1][1] * b;
            }
        }
        // Right multiplication by M† mixes columns j0/j1 of every row.
        for i in 0..d {
            for j0 in (0..d).filter(|j| j & mask == 0) {
                let j1 = j0 | mask;
                let (a, b) = (self.rho[i * d + j0], self.rho[i * d + j1]);
                self.rho[i * d + j0] = a * m[0][0].conj() + b * m[0][1].conj();
                self.rho[i * d + j1] = a * m[1][0].conj() + b * m[1][1].conj();
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let (cm, tm) = (self.mask(control), self.mask(target));
        let perm = |i: usize| if i & cm != 0 { i ^ tm } else { i };
        let d = self.dim;
        let old = self.rho.clone();
        for i in 0..d {
            for j in 0..d {
                self.rho[perm(i) * d + perm(j)] = old[i * d + j];
            }
        }
    }

    fn conjugated_by(&self, ops: &[(usize, Pauli)]) -> Self {
        let mut out = self.clone();
        for &(q, p) in ops {
            out.apply_1q(q, &p.matrix());
        }
        out
    }

    fn mix(&mut self, keep: f64, terms: Vec<(f64, DensityMatrix)>) {
        for v in self.rho.iter_mut() {
            *v *= keep;
        }
        for (w, t) in terms {
            for (v, x) in self.rho.iter_mut().zip(t.rho) {
                *v += w * x;
            }
        }
    }

    /// `(1 - p) rho + (p/3) Σ_P P rho P` on `qubit`.
    pub fn depolarize_1q(&mut self, qubit: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let terms = Pauli::ALL
            .iter()
            .map(|&pl| (p / 3.0, self.conjugated_by(&[(qubit, pl)])))
            .collect();
        self.mix(1.0 - p, terms);
    }

    /// `(1 - p) rho + (p/15) Σ_{P ≠ II} P rho P` on `(qa, qb)`.
    pub fn depolarize_2q(&mut self, qa: usize, qb: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let terms = PauliPair::all()
            .map(|pair| {
                let ops: Vec<_> = [(qa, pair.first), (qb, pair.second)]
                    .into_iter()
                    .filter_map(|(q, pl)| pl.map(|pl| (q, pl)))
                    .collect();
                (p / 15.0, self.conjugated_by(&ops))
            })
            .collect();
        self.mix(1.0 - p, terms);
    }
}

/// Exact noisy computational-basis distribution by composing gate unitaries
/// and depolarizing channels on the density matrix. Limited to
/// [`DENSITY_MAX_QUBITS`] qubits.
pub fn density_matrix_probabilities(
    circuit: &CircuitSpec,
    z: &[f64],
    theta: &[f64],
    model: &NoiseModel,
) -> Result<Vec<f64>> {
    let angles = circuit.gate_angles(z, theta)?;
    let mut dm = DensityMatrix::zero(circuit.n_qubits())?;
    for (gate, &angle) in circuit.gates().iter().zip(&angles) {
        match *gate {
            GateOp::Rotation { axis, qubit, .. } => {
                dm.apply_1q(qubit, &rotation_matrix(axis, angle));
                dm.depolarize_1q(qubit, model.p1());
            }
            GateOp::Cnot { control, target } => {
                dm.apply_cnot(control, target);
                dm.depolarize_2q(control, target, model.p2());
            }
        }
    }
    Ok(dm.diagonal())
}
