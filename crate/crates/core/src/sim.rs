//! Exact state-vector simulation.
//!
//! Basis index convention: qubit 0 is the most significant bit, so on a
//! 3-qubit register `|100⟩` is index 4. Gates act in place by visiting the
//! `2^(n-1)` amplitude pairs that differ only in the target bit.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Amplitude = Complex64;

/// Largest register [`StateVector::zero`] will allocate.
pub const MAX_QUBITS: usize = 20;

const ZERO: Amplitude = Amplitude::new(0.0, 0.0);
const ONE: Amplitude = Amplitude::new(1.0, 0.0);
const I: Amplitude = Amplitude::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Y => Pauli::Y,
            Axis::Z => Pauli::Z,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Matrix2 {
        match self {
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Row-major 2x2 complex matrix.
pub type Matrix2 = [[Amplitude; 2]; 2];

/// `exp(-i angle/2 P_axis)`.
pub fn rotation_matrix(axis: Axis, angle: f64) -> Matrix2 {
    let (s, c) = (angle / 2.0).sin_cos();
    match axis {
        Axis::X => [
            [Amplitude::new(c, 0.0), Amplitude::new(0.0, -s)],
            [Amplitude::new(0.0, -s), Amplitude::new(c, 0.0)],
        ],
        Axis::Y => [
            [Amplitude::new(c, 0.0), Amplitude::new(-s, 0.0)],
            [Amplitude::new(s, 0.0), Amplitude::new(c, 0.0)],
        ],
        Axis::Z => [[Amplitude::new(c, -s), ZERO], [ZERO, Amplitude::new(c, s)]],
    }
}

/// Bit mask of `qubit` in an `n_qubits` register.
#[inline]
pub fn qubit_mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

/// Value (0 or 1) of `qubit` in basis index `index`.
#[inline]
pub fn qubit_bit(n_qubits: usize, index: usize, qubit: usize) -> usize {
    (index >> (n_qubits - 1 - qubit)) & 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Amplitude>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::config(format!(
                "n_qubits = {n_qubits} outside the supported range 1..={MAX_QUBITS}"
            )));
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::argument(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wrap an amplitude vector. The length must be a power of two and the
    /// vector must be normalized to within 1e-9.
    pub fn from_amplitudes(amplitudes: Vec<Amplitude>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::argument(format!(
                "amplitude vector length {dim} is not a power of two >= 2"
            )));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(Error::config(format!(
                "n_qubits = {n_qubits} exceeds the limit {MAX_QUBITS}"
            )));
        }
        let state = Self { n_qubits, amplitudes };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::argument(format!("state has squared norm {norm}, expected 1")));
        }
        Ok(state)
    }

    /// Like [`from_amplitudes`](Self::from_amplitudes) without the norm check,
    /// for adjoint vectors `Mψ`.
    pub(crate) fn from_unnormalized(amplitudes: Vec<Amplitude>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::argument(format!(
                "amplitude vector length {dim} is not a power of two >= 2"
            )));
        }
        Ok(Self {
            n_qubits: dim.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Amplitude {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitIndex {
                index: qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    /// Apply an arbitrary 2x2 matrix to `qubit`.
    pub fn apply_matrix(&mut self, qubit: usize, m: &Matrix2) -> Result<()> {
        self.check_qubit(qubit)?;
        let mask = qubit_mask(self.n_qubits, qubit);
        let amps = &mut self.amplitudes;
        // Blocks of 2*mask: the first half has the bit clear, the second set.
        for block in amps.chunks_exact_mut(mask << 1) {
            let (lo, hi) = block.split_at_mut(mask);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = m[0][0] * x0 + m[0][1] * x1;
                *a1 = m[1][0] * x0 + m[1][1] * x1;
            }
        }
        Ok(())
    }

    /// `R_axis(angle) = exp(-i angle/2 P_axis)` on `qubit`.
    pub fn apply_rotation(&mut self, axis: Axis, qubit: usize, angle: f64) -> Result<()> {
        if !angle.is_finite() {
            return Err(Error::argument(format!("rotation angle {angle} is not finite")));
        }
        self.apply_matrix(qubit, &rotation_matrix(axis, angle))
    }

    pub fn apply_pauli(&mut self, pauli: Pauli, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let mask = qubit_mask(self.n_qubits, qubit);
        for block in self.amplitudes.chunks_exact_mut(mask << 1) {
            let (lo, hi) = block.split_at_mut(mask);
            match pauli {
                Pauli::X => lo.swap_with_slice(hi),
                Pauli::Y => {
                    for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                        let (x0, x1) = (*a0, *a1);
                        *a0 = -I * x1;
                        *a1 = I * x0;
                    }
                }
                Pauli::Z => hi.iter_mut().for_each(|a| *a = -*a),
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::argument(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        let cmask = qubit_mask(self.n_qubits, control);
        let tmask = qubit_mask(self.n_qubits, target);
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
        Ok(())
    }

    /// Born-rule probabilities over the computational basis.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Draw `shots` i.i.d. computational-basis outcomes.
    pub fn sample<R: Rng + ?Sized>(&self, shots: u64, rng: &mut R) -> Result<BitstringSample> {
        BasisSampler::new(&self.probabilities())?.sample_counts(shots, rng)
    }
}

/// Finite-shot measurement record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitstringSample {
    pub counts: BTreeMap<usize, u64>,
    pub total_shots: u64,
}

impl BitstringSample {
    pub fn count(&self, index: usize) -> u64 {
        self.counts.get(&index).copied().unwrap_or(0)
    }
}

/// Inverse-CDF sampler over a fixed discrete distribution.
#[derive(Clone, Debug)]
pub struct BasisSampler {
    cdf: Vec<f64>,
}

impl BasisSampler {
    pub fn new(probabilities: &[f64]) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::argument("cannot sample from an empty distribution"));
        }
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(probabilities.len());
        for &p in probabilities {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::argument(format!("invalid probability {p}")));
            }
            acc += p;
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::argument("distribution has zero total mass"));
        }
        Ok(Self { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    /// One outcome. Zero-probability outcomes are never returned.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= u);
        if i < self.cdf.len() {
            i
        } else {
            // u landed on the rounding slack above the last increment.
            let last = self.cdf.len() - 1;
            (0..=last)
                .rev()
                .find(|&j| j == 0 || self.cdf[j] > self.cdf[j - 1])
                .unwrap_or(last)
        }
    }

    pub fn sample_counts<R: Rng + ?Sized>(&self, shots: u64, rng: &mut R) -> Result<BitstringSample> {
        if shots == 0 {
            return Err(Error::argument("n_shots must be at least 1"));
        }
        let mut counts = BTreeMap::new();
        for _ in 0..shots {
            *counts.entry(self.draw(rng)).or_insert(0) += 1;
        }
        Ok(BitstringSample {
            counts,
            total_shots: shots,
        })
    }
}
