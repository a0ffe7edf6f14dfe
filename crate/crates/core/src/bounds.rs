//! Shot-complexity bounds for majority voting and expectation estimation.
//!
//! Notation: `p` single-shot correct probability, `margin` the top-two score
//! gap Δ, `lipschitz` the score-map constant L, `k` the class count, `delta`
//! the target error δ and `n` the shot count.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::heads::{expectation, Head};
use crate::model::{Model, Readout};
use crate::{par, Error, Result};

/// A full set of bound parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundInputs {
    pub p: f64,
    pub margin: f64,
    pub lipschitz: f64,
    pub k: usize,
    pub delta: f64,
    pub n: u64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            p: 0.9,
            margin: 0.2,
            lipschitz: 1.0,
            k: 10,
            delta: 0.01,
            n: 1,
        }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        check_margin(self.margin, self.lipschitz)?;
        check_k(self.k)?;
        check_delta(self.delta)?;
        check_n(self.n)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p = {p} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_margin(margin: f64, lipschitz: f64) -> Result<()> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::domain(format!("margin = {margin} must be positive")));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::domain(format!("lipschitz = {lipschitz} must be positive")));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::domain(format!("k = {k} must be >= 2")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    Ok(())
}

/// Shots for majority voting to err with probability at most `delta`:
/// `⌈ln(1/δ) / (2(p − ½)²)⌉`.
pub fn yomo_shots(p: f64, delta: f64) -> Result<u64> {
    check_p(p)?;
    check_delta(delta)?;
    if p <= 0.5 {
        return Err(Error::domain(format!("bound requires p > 1/2, got p = {p}")));
    }
    let gap = p - 0.5;
    Ok(((1.0 / delta).ln() / (2.0 * gap * gap)).ceil() as u64)
}

/// Shots for expectation estimates to preserve the argmax with probability
/// at least `1 − δ`: `⌈(8L²/Δ²) ln(2K/δ)⌉`.
pub fn vanilla_shots(margin: f64, lipschitz: f64, k: usize, delta: f64) -> Result<u64> {
    check_margin(margin, lipschitz)?;
    check_k(k)?;
    check_delta(delta)?;
    Ok(vanilla_shots_real(margin, lipschitz, k, delta).ceil() as u64)
}

/// [`vanilla_shots`] before the ceiling.
pub fn vanilla_shots_real(margin: f64, lipschitz: f64, k: usize, delta: f64) -> f64 {
    8.0 * lipschitz * lipschitz / (margin * margin) * (2.0 * k as f64 / delta).ln()
}

/// `exp(−2N(p − ½)²)`; 1 when `p ≤ ½` (the bound says nothing there).
pub fn yomo_error_bound(p: f64, n: u64) -> Result<f64> {
    check_p(p)?;
    check_n(n)?;
    if p <= 0.5 {
        return Ok(1.0);
    }
    Ok((-2.0 * n as f64 * (p - 0.5).powi(2)).exp())
}

/// `2K exp(−2N(Δ/4L)²)` clipped to `[0, 1]`.
pub fn vanilla_error_bound(margin: f64, lipschitz: f64, k: usize, n: u64) -> Result<f64> {
    check_margin(margin, lipschitz)?;
    check_k(k)?;
    check_n(n)?;
    let r = margin / (4.0 * lipschitz);
    Ok((2.0 * k as f64 * (-2.0 * n as f64 * r * r).exp()).min(1.0))
}

/// Smallest `p` at which majority voting needs no more shots than
/// expectation estimation: `½ + (Δ/4L)√(ln(1/δ)/ln(2K/δ))`.
pub fn fewer_shots_threshold(margin: f64, lipschitz: f64, k: usize, delta: f64) -> Result<f64> {
    check_margin(margin, lipschitz)?;
    check_k(k)?;
    check_delta(delta)?;
    let ratio = (1.0 / delta).ln() / (2.0 * k as f64 / delta).ln();
    Ok(0.5 + margin / (4.0 * lipschitz) * ratio.sqrt())
}

/// Result of a threshold whose defining radicand may be negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Value(f64),
    /// The comparison holds for every `p`.
    Vacuous,
}

/// Smallest `p` at which the majority-vote error bound at `n` shots beats
/// the expectation bound: `½ + √((Δ/4L)² − ln(2K)/(2N))`.
pub fn smaller_delta_threshold(margin: f64, lipschitz: f64, k: usize, n: u64) -> Result<Threshold> {
    check_margin(margin, lipschitz)?;
    check_k(k)?;
    check_n(n)?;
    let r = margin / (4.0 * lipschitz);
    let radicand = r * r - (2.0 * k as f64).ln() / (2.0 * n as f64);
    if radicand < 0.0 {
        Ok(Threshold::Vacuous)
    } else {
        Ok(Threshold::Value(0.5 + radicand.sqrt()))
    }
}

/// Single-shot threshold `max(0, 1 − 2K exp(−Δ²/8L²))`.
pub fn single_shot_threshold(margin: f64, lipschitz: f64, k: usize) -> Result<f64> {
    check_margin(margin, lipschitz)?;
    check_k(k)?;
    let x = margin / lipschitz;
    Ok((1.0 - 2.0 * k as f64 * (-x * x / 8.0).exp()).max(0.0))
}

/// Exact probability that fewer than half of `n` independent votes are
/// correct; for even `n` a tie counts as an error.
///
/// Summed in log space so `n` up to 10⁶ is fine.
pub fn majority_vote_error_exact(p: f64, n: u64) -> Result<f64> {
    check_p(p)?;
    check_n(n)?;
    let nf = n as f64;
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let ln_n_fact = ln_gamma(nf + 1.0);
    let terms: Vec<f64> = (0..=n / 2)
        .map(|k| {
            let kf = k as f64;
            ln_n_fact - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0) + kf * lp + (nf - kf) * lq
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok((max + sum.ln()).exp().min(1.0))
}

/// Monte-Carlo estimate of [`majority_vote_error_exact`] over `trials`
/// independent votes of `n` shots.
pub fn simulate_majority_vote_error<R: Rng + ?Sized>(p: f64, n: u64, trials: u64, rng: &mut R) -> Result<f64> {
    check_p(p)?;
    check_n(n)?;
    if trials == 0 {
        return Err(Error::argument("trials must be >= 1"));
    }
    let dist = Binomial::new(n, p).map_err(|e| Error::domain(e.to_string()))?;
    let errors = (0..trials).filter(|_| 2 * dist.sample(rng) <= n).count();
    Ok(errors as f64 / trials as f64)
}

/// Gap between the largest and second-largest entries; 0 for fewer than
/// two scores.
pub fn top_two_gap(scores: &[f64]) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &s in scores {
        if s > first {
            second = first;
            first = s;
        } else if s > second {
            second = s;
        }
    }
    if second == f64::NEG_INFINITY {
        0.0
    } else {
        first - second
    }
}

/// Per-sample infinite-shot margins of an expectation-head model.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginReport {
    pub per_sample: Vec<f64>,
    pub min: f64,
    pub median: f64,
    /// Lipschitz constant of the score map; scores are the raw expectations.
    pub lipschitz: f64,
}

/// Margins of `μ` for each input, with identity scores (`L = 1`).
pub fn measure_margin(model: &Model, inputs: &[&[f64]]) -> Result<MarginReport> {
    let obs = match model.readout() {
        Readout::Vanilla(obs) => obs,
        Readout::Yomo(_) => {
            return Err(Error::Unsupported(format!(
                "margins are defined for the {} head only",
                Head::Vanilla
            )))
        }
    };
    if inputs.is_empty() {
        return Err(Error::argument("no inputs to measure"));
    }
    let per_sample = par::map_slice(inputs, |_, x| -> Result<f64> {
        let state = model.final_state(x)?;
        let mu = obs.iter().map(|o| expectation(&state, o)).collect::<Result<Vec<_>>>()?;
        Ok(top_two_gap(&mu))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut sorted = per_sample.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok(MarginReport {
        min: sorted[0],
        median,
        per_sample,
        lipschitz: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn shot_counts() {
        assert_eq!(yomo_shots(0.9, 0.01).unwrap(), 15);
        assert_eq!(yomo_shots(0.75, 0.1).unwrap(), 19);
        assert!(matches!(yomo_shots(0.5, 0.1), Err(Error::Domain(_))));
        assert_eq!(vanilla_shots(0.2, 1.0, 10, 0.01).unwrap(), 1521);
        let ratio = vanilla_shots_real(0.1, 1.0, 10, 0.01) / vanilla_shots_real(0.2, 1.0, 10, 0.01);
        assert!(close(ratio, 4.0, 1e-12));
        assert!(vanilla_shots(0.0, 1.0, 10, 0.01).is_err());
        assert!(vanilla_shots(0.2, -1.0, 10, 0.01).is_err());
    }

    #[test]
    fn error_bounds() {
        assert_eq!(yomo_error_bound(0.5, 7).unwrap(), 1.0);
        assert!(close(yomo_error_bound(0.9, 1).unwrap(), (-0.32f64).exp(), 1e-12));
        assert!(close(yomo_error_bound(0.9, 1).unwrap(), 0.7261, 1e-4));
        let mut last = 1.0;
        for n in [1, 10, 100, 1000, 10_000] {
            let b = vanilla_error_bound(0.3, 1.0, 4, n).unwrap();
            assert!(b <= last && (0.0..=1.0).contains(&b));
            last = b;
        }
    }

    #[test]
    fn thresholds() {
        let t = fewer_shots_threshold(0.2, 1.0, 10, 0.01).unwrap();
        let expect = 0.5 + 0.05 * (100f64.ln() / 2000f64.ln()).sqrt();
        assert!(close(t, expect, 1e-12));
        assert!((t - 0.5389).abs() < 1e-4);
        let tiny = fewer_shots_threshold(0.2, 1.0, 10, 1e-300).unwrap();
        assert!((tiny - 0.55).abs() < 2e-3);
        assert!(fewer_shots_threshold(0.3, 1.0, 10, 0.01).unwrap() > t);

        assert_eq!(smaller_delta_threshold(0.2, 1.0, 10, 1).unwrap(), Threshold::Vacuous);
        let Threshold::Value(v) = smaller_delta_threshold(2.0, 1.0, 2, 10).unwrap() else {
            panic!("expected a value")
        };
        assert!(close(v, 0.5 + (0.25 - 4f64.ln() / 20.0).sqrt(), 1e-12));
        assert!((v - 0.9251).abs() < 1e-4);
        let Threshold::Value(far) = smaller_delta_threshold(2.0, 1.0, 2, 1 << 40).unwrap() else {
            panic!("expected a value")
        };
        assert!((far - 1.0).abs() < 1e-5);

        assert_eq!(single_shot_threshold(0.1, 1.0, 10).unwrap(), 0.0);
        assert!(close(
            single_shot_threshold(4.0, 1.0, 2).unwrap(),
            1.0 - 4.0 * (-2f64).exp(),
            1e-12
        ));
        // The 2K factor multiplies the subtracted term, so larger K lowers p*.
        assert!(single_shot_threshold(6.0, 1.0, 3).unwrap() < single_shot_threshold(6.0, 1.0, 2).unwrap());
    }

    #[test]
    fn exact_majority_vote() {
        assert!(close(majority_vote_error_exact(0.9, 1).unwrap(), 0.1, 1e-12));
        assert!(close(majority_vote_error_exact(0.9, 3).unwrap(), 0.028, 1e-12));
        // Even n: ties are errors.
        assert!(close(majority_vote_error_exact(0.9, 2).unwrap(), 0.01 + 0.18, 1e-12));
        let big = majority_vote_error_exact(0.5001, 1_000_000).unwrap();
        assert!(big > 0.0 && big < 0.5);
    }

    #[test]
    fn gaps() {
        assert!(close(top_two_gap(&[0.8, 0.2, 0.1]), 0.6, 1e-15));
        assert_eq!(top_two_gap(&[0.4, 0.4, 0.1]), 0.0);
        assert_eq!(top_two_gap(&[0.4]), 0.0);
    }
}
