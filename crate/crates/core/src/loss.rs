//! Cross-entropy, probability-sharpening and entropy losses.
//!
//! All logs are natural. Probabilities are clamped to [`PROB_FLOOR`] before
//! taking logs; clamped entries contribute no gradient.

use serde::{Deserialize, Serialize};

use crate::heads::{predict_class, Head};
use crate::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

/// What the entropy term is computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMode {
    /// `-(1/N) Σ_i p_i ln p_i` with `p_i` the correct-class score.
    #[default]
    CorrectClass,
    /// `-(1/N) Σ_i Σ_k p_ik ln p_ik` over every class score.
    FullDistribution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Sharpening threshold, strictly inside (0, 1).
    pub tau: f64,
    /// Sharpening weight.
    pub gamma: f64,
    /// Entropy weight.
    pub omega: f64,
    pub entropy: EntropyMode,
    /// Renormalize aggregated scores to sum to one before the loss.
    pub renormalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.6,
            gamma: 0.05,
            omega: 0.05,
            entropy: EntropyMode::CorrectClass,
            renormalize: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config(format!("tau = {} must lie in (0, 1)", self.tau)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma = {} must be >= 0", self.gamma)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::config(format!("omega = {} must be >= 0", self.omega)));
        }
        Ok(())
    }

    /// Weights actually applied for `head`: the expectation head trains on
    /// cross-entropy alone.
    pub fn weights_for(&self, head: Head) -> (f64, f64) {
        match head {
            Head::Yomo => (self.gamma, self.omega),
            Head::Vanilla => (0.0, 0.0),
        }
    }
}

/// Per-sample class scores and true labels.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPrediction {
    pub scores: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl BatchPrediction {
    pub fn new(scores: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::argument(format!(
                "{} score vectors but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        for (s, &y) in scores.iter().zip(&labels) {
            if y >= s.len() {
                return Err(Error::argument(format!("label {y} outside 0..{}", s.len())));
            }
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Score of the true class, per sample.
    pub fn correct_probs(&self) -> Vec<f64> {
        self.scores.iter().zip(&self.labels).map(|(s, &y)| s[y]).collect()
    }

    /// `(argmax class, its score)` per sample.
    pub fn predictions(&self) -> Vec<(usize, f64)> {
        self.scores
            .iter()
            .map(|s| {
                let k = predict_class(s).expect("score vectors are non-empty");
                (k, s[k])
            })
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let hits = self
            .predictions()
            .iter()
            .zip(&self.labels)
            .filter(|((k, _), &y)| *k == y)
            .count();
        hits as f64 / self.len() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub ps: f64,
    pub entropy: f64,
    pub total: f64,
}

/// `-(1/N) Σ ln p_i(correct)`.
pub fn ce_loss(batch: &BatchPrediction) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let n = batch.len() as f64;
    -batch
        .correct_probs()
        .iter()
        .map(|p| p.max(PROB_FLOOR).ln())
        .sum::<f64>()
        / n
}

/// `1 - mean of predicted-class scores above tau`, or exactly 1 when no
/// prediction clears the threshold.
pub fn ps_loss(batch: &BatchPrediction, tau: f64) -> f64 {
    let above: Vec<f64> = batch
        .predictions()
        .into_iter()
        .map(|(_, p)| p)
        .filter(|&p| p > tau)
        .collect();
    if above.is_empty() {
        1.0
    } else {
        1.0 - above.iter().sum::<f64>() / above.len() as f64
    }
}

fn neg_x_ln_x(p: f64) -> f64 {
    let q = p.max(PROB_FLOOR);
    -q * q.ln()
}

/// `-(1/N) Σ p_i ln p_i` on the correct-class score.
pub fn entropy_loss(batch: &BatchPrediction) -> f64 {
    entropy_loss_with(batch, EntropyMode::CorrectClass)
}

pub fn entropy_loss_with(batch: &BatchPrediction, mode: EntropyMode) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let n = batch.len() as f64;
    let sum: f64 = match mode {
        EntropyMode::CorrectClass => batch.correct_probs().into_iter().map(neg_x_ln_x).sum(),
        EntropyMode::FullDistribution => batch
            .scores
            .iter()
            .flat_map(|s| s.iter().copied().map(neg_x_ln_x))
            .sum(),
    };
    sum / n
}

/// `CE + gamma PS + omega E` with the head's weights.
pub fn total_loss(batch: &BatchPrediction, cfg: &LossConfig, head: Head) -> LossBreakdown {
    let (gamma, omega) = cfg.weights_for(head);
    let ce = ce_loss(batch);
    let ps = ps_loss(batch, cfg.tau);
    let entropy = entropy_loss_with(batch, cfg.entropy);
    LossBreakdown {
        ce,
        ps,
        entropy,
        total: ce + gamma * ps + omega * entropy,
    }
}

/// Loss value and `∂L/∂scores[i][k]`.
///
/// The sharpening term is piecewise: membership of `{i : p_i > tau}` and
/// the argmax class are held fixed, matching what autodiff of the formula
/// computes away from the threshold.
pub fn loss_with_score_grad(batch: &BatchPrediction, cfg: &LossConfig, head: Head) -> (LossBreakdown, Vec<Vec<f64>>) {
    let breakdown = total_loss(batch, cfg, head);
    let (gamma, omega) = cfg.weights_for(head);
    let mut grads: Vec<Vec<f64>> = batch.scores.iter().map(|s| vec![0.0; s.len()]).collect();
    if batch.is_empty() {
        return (breakdown, grads);
    }
    let n = batch.len() as f64;

    for ((g, s), &y) in grads.iter_mut().zip(&batch.scores).zip(&batch.labels) {
        let p = s[y];
        if p > PROB_FLOOR {
            g[y] += -1.0 / (n * p);
        }
    }

    if gamma != 0.0 {
        let preds = batch.predictions();
        let qualifying: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].1 > cfg.tau).collect();
        if !qualifying.is_empty() {
            let w = -gamma / qualifying.len() as f64;
            for i in qualifying {
                grads[i][preds[i].0] += w;
            }
        }
    }

    if omega != 0.0 {
        let d = |p: f64| if p > PROB_FLOOR { -(p.ln() + 1.0) / n } else { 0.0 };
        match cfg.entropy {
            EntropyMode::CorrectClass => {
                for ((g, s), &y) in grads.iter_mut().zip(&batch.scores).zip(&batch.labels) {
                    g[y] += omega * d(s[y]);
                }
            }
            EntropyMode::FullDistribution => {
                for (g, s) in grads.iter_mut().zip(&batch.scores) {
                    for (gk, &p) in g.iter_mut().zip(s) {
                        *gk += omega * d(p);
                    }
                }
            }
        }
    }
    (breakdown, grads)
}
