//! Classical front-end mapping raw inputs to encoding angles.
//!
//! Output is squashed to `[-π, π]` with `π·tanh`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Architecture {
    /// `z = π tanh(W x + b)`.
    #[default]
    Affine,
    /// `z = π tanh(W2 tanh(W1 x + b1) + b2)`.
    Mlp { hidden: usize },
}

impl Architecture {
    pub fn param_count(&self, input_dim: usize, output_dim: usize) -> usize {
        match *self {
            Architecture::Affine => output_dim * input_dim + output_dim,
            Architecture::Mlp { hidden } => hidden * input_dim + hidden + output_dim * hidden + output_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    arch: Architecture,
    input_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

/// Intermediates saved by [`FeatureExtractor::forward`].
#[derive(Clone, Debug)]
pub struct ExtractorCache {
    x: Vec<f64>,
    hidden: Vec<f64>,
    out_tanh: Vec<f64>,
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .zip(w.chunks_exact(x.len()))
        .map(|(bi, row)| bi + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

/// Accumulate `dW += dy xᵀ`, `db += dy`, and return `Wᵀ dy`.
fn dense_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; x.len()];
    for (o, &g) in dy.iter().enumerate() {
        db[o] += g;
        let row = &w[o * x.len()..(o + 1) * x.len()];
        let drow = &mut dw[o * x.len()..(o + 1) * x.len()];
        for ((dwi, &xi), (&wi, dxi)) in drow.iter_mut().zip(x).zip(row.iter().zip(dx.iter_mut())) {
            *dwi += g * xi;
            *dxi += g * wi;
        }
    }
    dx
}

impl FeatureExtractor {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, input_dim: usize, output_dim: usize, rng: &mut R) -> Result<Self> {
        validate_shape(arch, input_dim, output_dim)?;
        let mut params = Vec::with_capacity(arch.param_count(input_dim, output_dim));
        let mut layer = |params: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        };
        match arch {
            Architecture::Affine => layer(&mut params, input_dim, output_dim),
            Architecture::Mlp { hidden } => {
                layer(&mut params, input_dim, hidden);
                layer(&mut params, hidden, output_dim);
            }
        }
        Ok(Self {
            arch,
            input_dim,
            output_dim,
            params,
        })
    }

    pub fn from_params(arch: Architecture, input_dim: usize, output_dim: usize, params: Vec<f64>) -> Result<Self> {
        validate_shape(arch, input_dim, output_dim)?;
        let expected = arch.param_count(input_dim, output_dim);
        if params.len() != expected {
            return Err(Error::argument(format!(
                "extractor expects {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            arch,
            input_dim,
            output_dim,
            params,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (d, o) = (self.input_dim, self.output_dim);
        match self.arch {
            Architecture::Affine => {
                let (w, b) = self.params.split_at(o * d);
                (w, b, &[], &[])
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(o * hidden);
                (w1, b1, w2, b2)
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ExtractorCache)> {
        if x.len() != self.input_dim {
            return Err(Error::argument(format!(
                "input has dimension {}, extractor expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let (w1, b1, w2, b2) = self.split();
        let (hidden, pre) = match self.arch {
            Architecture::Affine => (Vec::new(), dense(w1, b1, x)),
            Architecture::Mlp { .. } => {
                let h: Vec<f64> = dense(w1, b1, x).into_iter().map(f64::tanh).collect();
                let pre = dense(w2, b2, &h);
                (h, pre)
            }
        };
        let out_tanh: Vec<f64> = pre.into_iter().map(f64::tanh).collect();
        let z = out_tanh.iter().map(|t| PI * t).collect();
        Ok((
            z,
            ExtractorCache {
                x: x.to_vec(),
                hidden,
                out_tanh,
            },
        ))
    }

    /// Reverse-mode pass: returns `(dL/dparams, dL/dx)`.
    pub fn backward(&self, cache: &ExtractorCache, dz: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if dz.len() != self.output_dim || cache.out_tanh.len() != self.output_dim {
            return Err(Error::argument(format!(
                "upstream gradient has length {}, extractor outputs {}",
                dz.len(),
                self.output_dim
            )));
        }
        let dpre: Vec<f64> = dz
            .iter()
            .zip(&cache.out_tanh)
            .map(|(g, t)| g * PI * (1.0 - t * t))
            .collect();
        let mut grads = vec![0.0; self.params.len()];
        let (w1, _, w2, _) = self.split();
        let (d, o) = (self.input_dim, self.output_dim);
        let dx = match self.arch {
            Architecture::Affine => {
                let (dw, db) = grads.split_at_mut(o * d);
                dense_backward(w1, &cache.x, &dpre, dw, db)
            }
            Architecture::Mlp { hidden } => {
                let (g1, g2) = grads.split_at_mut(hidden * d + hidden);
                let (dw2, db2) = g2.split_at_mut(o * hidden);
                let dh = dense_backward(w2, &cache.hidden, &dpre, dw2, db2);
                let dh_pre: Vec<f64> = dh.iter().zip(&cache.hidden).map(|(g, h)| g * (1.0 - h * h)).collect();
                let (dw1, db1) = g1.split_at_mut(hidden * d);
                dense_backward(w1, &cache.x, &dh_pre, dw1, db1)
            }
        };
        Ok((grads, dx))
    }
}

fn validate_shape(arch: Architecture, input_dim: usize, output_dim: usize) -> Result<()> {
    if input_dim == 0 || output_dim == 0 {
        return Err(Error::config(format!(
            "extractor dimensions must be positive (d = {input_dim}, n_f = {output_dim})"
        )));
    }
    if let Architecture::Mlp { hidden: 0 } = arch {
        return Err(Error::config("mlp hidden width must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_affine_outputs_zero() {
        let ext = FeatureExtractor::from_params(Architecture::Affine, 3, 2, vec![0.0; 8]).unwrap();
        let (z, _) = ext.forward(&[0.3, 0.9, 0.1]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(ext.forward(&[0.0; 2]).is_err());
    }

    #[test]
    fn identity_affine_at_origin() {
        let mut params = vec![0.0; 3 * 3 + 3];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let ext = FeatureExtractor::from_params(Architecture::Affine, 3, 3, params).unwrap();
        assert_eq!(ext.forward(&[0.0; 3]).unwrap().0, vec![0.0; 3]);
    }

    #[test]
    fn bias_gradient_at_origin_is_pi() {
        let ext = FeatureExtractor::from_params(Architecture::Affine, 2, 2, vec![0.0; 6]).unwrap();
        let (_, cache) = ext.forward(&[0.0, 0.0]).unwrap();
        let (g, _) = ext.backward(&cache, &[1.0, 0.0]).unwrap();
        assert!((g[4] - PI).abs() < 1e-15);
        assert_eq!(g[5], 0.0);
        let (g, dx) = ext.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().chain(&dx).all(|&v| v == 0.0));
        assert!(ext.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn init_rules() {
        let a = FeatureExtractor::init(Architecture::Affine, 16, 4, &mut rng::seeded(3)).unwrap();
        let b = FeatureExtractor::init(Architecture::Affine, 16, 4, &mut rng::seeded(3)).unwrap();
        assert_eq!(a, b);
        let (w, bias) = a.params().split_at(64);
        assert!(bias.iter().all(|&v| v == 0.0));
        assert!(w.iter().all(|v| v.abs() <= 0.25));
        let m = FeatureExtractor::init(Architecture::Mlp { hidden: 5 }, 7, 3, &mut rng::seeded(1)).unwrap();
        assert_eq!(m.params().len(), 5 * 7 + 5 + 3 * 5 + 3);
        assert!(FeatureExtractor::init(Architecture::Mlp { hidden: 0 }, 7, 3, &mut rng::seeded(1)).is_err());
    }
}
