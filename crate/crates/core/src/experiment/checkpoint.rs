//! Versioned binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "SHOTLAB\0" | u32 version
//! u32 len | config echo (UTF-8 TOML)
//! u32 arch kind (0 affine, 1 mlp) | u32 hidden | u32 input_dim | u32 n_features
//! u64 len | f64 extractor params
//! u64 len | f64 circuit params
//! u64 epochs | f64 final train loss | u64 trace digest
//! ```

use std::path::Path;

use crate::extractor::{Architecture, FeatureExtractor};
use crate::model::{Model, ModelSpec};
use crate::train::EpochRecord;
use crate::{Error, Result};

use super::config::{ExperimentConfig, OutputSection};

pub const MAGIC: &[u8; 8] = b"SHOTLAB\0";
pub const VERSION: u32 = 1;

/// Summary of the training trace stored with the parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryDigest {
    pub epochs: u64,
    pub final_total: f64,
    pub trace_hash: u64,
}

impl HistoryDigest {
    pub fn of(history: &[EpochRecord]) -> Self {
        let mut h = Fnv64::new();
        for r in history {
            h.write(&(r.epoch as u64).to_le_bytes());
            for v in [r.ce, r.ps, r.entropy, r.total, r.test_loss] {
                h.write(&v.to_bits().to_le_bytes());
            }
        }
        Self {
            epochs: history.len() as u64,
            final_total: history.last().map_or(f64::NAN, |r| r.total),
            trace_hash: h.finish(),
        }
    }
}

/// FNV-1a, used only as a stable content fingerprint.
#[derive(Clone, Copy, Debug)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut h = Fnv64::new();
    h.write(bytes);
    h.finish()
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub theta_c: Vec<f64>,
    pub theta: Vec<f64>,
    pub history: HistoryDigest,
}

impl Checkpoint {
    /// The echoed config drops `[output]`: where a file lands is not part
    /// of the model.
    pub fn new(config: &ExperimentConfig, model: &Model, history: &[EpochRecord]) -> Self {
        let mut config = config.clone();
        config.output = OutputSection::default();
        Self {
            config,
            spec: *model.spec(),
            theta_c: model.extractor.params().to_vec(),
            theta: model.theta.clone(),
            history: HistoryDigest::of(history),
        }
    }

    pub fn model(&self) -> Result<Model> {
        let ex = FeatureExtractor::from_params(
            self.spec.architecture,
            self.spec.input_dim,
            self.spec.n_features,
            self.theta_c.clone(),
        )?;
        Model::from_parts(self.spec, ex, self.theta.clone(), self.config.loss)
    }

    /// Short id derived from the serialized bytes.
    pub fn run_id(&self) -> Result<String> {
        Ok(format!("{:016x}", fingerprint(&self.to_bytes()?)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let echo = self.config.to_toml()?;
        let mut out = Vec::with_capacity(64 + echo.len() + 8 * (self.theta_c.len() + self.theta.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
        out.extend_from_slice(echo.as_bytes());
        let (kind, hidden) = match self.spec.architecture {
            Architecture::Affine => (0u32, 0u32),
            Architecture::Mlp { hidden } => (1, hidden as u32),
        };
        for v in [kind, hidden, self.spec.input_dim as u32, self.spec.n_features as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for block in [&self.theta_c, &self.theta] {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.history.epochs.to_le_bytes());
        out.extend_from_slice(&self.history.final_total.to_le_bytes());
        out.extend_from_slice(&self.history.trace_hash.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format(0, "not a shotlab checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(8, format!("unsupported checkpoint version {version}")));
        }
        let len = r.u32()? as usize;
        let at = r.pos as u64;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(at, "config echo is not UTF-8"))?;
        let config = ExperimentConfig::from_toml(text).map_err(|e| Error::format(at, format!("config echo: {e}")))?;

        let at = r.pos as u64;
        let (kind, hidden, input_dim, n_features) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
        let architecture = match kind {
            0 => Architecture::Affine,
            1 => Architecture::Mlp {
                hidden: hidden as usize,
            },
            k => return Err(Error::format(at, format!("unknown extractor kind {k}"))),
        };
        let spec = config.model.spec(input_dim as usize);
        if spec.architecture != architecture || spec.n_features != n_features as usize {
            return Err(Error::format(at, "architecture header disagrees with the config echo"));
        }
        spec.validate().map_err(|e| Error::format(at, e.to_string()))?;

        let at = r.pos as u64;
        let theta_c = r.block()?;
        if theta_c.len() != architecture.param_count(spec.input_dim, spec.n_features) {
            return Err(Error::format(
                at,
                format!("extractor block has {} values", theta_c.len()),
            ));
        }
        let at = r.pos as u64;
        let theta = r.block()?;
        if theta.len() != spec.n_blocks * spec.n_qubits {
            return Err(Error::format(at, format!("circuit block has {} values", theta.len())));
        }
        let history = HistoryDigest {
            epochs: r.u64()?,
            final_total: f64::from_bits(r.u64()?),
            trace_hash: r.u64()?,
        };
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after checkpoint"));
        }
        Ok(Self {
            config,
            spec,
            theta_c,
            theta,
            history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.pos as u64, "checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn block(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        let n = usize::try_from(n)
            .ok()
            .filter(|n| n.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| Error::format(self.pos as u64, format!("block length {n} exceeds file")))?;
        (0..n).map(|_| Ok(f64::from_bits(self.u64()?))).collect()
    }
}
