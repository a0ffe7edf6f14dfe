//! Experiment configuration: TOML sections with `section.key=value`
//! overrides.
//!
//! Precedence, lowest first: built-in defaults, a base table (for example a
//! checkpoint's echoed config), the config file, then command-line
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BoundInputs;
use crate::circuit::EncoderLayout;
use crate::extractor::Architecture;
use crate::heads::Head;
use crate::inference::{Allocation, NoiseSetting, ShotBudget};
use crate::loss::LossConfig;
use crate::model::ModelSpec;
use crate::noise::{parse_noise, NoiseEvalConfig, NoiseModel};
use crate::train::TrainConfig;
use crate::{Error, Result};

/// Raw TOML table used for layering config sources.
pub type ConfigTable = toml::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Affine,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub head: Head,
    pub n_qubits: usize,
    pub n_blocks: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub extractor: ExtractorKind,
    /// Hidden width of the `mlp` extractor.
    pub hidden: usize,
    pub layout: EncoderLayout,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            head: Head::Yomo,
            n_qubits: 4,
            n_blocks: 5,
            n_classes: 4,
            n_features: 8,
            extractor: ExtractorKind::Affine,
            hidden: 32,
            layout: EncoderLayout::Layerwise,
        }
    }
}

impl ModelSection {
    pub fn architecture(&self) -> Architecture {
        match self.extractor {
            ExtractorKind::Affine => Architecture::Affine,
            ExtractorKind::Mlp => Architecture::Mlp { hidden: self.hidden },
        }
    }

    pub fn spec(&self, input_dim: usize) -> ModelSpec {
        ModelSpec {
            head: self.head,
            n_qubits: self.n_qubits,
            n_blocks: self.n_blocks,
            n_classes: self.n_classes,
            input_dim,
            n_features: self.n_features,
            architecture: self.architecture(),
            layout: self.layout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Must resolve to the identity channel; kept so a noisy request fails
    /// loudly instead of being ignored.
    pub noise: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed: 0,
            noise: "none".into(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synth,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Synthetic input dimension.
    pub dim: usize,
    pub n_per_class: usize,
    pub spread: f64,
    pub seed: u64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Target side for block downsampling; 0 keeps the original size.
    pub downsample: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synth,
            dim: 8,
            n_per_class: 100,
            spread: 0.3,
            seed: 0,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            downsample: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub shots: Vec<ShotBudget>,
    /// Noise specs: `none`, a preset name, or `p1:p2`.
    pub noise: Vec<String>,
    pub trajectories: usize,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub allocation: Allocation,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            shots: vec![
                ShotBudget::Finite(1),
                ShotBudget::Finite(10),
                ShotBudget::Finite(100),
                ShotBudget::Infinite,
            ],
            noise: vec!["none".into()],
            trajectories: NoiseEvalConfig::DEFAULT_TRAJECTORIES,
            repeats: 5,
            seeds: vec![0],
            allocation: Allocation::RoundRobin,
        }
    }
}

impl EvalSection {
    pub fn noise_settings(&self) -> Result<Vec<NoiseSetting>> {
        self.noise
            .iter()
            .map(|s| {
                Ok(NoiseSetting {
                    model: parse_noise(s)?,
                    trajectories: self.trajectories,
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Shots,
    #[serde(rename = "n_q")]
    NQubits,
    #[serde(rename = "N_b")]
    NBlocks,
    Tau,
    Noise,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Shots => "shots",
            SweepAxis::NQubits => "n_q",
            SweepAxis::NBlocks => "N_b",
            SweepAxis::Tau => "tau",
            SweepAxis::Noise => "noise",
        }
    }

    /// Whether each value needs its own trained model.
    pub fn retrains(self) -> bool {
        matches!(self, SweepAxis::NQubits | SweepAxis::NBlocks | SweepAxis::Tau)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shots" => Ok(SweepAxis::Shots),
            "n_q" => Ok(SweepAxis::NQubits),
            "N_b" => Ok(SweepAxis::NBlocks),
            "tau" => Ok(SweepAxis::Tau),
            "noise" => Ok(SweepAxis::Noise),
            other => Err(Error::config(format!(
                "sweep.axis {other:?} is not one of shots, n_q, N_b, tau, noise"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<SweepAxis>,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub data: DataSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub bounds: BoundInputs,
    pub output: OutputSection,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Check every range; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(2..=crate::sim::MAX_QUBITS).contains(&m.n_qubits) {
            return Err(field_err("model.n_qubits", format!("{} outside 2..=20", m.n_qubits)));
        }
        if m.n_blocks == 0 {
            return Err(field_err("model.n_blocks", "must be >= 1"));
        }
        if m.n_features == 0 {
            return Err(field_err("model.n_features", "must be >= 1"));
        }
        if m.n_classes < 2 {
            return Err(field_err("model.n_classes", format!("{} must be >= 2", m.n_classes)));
        }
        if m.extractor == ExtractorKind::Mlp && m.hidden == 0 {
            return Err(field_err("model.hidden", "must be >= 1 for the mlp extractor"));
        }
        match m.head {
            Head::Yomo if m.n_classes > 1 << m.n_qubits => {
                return Err(field_err(
                    "model.n_classes",
                    format!("{} exceeds 2^n_q = {} for the yomo head", m.n_classes, 1 << m.n_qubits),
                ))
            }
            Head::Vanilla if m.n_qubits < 4 => {
                return Err(field_err("model.n_qubits", "the vanilla head needs n_q >= 4"))
            }
            Head::Vanilla if m.n_classes > 10 => {
                return Err(field_err(
                    "model.n_classes",
                    "the vanilla head supports at most 10 classes",
                ))
            }
            _ => {}
        }

        let l = &self.loss;
        if !(l.tau > 0.0 && l.tau < 1.0) {
            return Err(field_err("loss.tau", format!("{} must lie in (0, 1)", l.tau)));
        }
        if !(l.gamma >= 0.0 && l.gamma.is_finite()) {
            return Err(field_err("loss.gamma", format!("{} must be >= 0", l.gamma)));
        }
        if !(l.omega >= 0.0 && l.omega.is_finite()) {
            return Err(field_err("loss.omega", format!("{} must be >= 0", l.omega)));
        }

        let t = &self.train;
        if t.epochs == 0 {
            return Err(field_err("train.epochs", "must be >= 1"));
        }
        if t.batch_size == 0 {
            return Err(field_err("train.batch_size", "must be >= 1"));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(field_err(
                "train.learning_rate",
                format!("{} must be positive", t.learning_rate),
            ));
        }
        parse_noise(&t.noise).map_err(|e| field_err("train.noise", e))?;

        let d = &self.data;
        match d.source {
            DataSource::Synth => {
                if d.dim < m.n_classes {
                    return Err(field_err(
                        "data.dim",
                        format!("{} must be >= model.n_classes = {}", d.dim, m.n_classes),
                    ));
                }
                if d.n_per_class < 5 {
                    return Err(field_err(
                        "data.n_per_class",
                        "must be >= 5 so both splits are non-empty",
                    ));
                }
                if !(d.spread >= 0.0 && d.spread.is_finite()) {
                    return Err(field_err("data.spread", format!("{} must be >= 0", d.spread)));
                }
            }
            DataSource::Idx => {
                for (name, p) in [
                    ("data.train_images", &d.train_images),
                    ("data.train_labels", &d.train_labels),
                    ("data.test_images", &d.test_images),
                    ("data.test_labels", &d.test_labels),
                ] {
                    if p.is_none() {
                        return Err(field_err(name, "required when data.source = \"idx\""));
                    }
                }
            }
        }

        let e = &self.eval;
        if e.shots.is_empty() {
            return Err(field_err("eval.shots", "must list at least one budget"));
        }
        if e.noise.is_empty() {
            return Err(field_err("eval.noise", "must list at least one noise spec"));
        }
        for s in &e.noise {
            parse_noise(s).map_err(|err| field_err("eval.noise", err))?;
        }
        if e.trajectories == 0 {
            return Err(field_err("eval.trajectories", "must be >= 1"));
        }
        if e.repeats == 0 {
            return Err(field_err("eval.repeats", "must be >= 1"));
        }
        if e.seeds.is_empty() {
            return Err(field_err("eval.seeds", "must list at least one seed"));
        }
        Ok(())
    }

    pub fn train_noise(&self) -> Result<NoiseModel> {
        parse_noise(&self.train.noise)
    }

    pub fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::config(format!("cannot encode config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot encode config: {e}")))
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        table
            .try_into::<Self>()
            .map_err(|e| Error::config(e.to_string().trim().to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::config(e.to_string().trim().to_string()))
}

/// Recursively overlay `over` onto `base`.
pub fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Apply one `section.key=value` override. The value is read as TOML and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("override key {path:?} is malformed")));
    }
    let raw = raw.trim();
    let value = parse_table(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override path {path:?} crosses a non-table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Build and validate a config from defaults, an optional base table, an
/// optional file and overrides.
pub fn resolve(base: Option<toml::Table>, file: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table = ExperimentConfig::default().to_table()?;
    if let Some(b) = base {
        merge(&mut table, b);
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        merge(&mut table, parse_table(&text)?);
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg = ExperimentConfig::from_table(table)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.loss.tau, 0.6);
        assert_eq!(cfg.train.learning_rate, 5e-3);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.batch_size, 128);
    }

    #[test]
    fn precedence() {
        let mut base = toml::Table::new();
        apply_override(&mut base, "model.n_blocks=7").unwrap();
        apply_override(&mut base, "loss.tau=0.7").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "[loss]\ntau = 0.8\n[eval]\nshots = [1, \"inf\"]\n").unwrap();
        let cfg = resolve(Some(base), Some(&file), &["loss.tau=0.9".into()]).unwrap();
        assert_eq!(cfg.model.n_blocks, 7);
        assert_eq!(cfg.loss.tau, 0.9);
        assert_eq!(cfg.eval.shots, vec![ShotBudget::Finite(1), ShotBudget::Infinite]);
        let cfg = resolve(
            None,
            None,
            &["eval.noise=[\"IonQ Forte\"]".into(), "sweep.axis=N_b".into()],
        )
        .unwrap();
        assert_eq!(cfg.eval.noise, vec!["IonQ Forte".to_string()]);
        assert_eq!(cfg.sweep.axis, Some(SweepAxis::NBlocks));
    }

    #[test]
    fn validation_names_fields() {
        let cases = [
            ("loss.tau=1.5", "loss.tau"),
            ("loss.gamma=-1", "loss.gamma"),
            ("model.n_classes=17", "model.n_classes"),
            ("train.epochs=0", "train.epochs"),
            ("train.learning_rate=0", "train.learning_rate"),
            ("eval.shots=[]", "eval.shots"),
            ("eval.repeats=0", "eval.repeats"),
            ("eval.noise=[\"nope\"]", "eval.noise"),
            ("data.spread=-0.1", "data.spread"),
            ("data.source=\"idx\"", "data.train_images"),
        ];
        for (o, field) in cases {
            let err = resolve(None, None, &[o.to_string()]).unwrap_err();
            assert!(err.to_string().contains(field), "{o}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
        let err = resolve(None, None, &["model.bogus=1".into()]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(resolve(None, None, &["eval.shots=[0]".into()]).is_err());
    }
}
