//! Train / eval / sweep / bounds entry points and their CSV outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::bounds::{
    fewer_shots_threshold, majority_vote_error_exact, single_shot_threshold, smaller_delta_threshold,
    vanilla_error_bound, vanilla_shots, yomo_error_bound, yomo_shots, BoundInputs, Threshold,
};
use crate::data::{downsample, load_idx, synth_blobs, Dataset, Split};
use crate::heads::Head;
use crate::inference::{evaluate_accuracy, EvalOptions, ShotBudget};
use crate::model::Model;
use crate::train::{train, EpochRecord};
use crate::{par, Error, Result};

use super::checkpoint::Checkpoint;
use super::config::{DataSource, ExperimentConfig, SweepAxis};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRACE_FILE: &str = "loss_trace.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BOUNDS_FILE: &str = "bounds.csv";

/// Train and test splits described by the data section.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let d = &cfg.data;
    let k = cfg.model.n_classes;
    match d.source {
        DataSource::Synth => synth_blobs(k, d.dim, d.n_per_class, d.spread, d.seed),
        DataSource::Idx => {
            let path = |p: &Option<PathBuf>, field: &str| {
                p.clone()
                    .ok_or_else(|| Error::config(format!("data.{field} is required for idx data")))
            };
            let mut train = load_idx(
                path(&d.train_images, "train_images")?,
                path(&d.train_labels, "train_labels")?,
            )?;
            let mut test = load_idx(
                path(&d.test_images, "test_images")?,
                path(&d.test_labels, "test_labels")?,
            )?
            .with_split(Split::Test);
            if d.downsample > 0 {
                train = downsample(&train, d.downsample)?;
                test = downsample(&test, d.downsample)?;
            }
            for ds in [&train, &test] {
                if ds.n_classes() > k {
                    return Err(Error::config(format!(
                        "model.n_classes = {k} but the data has labels up to {}",
                        ds.n_classes() - 1
                    )));
                }
            }
            if train.dim() != test.dim() {
                return Err(Error::config(format!(
                    "train dimension {} differs from test dimension {}",
                    train.dim(),
                    test.dim()
                )));
            }
            Ok((train, test))
        }
    }
}

pub struct TrainedRun {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub checkpoint: Checkpoint,
}

/// Initialise and train a model from `cfg`; nothing touches the disk.
pub fn train_run(cfg: &ExperimentConfig, train_set: &Dataset, test_set: &Dataset) -> Result<TrainedRun> {
    cfg.validate()?;
    let spec = cfg.model.spec(train_set.dim());
    let mut model = Model::init(spec, cfg.loss, cfg.train.seed)?;
    let history = train(
        &mut model,
        train_set,
        Some(test_set),
        &cfg.train.train_config(),
        &cfg.train_noise()?,
        cfg.train.seed,
    )?;
    let checkpoint = Checkpoint::new(cfg, &model, &history);
    Ok(TrainedRun {
        model,
        history,
        checkpoint,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

pub fn write_trace_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "ce", "ps", "entropy", "total", "test_loss"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.ce.to_string(),
            r.ps.to_string(),
            r.entropy.to_string(),
            r.total.to_string(),
            r.test_loss.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub trace_path: PathBuf,
    pub run: TrainedRun,
}

/// Train, then write the checkpoint and loss trace under `output.dir`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    let (train_set, test_set) = load_data(cfg)?;
    let run = train_run(cfg, &train_set, &test_set)?;
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    let trace_path = dir.join(TRACE_FILE);
    run.checkpoint.save(&checkpoint_path)?;
    write_trace_csv(&trace_path, &run.history)?;
    Ok(TrainArtifacts {
        checkpoint_path,
        trace_path,
        run,
    })
}

/// One evaluation result.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub run_id: String,
    pub head: Head,
    pub n_q: usize,
    pub n_b: usize,
    pub tau: f64,
    pub noise_name: String,
    pub shots: ShotBudget,
    pub repeat_count: usize,
    pub accuracy: f64,
    pub std_err: f64,
    pub seed: u64,
}

pub const EVAL_HEADER: [&str; 11] = [
    "run_id",
    "head",
    "n_q",
    "N_b",
    "tau",
    "noise_name",
    "shots",
    "repeat_count",
    "accuracy",
    "std_err",
    "seed",
];

impl EvalRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.head.to_string(),
            self.n_q.to_string(),
            self.n_b.to_string(),
            self.tau.to_string(),
            self.noise_name.clone(),
            self.shots.to_string(),
            self.repeat_count.to_string(),
            self.accuracy.to_string(),
            self.std_err.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Evaluate `ckpt` on `test` for every (noise, shots, seed) in `cfg.eval`,
/// in that nesting order.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, cfg: &ExperimentConfig, test: &Dataset) -> Result<Vec<EvalRow>> {
    if test.dim() != ckpt.spec.input_dim {
        return Err(Error::format(
            0,
            format!(
                "checkpoint expects input dimension {} but the test data has {}",
                ckpt.spec.input_dim,
                test.dim()
            ),
        ));
    }
    let model = ckpt.model()?;
    let run_id = ckpt.run_id()?;
    let inputs = test.input_refs();
    let mut rows = Vec::new();
    for (spec, noise) in cfg.eval.noise.iter().zip(cfg.eval.noise_settings()?) {
        let noise_name = if noise.model.is_noiseless() {
            "none".to_string()
        } else {
            spec.trim().to_string()
        };
        let noise = (!noise.model.is_noiseless()).then_some(noise);
        for &shots in &cfg.eval.shots {
            for &seed in &cfg.eval.seeds {
                let opts = EvalOptions {
                    noise: noise.clone(),
                    allocation: cfg.eval.allocation,
                    ..EvalOptions::new(shots, cfg.eval.repeats, seed)
                };
                let rep = evaluate_accuracy(&model, &inputs, test.labels(), &opts)?;
                rows.push(EvalRow {
                    run_id: run_id.clone(),
                    head: ckpt.spec.head,
                    n_q: ckpt.spec.n_qubits,
                    n_b: ckpt.spec.n_blocks,
                    tau: ckpt.config.loss.tau,
                    noise_name: noise_name.clone(),
                    shots,
                    repeat_count: rep.repeats,
                    accuracy: rep.accuracy,
                    std_err: rep.std_err,
                    seed,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(EVAL_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Evaluate a saved checkpoint. The model section of `cfg` must match the
/// one the checkpoint was trained with.
pub fn run_eval(checkpoint: &Path, cfg: &ExperimentConfig) -> Result<Vec<EvalRow>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.config.model != cfg.model {
        return Err(Error::format(
            0,
            format!(
                "checkpoint {} was trained with a different [model] section",
                checkpoint.display()
            ),
        ));
    }
    let (_, test) = load_data(cfg)?;
    let rows = evaluate_checkpoint(&ckpt, cfg, &test)?;
    ensure_dir(&cfg.output.dir)?;
    write_eval_csv(&cfg.output.dir.join(EVAL_FILE), &rows)?;
    Ok(rows)
}

/// One sweep output line: either an evaluation or the failure of its cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub result: std::result::Result<EvalRow, String>,
}

fn cell_config(base: &ExperimentConfig, axis: SweepAxis, value: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let bad = |e: &dyn fmt::Display| Error::config(format!("sweep value {value:?} for {}: {e}", axis.name()));
    match axis {
        SweepAxis::Shots => cfg.eval.shots = vec![value.parse().map_err(|e: Error| bad(&e))?],
        SweepAxis::Noise => cfg.eval.noise = vec![value.to_string()],
        SweepAxis::NQubits => cfg.model.n_qubits = value.trim().parse().map_err(|e| bad(&e))?,
        SweepAxis::NBlocks => cfg.model.n_blocks = value.trim().parse().map_err(|e| bad(&e))?,
        SweepAxis::Tau => cfg.loss.tau = value.trim().parse().map_err(|e| bad(&e))?,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run every value of `cfg.sweep.axis`. Axes that change the model retrain
/// per value; shots and noise reuse one trained model. A failing cell
/// yields one row carrying its error and the sweep goes on.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let axis = cfg
        .sweep
        .axis
        .ok_or_else(|| Error::config("sweep.axis must be set to shots, n_q, N_b, tau or noise"))?;
    if cfg.sweep.values.is_empty() {
        return Err(Error::config("sweep.values must not be empty"));
    }
    let (train_set, test_set) = load_data(cfg)?;
    let shared = if axis.retrains() {
        None
    } else {
        Some(train_run(cfg, &train_set, &test_set).map(|r| r.checkpoint))
    };
    let cells = par::map_slice(&cfg.sweep.values, |_, value| -> Result<Vec<EvalRow>> {
        let cell = cell_config(cfg, axis, value)?;
        let ckpt = match &shared {
            Some(Ok(c)) => c.clone(),
            Some(Err(e)) => return Err(Error::argument(format!("shared training failed: {e}"))),
            None => train_run(&cell, &train_set, &test_set)?.checkpoint,
        };
        evaluate_checkpoint(&ckpt, &cell, &test_set)
    });
    let mut rows = Vec::new();
    for (value, cell) in cfg.sweep.values.iter().zip(cells) {
        match cell {
            Ok(evals) => rows.extend(evals.into_iter().map(|r| SweepRow {
                axis,
                value: value.clone(),
                result: Ok(r),
            })),
            Err(e) => rows.push(SweepRow {
                axis,
                value: value.clone(),
                result: Err(e.to_string()),
            }),
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["axis", "value"];
    header.extend(EVAL_HEADER);
    header.push("error");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.axis.name().to_string(), r.value.clone()];
        match &r.result {
            Ok(e) => {
                rec.extend(e.record());
                rec.push(String::new());
            }
            Err(msg) => {
                rec.extend(std::iter::repeat_n(String::new(), EVAL_HEADER.len()));
                rec.push(msg.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let rows = sweep(cfg)?;
    ensure_dir(&cfg.output.dir)?;
    write_sweep_csv(&cfg.output.dir.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundValue {
    Real(f64),
    Count(u64),
    Vacuous,
}

impl fmt::Display for BoundValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundValue::Real(v) => write!(f, "{v:.14e}"),
            BoundValue::Count(n) => write!(f, "{n}"),
            BoundValue::Vacuous => f.write_str("vacuous"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub quantity: &'static str,
    pub model: &'static str,
    pub value: BoundValue,
}

/// Every bound and threshold for one parameter set.
pub fn bounds_table(b: &BoundInputs) -> Result<Vec<BoundRow>> {
    b.validate()?;
    let row = |quantity, model, value| BoundRow { quantity, model, value };
    let (l, k) = (b.lipschitz, b.k);
    Ok(vec![
        row("shots_for_delta", "yomo", BoundValue::Count(yomo_shots(b.p, b.delta)?)),
        row(
            "shots_for_delta",
            "vanilla",
            BoundValue::Count(vanilla_shots(b.margin, l, k, b.delta)?),
        ),
        row("error_bound", "yomo", BoundValue::Real(yomo_error_bound(b.p, b.n)?)),
        row(
            "error_bound",
            "vanilla",
            BoundValue::Real(vanilla_error_bound(b.margin, l, k, b.n)?),
        ),
        row(
            "majority_vote_error_exact",
            "yomo",
            BoundValue::Real(majority_vote_error_exact(b.p, b.n)?),
        ),
        row(
            "fewer_shots_threshold",
            "both",
            BoundValue::Real(fewer_shots_threshold(b.margin, l, k, b.delta)?),
        ),
        row(
            "smaller_delta_threshold",
            "both",
            match smaller_delta_threshold(b.margin, l, k, b.n)? {
                Threshold::Value(v) => BoundValue::Real(v),
                Threshold::Vacuous => BoundValue::Vacuous,
            },
        ),
        row(
            "single_shot_threshold",
            "both",
            BoundValue::Real(single_shot_threshold(b.margin, l, k)?),
        ),
    ])
}

pub fn write_bounds_csv(path: &Path, rows: &[BoundRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["quantity", "model", "value"])?;
    for r in rows {
        w.write_record([r.quantity, r.model, &r.value.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn run_bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    let rows = bounds_table(&cfg.bounds)?;
    ensure_dir(&cfg.output.dir)?;
    write_bounds_csv(&cfg.output.dir.join(BOUNDS_FILE), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.model.n_qubits = 2;
        cfg.model.n_blocks = 2;
        cfg.model.n_features = 4;
        cfg.data.n_per_class = 10;
        cfg.train.epochs = 2;
        cfg.train.batch_size = 16;
        cfg.eval.shots = vec![ShotBudget::Finite(3), ShotBudget::Infinite];
        cfg.eval.repeats = 2;
        cfg
    }

    #[test]
    fn sweep_keeps_order_and_isolates_failures() {
        let mut cfg = tiny();
        cfg.sweep.axis = Some(SweepAxis::NQubits);
        cfg.sweep.values = vec!["3".into(), "1".into(), "2".into()];
        let rows = sweep(&cfg).unwrap();
        let values: Vec<&str> = rows.iter().map(|r| r.value.as_str()).collect();
        assert_eq!(values, ["3", "3", "1", "2", "2"]);
        assert!(rows[2].result.as_ref().unwrap_err().contains("model.n_qubits"));
        assert_eq!(rows[0].result.as_ref().unwrap().n_q, 3);
        assert_eq!(rows[4].result.as_ref().unwrap().shots, ShotBudget::Infinite);

        cfg.sweep.values.clear();
        assert_eq!(sweep(&cfg).unwrap_err().exit_code(), 2);
        cfg.sweep.axis = None;
        assert!(sweep(&cfg).is_err());
    }

    #[test]
    fn bound_values_format() {
        let rows = bounds_table(&BoundInputs::default()).unwrap();
        assert_eq!(rows.len(), 8);
        let exact = yomo_error_bound(0.9, 1).unwrap();
        let back: f64 = rows[2].value.to_string().parse().unwrap();
        assert!(((back - exact) / exact).abs() < 1e-14);
        let tight = BoundInputs {
            n: 1,
            ..BoundInputs::default()
        };
        let t = bounds_table(&tight).unwrap();
        assert_eq!(t[6].value, BoundValue::Vacuous);
        let bad = BoundInputs {
            p: 0.4,
            ..BoundInputs::default()
        };
        assert_eq!(bounds_table(&bad).unwrap_err().exit_code(), 4);
    }
}
