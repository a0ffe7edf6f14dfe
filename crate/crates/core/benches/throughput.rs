//! Sequential vs pooled throughput of the two hot paths: noisy trajectory
//! evaluation and one training epoch.
//!
//! With the `parallel` feature each workload runs inside a 1-thread pool and
//! inside the default pool. Without it only the sequential path exists.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shotlab::circuit::EncoderLayout;
use shotlab::data::synth_blobs;
use shotlab::extractor::Architecture;
use shotlab::heads::Head;
use shotlab::inference::{evaluate_accuracy, EvalOptions, NoiseSetting, ShotBudget};
use shotlab::loss::LossConfig;
use shotlab::model::{Model, ModelSpec};
use shotlab::noise::{preset, NoiseModel};
use shotlab::train::{train, TrainConfig};

fn model() -> Model {
    let spec = ModelSpec {
        head: Head::Yomo,
        n_qubits: 4,
        n_blocks: 5,
        n_classes: 4,
        input_dim: 8,
        n_features: 8,
        architecture: Architecture::Mlp { hidden: 16 },
        layout: EncoderLayout::Layerwise,
    };
    Model::init(spec, LossConfig::default(), 0).unwrap()
}

type Runner = Box<dyn Fn(&mut (dyn FnMut() + Send))>;

fn pools() -> Vec<(String, Runner)> {
    #[cfg(feature = "parallel")]
    {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let all = rayon::ThreadPoolBuilder::new().build().unwrap();
        let label = format!("default-{}", all.current_num_threads());
        vec![
            (
                "pool-1".to_string(),
                Box::new(move |f: &mut (dyn FnMut() + Send)| one.install(f)),
            ),
            (label, Box::new(move |f: &mut (dyn FnMut() + Send)| all.install(f))),
        ]
    }
    #[cfg(not(feature = "parallel"))]
    {
        vec![("sequential".to_string(), Box::new(|f: &mut (dyn FnMut() + Send)| f()))]
    }
}

fn noisy_eval(c: &mut Criterion) {
    let (_, test) = synth_blobs(4, 8, 20, 0.3, 0).unwrap();
    let inputs = test.input_refs();
    let model = model();
    let opts = EvalOptions {
        noise: Some(NoiseSetting {
            model: preset("IonQ Forte").unwrap(),
            trajectories: 200,
        }),
        ..EvalOptions::new(ShotBudget::Finite(10), 5, 0)
    };
    let mut group = c.benchmark_group("noisy_eval");
    group.sample_size(10);
    for (label, run) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                run(&mut || {
                    evaluate_accuracy(&model, &inputs, test.labels(), &opts).unwrap();
                })
            })
        });
    }
    group.finish();
}

fn train_epoch(c: &mut Criterion) {
    let (train_set, _) = synth_blobs(4, 8, 100, 0.3, 0).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 128,
        learning_rate: 0.01,
    };
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for (label, run) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                run(&mut || {
                    let mut m = model();
                    train(&mut m, &train_set, None, &cfg, &NoiseModel::noiseless(), 0).unwrap();
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, noisy_eval, train_epoch);
criterion_main!(benches);
