mod common;

use shotlab::experiment::checkpoint::Checkpoint;
use shotlab::experiment::config::DataSource;
use shotlab::experiment::runner::{load_data, run_eval, run_train, train_run, CHECKPOINT_FILE, EVAL_FILE, TRACE_FILE};
use shotlab::experiment::{resolve, ExperimentConfig};
use shotlab::heads::Head;
use shotlab::Error;

use common::mnist_dir;

fn quick(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = resolve(
        None,
        None,
        &[
            "model.n_qubits=3".into(),
            "model.n_blocks=2".into(),
            "model.n_features=4".into(),
            "data.n_per_class=10".into(),
            "train.epochs=3".into(),
            "train.batch_size=8".into(),
            "eval.shots=[1, 5, \"inf\"]".into(),
            "eval.repeats=3".into(),
            "eval.seeds=[0, 1]".into(),
            "eval.noise=[\"none\", \"0.01:0.05\"]".into(),
            "eval.trajectories=20".into(),
        ],
    )
    .unwrap();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

#[test]
fn training_artifacts_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_train(&quick(a.path())).unwrap();
    let rb = run_train(&quick(b.path())).unwrap();
    for name in [CHECKPOINT_FILE, TRACE_FILE] {
        let same = std::fs::read(a.path().join(name)).unwrap() == std::fs::read(b.path().join(name)).unwrap();
        assert!(same, "{name} differs between identical runs");
    }
    let trace = std::fs::read_to_string(&ra.trace_path).unwrap();
    assert!(trace.starts_with("epoch,ce,ps,entropy,total,test_loss\n"));
    assert_eq!(trace.lines().count(), 4);

    let loaded = Checkpoint::load(&rb.checkpoint_path).unwrap();
    assert_eq!(loaded.model().unwrap().params(), ra.run.model.params());
    assert_eq!(loaded.history.epochs, 3);
    assert_eq!(loaded.config.model, quick(a.path()).model);
    assert_eq!(loaded.config.train, quick(a.path()).train);

    let mut other = quick(a.path());
    other.train.seed = 1;
    let rc = train_run(&other, &load_data(&other).unwrap().0, &load_data(&other).unwrap().1).unwrap();
    assert_ne!(rc.model.params(), ra.run.model.params());
}

#[test]
fn eval_rows_follow_the_configured_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path());
    let art = run_train(&cfg).unwrap();
    let rows = run_eval(&art.checkpoint_path, &cfg).unwrap();
    assert_eq!(rows.len(), 2 * 3 * 2);
    assert_eq!(rows[0].noise_name, "none");
    assert_eq!(rows[6].noise_name, "0.01:0.05");
    assert!(rows.iter().all(|r| r.head == Head::Yomo && r.n_q == 3 && r.n_b == 2));
    let inf: Vec<_> = rows.iter().filter(|r| r.shots.finite().is_none()).collect();
    assert!(inf.iter().all(|r| r.repeat_count == 1 && r.std_err == 0.0));
    let first = std::fs::read(dir.path().join(EVAL_FILE)).unwrap();
    run_eval(&art.checkpoint_path, &cfg).unwrap();
    assert_eq!(first, std::fs::read(dir.path().join(EVAL_FILE)).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("run_id,head,n_q,N_b,tau,noise_name,shots,repeat_count,accuracy,std_err,seed\n"));
    assert!(text.contains(",inf,1,"));

    let mut mismatched = cfg.clone();
    mismatched.model.n_blocks = 3;
    let err = run_eval(&art.checkpoint_path, &mismatched).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
}

#[test]
fn idx_data_source_loads_the_fixture() {
    let dir = mnist_dir();
    let path = |f: &str| format!("{:?}", dir.join(f).display().to_string());
    let cfg = resolve(
        None,
        None,
        &[
            "data.source=\"idx\"".into(),
            format!("data.train_images={}", path("train-images.idx3-ubyte")),
            format!("data.train_labels={}", path("train-labels.idx1-ubyte")),
            format!("data.test_images={}", path("test-images.idx3-ubyte")),
            format!("data.test_labels={}", path("test-labels.idx1-ubyte")),
            "data.downsample=7".into(),
            "model.n_classes=10".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.data.source, DataSource::Idx);
    let (tr, te) = load_data(&cfg).unwrap();
    assert_eq!((tr.len(), te.len(), tr.dim()), (2000, 500, 49));

    let mut few = cfg.clone();
    few.model.n_classes = 4;
    assert_eq!(load_data(&few).unwrap_err().exit_code(), 2);
}
