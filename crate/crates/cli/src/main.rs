use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shotlab::experiment::runner::{BOUNDS_FILE, EVAL_FILE, SWEEP_FILE};
use shotlab::experiment::{
    resolve, run_bounds, run_eval, run_sweep, run_train, Checkpoint, ConfigTable, ExperimentConfig,
};
use shotlab::{par, Result};

#[derive(Parser)]
#[command(
    name = "shotlab",
    version,
    about = "Train and evaluate shot-frugal quantum classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoint.bin and loss_trace.csv.
    Train(Common),
    /// Evaluate a checkpoint over the configured shots, noise and seeds.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one axis (shots, n_q, N_b, tau, noise).
    Sweep {
        /// Shorthand for `--set sweep.axis=...`.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values; shorthand for `sweep.values`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the shot bounds and thresholds for the [bounds] section.
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed; for eval it replaces the evaluation seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = library default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Override any field, e.g. `--set loss.tau=0.7`; repeatable, applied after --config and --seed.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(
        &self,
        base: Option<ConfigTable>,
        extra: &[String],
        seed_targets: SeedTargets,
    ) -> Result<ExperimentConfig> {
        par::init_threads(self.threads)?;
        let mut sets: Vec<String> = extra.to_vec();
        if let Some(s) = self.seed {
            if seed_targets.train {
                sets.push(format!("train.seed={s}"));
            }
            if seed_targets.eval {
                sets.push(format!("eval.seeds=[{s}]"));
            }
        }
        sets.extend(self.overrides.iter().cloned());
        let mut cfg = resolve(base, self.config.as_deref(), &sets)?;
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy)]
struct SeedTargets {
    train: bool,
    eval: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve(
                None,
                &[],
                SeedTargets {
                    train: true,
                    eval: false,
                },
            )?;
            let art = run_train(&cfg)?;
            let last = art.run.history.last().expect("at least one epoch");
            println!("checkpoint {}", art.checkpoint_path.display());
            println!("loss trace {}", art.trace_path.display());
            println!("final train loss {:.6} (test {:.6})", last.total, last.test_loss);
        }
        Command::Eval { checkpoint, common } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let cfg = common.resolve(
                Some(ckpt.config.to_table()?),
                &[],
                SeedTargets {
                    train: false,
                    eval: true,
                },
            )?;
            let rows = run_eval(&checkpoint, &cfg)?;
            for r in &rows {
                println!(
                    "noise={} shots={} seed={} accuracy={:.4} se={:.4}",
                    r.noise_name, r.shots, r.seed, r.accuracy, r.std_err
                );
            }
            println!("wrote {}", cfg.output.dir.join(EVAL_FILE).display());
        }
        Command::Sweep { axis, values, common } => {
            let mut extra = Vec::new();
            if let Some(a) = axis {
                extra.push(format!("sweep.axis={a:?}"));
            }
            if !values.is_empty() {
                let quoted: Vec<String> = values.iter().map(|v| format!("{:?}", v.trim())).collect();
                extra.push(format!("sweep.values=[{}]", quoted.join(",")));
            }
            let cfg = common.resolve(
                None,
                &extra,
                SeedTargets {
                    train: true,
                    eval: true,
                },
            )?;
            let rows = run_sweep(&cfg)?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!("{} rows ({failed} failed)", rows.len());
            println!("wrote {}", cfg.output.dir.join(SWEEP_FILE).display());
        }
        Command::Bounds(common) => {
            let cfg = common.resolve(
                None,
                &[],
                SeedTargets {
                    train: false,
                    eval: false,
                },
            )?;
            for r in run_bounds(&cfg)? {
                println!("{:<26} {:<8} {}", r.quantity, r.model, r.value);
            }
            println!("wrote {}", cfg.output.dir.join(BOUNDS_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
