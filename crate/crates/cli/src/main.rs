use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use satneuro_cli::compare::{compare_models, save_comparison};
use satneuro_cli::metrics::write_report;
use satneuro_cli::pipeline::{
    evaluate_cnn, evaluate_snn, load_dataset, save_dataset, train_cnn, train_snn, FeatureCache, ModelEvaluation,
    Split,
};
use satneuro_cli::sweep::{run_sweep, write_sweep, SweepAxis, SweepSpec};
use satneuro_cli::{CnnConfig, Error, Manifest, RunConfig, SnnConfig};
use satneuro_core::checkpoint::Checkpoint;
use satneuro_core::configspace::Constraints;
use satneuro_core::oracle::{build_dataset_with, DatasetSpec};
use satneuro_snn::LayeredSnn;

#[derive(Parser)]
#[command(name = "satneuro", version, about = "Payload configuration classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize traffic, label it with the exhaustive oracle and split it.
    GenData {
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relabel a dataset under other constraints or objective weights.
    Label {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Total power budget in W.
        #[arg(long)]
        pmax: Option<f64>,
        /// Total bandwidth budget in Hz.
        #[arg(long)]
        wmax: Option<f64>,
        /// Mismatch weight per bps.
        #[arg(long)]
        beta0: Option<f64>,
        /// Power weight per W.
        #[arg(long)]
        beta1: Option<f64>,
        /// Bandwidth weight per Hz.
        #[arg(long)]
        beta2: Option<f64>,
        #[arg(long)]
        min_support: Option<f64>,
    },
    /// Train the spiking classifier; `--out` is the checkpoint path.
    TrainSnn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the convolutional baseline; `--out` is the checkpoint path.
    TrainCnn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split and write `eval.json`.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "validation")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one SNN per value of a hyperparameter axis.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// encoder, steps, ds, rho or theta_enc.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare SNN and CNN evaluations of the same split.
    Compare {
        #[arg(long)]
        snn: PathBuf,
        #[arg(long)]
        cnn: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics, confusion matrix and ROC curves of an evaluation.
    Report {
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Usage errors exit with 1, runtime failures with 2.
enum Failure {
    Usage(String),
    Runtime(Error),
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(Error, satneuro_core::Error, satneuro_snn::Error, satneuro_cnn::Error, std::io::Error, serde_json::Error);

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn progress(n: usize, total: usize) {
    if n % 500 == 0 || n == total {
        eprintln!("labeled {n}/{total}");
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::GenData { samples, seed, out } => {
            let spec = DatasetSpec::reference(samples, seed);
            spec.validate().map_err(|e| usage(e.into()))?;
            let ds = build_dataset_with(&spec, |n| progress(n, samples))?;
            let summary = save_dataset(&out, &ds)?;
            Manifest::new(BTreeMap::from([("data".into(), seed)]), serde_json::to_value(&spec)?)
                .write(&out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Label { data, out, pmax, wmax, beta0, beta1, beta2, min_support } => {
            let old = load_dataset(&data)?;
            let mut spec = old.spec.clone();
            spec.constraints = Constraints::new(
                pmax.unwrap_or(spec.constraints.p_max_w),
                wmax.unwrap_or(spec.constraints.w_max_hz),
            );
            spec.weights.beta0 = beta0.unwrap_or(spec.weights.beta0);
            spec.weights.beta1 = beta1.unwrap_or(spec.weights.beta1);
            spec.weights.beta2 = beta2.unwrap_or(spec.weights.beta2);
            spec.min_support = min_support.unwrap_or(spec.min_support);
            spec.validate().map_err(|e| usage(e.into()))?;
            let total = spec.n_samples;
            let ds = build_dataset_with(&spec, |n| progress(n, total))?;
            let summary = save_dataset(&out, &ds)?;
            Manifest::new(BTreeMap::from([("data".into(), spec.seed)]), serde_json::to_value(&spec)?)
                .write(&out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::TrainSnn { data, config, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref()).map_err(usage)?;
            let ds = load_dataset(&data)?;
            let feats = FeatureCache::new().get(&ds, &cfg.snn.preprocess)?;
            let run = train_snn(&ds, &feats, &cfg.snn, |r| {
                eprintln!("epoch {} loss {:.5} val_loss {:.5} val_acc {:.4}", r.epoch, r.train_loss, r.val_loss, r.val_accuracy)
            })?;
            let extra = serde_json::json!({
                "config": cfg.snn,
                "history": run.history,
                "feature_hash": ds.feature_hash,
            });
            let dir = parent_dir(&out);
            std::fs::create_dir_all(&dir)?;
            run.net.save(&out, extra)?;
            run.evaluation.save(&dir.join("eval.json"))?;
            Manifest::new(seeds(&cfg, ds.spec.seed), serde_json::to_value(cfg)?).write(&dir)?;
            println!("validation accuracy {:.4}", run.evaluation.accuracy);
        }
        Command::TrainCnn { data, config, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref()).map_err(usage)?;
            let ds = load_dataset(&data)?;
            let feats = FeatureCache::new().get(&ds, &cfg.cnn.preprocess)?;
            let run = train_cnn(&ds, &feats, &cfg.cnn, |r| {
                eprintln!("epoch {} loss {:.5} val_loss {:.5} val_acc {:.4}", r.epoch, r.train_loss, r.val_loss, r.val_accuracy)
            })?;
            let extra = serde_json::json!({
                "config": cfg.cnn,
                "history": run.history,
                "feature_hash": ds.feature_hash,
            });
            let dir = parent_dir(&out);
            std::fs::create_dir_all(&dir)?;
            satneuro_cnn::train::save(&run.net, &out, extra)?;
            run.evaluation.save(&dir.join("eval.json"))?;
            Manifest::new(seeds(&cfg, ds.spec.seed), serde_json::to_value(cfg)?).write(&dir)?;
            println!("validation accuracy {:.4}", run.evaluation.accuracy);
        }
        Command::Eval { model, data, split, out } => {
            let split: Split = split.parse().map_err(usage)?;
            let ds = load_dataset(&data)?;
            let ck = Checkpoint::load(&model)?;
            let eval = match ck.kind.as_str() {
                "snn" => {
                    let (net, extra) = LayeredSnn::from_checkpoint(&ck)?;
                    let cfg: SnnConfig = serde_json::from_value(extra["config"].clone())?;
                    let feats = FeatureCache::new().get(&ds, &cfg.preprocess)?;
                    evaluate_snn(&net, &ds, &feats, &cfg, split)?
                }
                "cnn" => {
                    let (net, extra) = satneuro_cnn::train::from_checkpoint(&ck)?;
                    let cfg: CnnConfig = serde_json::from_value(extra["config"].clone())?;
                    let feats = FeatureCache::new().get(&ds, &cfg.preprocess)?;
                    evaluate_cnn(&net, &ds, &feats, &cfg, split)?
                }
                other => return Err(Failure::Usage(format!("unknown model kind '{other}'"))),
            };
            eval.save(&out.join("eval.json"))?;
            Manifest::new(BTreeMap::from([("data".into(), ds.spec.seed)]), serde_json::json!({"model": model, "split": split}))
                .write(&out)?;
            println!("{} accuracy {:.4} on {} examples", eval.kind, eval.accuracy, eval.labels.len());
        }
        Command::Sweep { data, axis, values, config, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref()).map_err(usage)?;
            let axis: SweepAxis = axis.parse().map_err(usage)?;
            let spec = SweepSpec::new(axis, values).map_err(usage)?;
            let ds = load_dataset(&data)?;
            let points = run_sweep(&spec, &ds, &mut FeatureCache::new(), &cfg.snn)?;
            write_sweep(&out, &spec, &points)?;
            Manifest::new(seeds(&cfg, ds.spec.seed), serde_json::json!({"sweep": spec, "base": cfg.snn})).write(&out)?;
            for p in &points {
                println!("{} = {}: accuracy {:.4}, input spikes {:.1}", axis.name(), p.value, p.accuracy, p.input_spikes);
            }
        }
        Command::Compare { snn, cnn, out } => {
            let a = ModelEvaluation::load(&snn)?;
            let b = ModelEvaluation::load(&cnn)?;
            if a.kind != "snn" || b.kind != "cnn" {
                return Err(Failure::Usage("--snn and --cnn must point at SNN and CNN evaluations".into()));
            }
            let c = compare_models(&a, &b)?;
            std::fs::create_dir_all(&out)?;
            save_comparison(&out.join("comparison.csv"), &c)?;
            Manifest::new(BTreeMap::new(), serde_json::json!({"snn": snn, "cnn": cnn})).write(&out)?;
            println!("{}", serde_json::to_string_pretty(&c)?);
        }
        Command::Report { eval, data, out } => {
            let e = ModelEvaluation::load(&eval)?;
            let ds = load_dataset(&data)?;
            let r = e.report(&ds)?;
            write_report(&out, &r)?;
            Manifest::new(BTreeMap::from([("data".into(), ds.spec.seed)]), serde_json::json!({"eval": eval})).write(&out)?;
            println!(
                "accuracy {:.4}, capacity gap {:.3} Mbps",
                r.accuracy,
                r.capacity_gap_bps.unwrap_or(f64::NAN) / 1e6
            );
        }
    }
    Ok(())
}

fn seeds(cfg: &RunConfig, data_seed: u64) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("data".into(), data_seed),
        ("snn_init".into(), cfg.snn.init_seed),
        ("snn_shuffle".into(), cfg.snn.train.seed),
        ("snn_encode".into(), cfg.snn.encode_seed),
        ("cnn_init".into(), cfg.cnn.init_seed),
        ("cnn_shuffle".into(), cfg.cnn.train.seed),
    ])
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
