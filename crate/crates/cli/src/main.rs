//! `canamrf` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use canamrf::config::{render, KeyValues};
use canamrf::data::{generate, load_dataset, write_dataset, Dataset, Modality, SynthSpec};
use canamrf::model::{grad_check_model, load_checkpoint, save_checkpoint, Model, ModelConfig};
use canamrf::numeric::DEFAULT_EPS;
use canamrf::train::{evaluate, train, TrainConfig};
use canamrf::Error;

/// Gradient checks pass below this relative error.
const GRAD_TOLERANCE: f64 = 1e-4;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "canamrf", version, about = "Multimodal fusion classifier: data, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        /// `synth.*` key = value file.
        #[arg(long)]
        spec: PathBuf,
        /// Output `.mmjl` file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Train a model and write a checkpoint plus its history.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// `model.*`, `amrf.*`, `loss.*`, `train.*`, `adam.*` key = value file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_model: PathBuf,
        /// Overrides `train.seed`; also seeds parameter initialisation.
        #[arg(long)]
        seed: Option<u64>,
        /// History output; defaults to `<out-model>.history`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Compare analytic gradients with central differences on one sample.
    GradCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
    },
}

enum Failure {
    Lib(Error),
    /// Message and exit code.
    Other(String, u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<u8, Failure>;

const USAGE_HINT: &str = "run `canamrf --help` for usage";

/// Prefixes errors from reading `path` with the path; a missing input file
/// counts as a usage error.
fn from_file<T>(path: &Path, r: Result<T, Error>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Failure::Other(
            format!("{}: {io}\n{USAGE_HINT}", path.display()),
            EXIT_USAGE,
        ),
        other => Failure::Other(format!("{}: {other}", path.display()), exit_code(&other)),
    })
}

fn load_kv(path: Option<&Path>) -> Result<KeyValues, Failure> {
    match path {
        Some(p) => from_file(p, KeyValues::load(p)),
        None => Ok(KeyValues::default()),
    }
}

/// Runs `f` on the parsed config, attributing config errors to the file.
fn with_config<T>(path: Option<&Path>, f: impl FnOnce(&mut KeyValues) -> Result<T, Error>) -> Result<T, Failure> {
    let mut kv = load_kv(path)?;
    let r = f(&mut kv).and_then(|v| kv.finish().map(|_| v));
    match path {
        Some(p) => from_file(p, r),
        None => Ok(r?),
    }
}

fn echo(pairs: &[(String, String)]) {
    print!("{}", render(pairs));
}

fn gen_data(spec_path: &Path, out: &Path, seed: u64) -> CmdResult {
    let mut spec = with_config(Some(spec_path), SynthSpec::take_from)?;
    spec.seed = seed;
    echo(&spec.to_pairs());
    let ds = generate(&spec)?;
    from_file(out, write_dataset(&ds, out))?;
    let (neg, pos) = ds.class_counts();
    println!("out={} samples={} negatives={neg} positives={pos}", out.display(), ds.len());
    Ok(0)
}

/// Model config from the file, with raw dims taken from the dataset unless
/// the file sets them.
fn model_config(kv: &mut KeyValues, ds: &Dataset) -> Result<ModelConfig, Error> {
    let explicit: Vec<Modality> = Modality::ALL
        .into_iter()
        .filter(|m| kv.contains(&format!("model.dims.{m}")))
        .collect();
    let mut cfg = ModelConfig::take_from(kv)?;
    for m in Modality::ALL {
        if !explicit.contains(&m) {
            cfg.dims.set(m, ds.dims.get(m));
        }
    }
    if cfg.dims != ds.dims {
        return Err(Error::Validation(format!(
            "config dims {:?} do not match dataset dims {:?}",
            cfg.dims, ds.dims
        )));
    }
    Ok(cfg)
}

fn train_cmd(
    data: &Path,
    config: Option<&Path>,
    out_model: &Path,
    seed: Option<u64>,
    history: Option<&Path>,
) -> CmdResult {
    let ds = from_file(data, load_dataset(data))?;
    let (model_cfg, mut train_cfg) = with_config(config, |kv| {
        Ok((model_config(kv, &ds)?, TrainConfig::take_from(kv)?))
    })?;
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    let mut pairs = model_cfg.to_pairs();
    pairs.extend(train_cfg.to_pairs());
    echo(&pairs);

    let model = Model::new(model_cfg, train_cfg.seed)?;
    let (trained, hist) = train(&model, &ds, &train_cfg)?;
    print!("{}", hist.render());
    from_file(out_model, save_checkpoint(&trained, out_model))?;
    let history_path = history
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.history", out_model.display())));
    std::fs::write(&history_path, hist.render()).map_err(Error::from)?;
    let best = hist.best().expect("training ran at least one epoch");
    let m = best.val;
    println!(
        "best_epoch={} val_p={:.2} val_r={:.2} val_f1={:.2} tp={} fp={} fn={} tn={}",
        best.epoch, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_, m.tn
    );
    println!("model={} history={}", out_model.display(), history_path.display());
    Ok(0)
}

fn eval_cmd(data: &Path, model: &Path, threshold: f64) -> CmdResult {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Failure::Other(
            format!("--threshold must be in (0, 1), got {threshold}"),
            EXIT_USAGE,
        ));
    }
    let ds = from_file(data, load_dataset(data))?;
    let model = from_file(model, load_checkpoint(model))?;
    if model.config.dims != ds.dims {
        return Err(Error::Validation(format!(
            "model dims {:?} do not match dataset dims {:?}",
            model.config.dims, ds.dims
        ))
        .into());
    }
    println!("threshold={threshold:?}");
    let m = evaluate(&model, &ds, threshold)?;
    println!("{m}");
    println!("tp={} fp={} fn={} tn={}", m.tp, m.fp, m.fn_, m.tn);
    Ok(0)
}

fn grad_check_cmd(config: Option<&Path>, seed: u64) -> CmdResult {
    // training keys may share the file; they do not affect the check
    let cfg = with_config(config, |kv| {
        let cfg = ModelConfig::take_from(kv)?;
        TrainConfig::take_from(kv)?;
        Ok(cfg)
    })?;
    echo(&cfg.to_pairs());
    println!("seed={seed}");
    let r = grad_check_model(&cfg, seed)?;
    println!(
        "max_rel_error={:e} worst={}[{}] entries={} eps={DEFAULT_EPS:e}",
        r.max_rel_error, r.worst_path, r.worst_index, r.entries_checked
    );
    if r.max_rel_error < GRAD_TOLERANCE {
        println!("grad_check=pass");
        Ok(0)
    } else {
        println!("grad_check=fail");
        Ok(EXIT_NUMERICAL)
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenData { spec, out, seed } => gen_data(spec, out, *seed),
        Command::Train {
            data,
            config,
            out_model,
            seed,
            history,
        } => train_cmd(data, config.as_deref(), out_model, *seed, history.as_deref()),
        Command::Eval {
            data,
            model,
            threshold,
        } => eval_cmd(data, model, *threshold),
        Command::GradCheck { config, seed } => grad_check_cmd(config.as_deref(), *seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Other(msg, code)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
