//! Command-line interface.
//!
//! Verbs: `gen-data`, `assemble`, `train`, `eval`, `experiment`,
//! `inspect-manifest`. Exit codes: 0 success, 1 usage or configuration,
//! 2 numeric failure, 3 I/O.

use crate::data::{
    assemble, derive_variant, load_dataset_dir, load_idx, make_partial, synthesize_digits,
    write_dataset_dir, write_idx_images, write_idx_labels, AssembledDataset, AugmentationConfig,
    Manifest, Variant, VariantParams,
};
use crate::error::Error;
use crate::eval::{evaluate, write_metrics_csv};
use crate::experiment::{run_preset, ExperimentOptions, Preset};
use crate::loss::SharpenConfig;
use crate::model::{ModelConfig, ModelState};
use crate::rng::{mix, Rng};
use crate::train::{fit, TrainConfig};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "quilt",
    about = "Train one multi-label classifier from an assembly of partially labeled datasets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic digit data as IDX files, or a derived variant
    /// dataset as manifest directories.
    GenData(GenDataArgs),
    /// Merge labeled IDX sources into one dataset directory under the
    /// union of their schemas.
    Assemble(AssembleArgs),
    /// Train on a dataset directory and write a checkpoint plus per-epoch
    /// metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset directory.
    Eval(EvalArgs),
    /// Run a named experiment preset across seeds.
    Experiment(ExperimentArgs),
    /// Print a summary of a dataset manifest.
    InspectManifest { path: PathBuf },
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count_per_class: usize,
    #[arg(long, default_value_t = 20)]
    test_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// zero | multi | novel
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, default_value = "0")]
    novel_class: String,
    /// Fraction of the train split kept for the novel variant.
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
}

#[derive(Args)]
struct AssembleArgs {
    #[arg(long)]
    out: PathBuf,
    /// NAME=IMAGES:LABELS, repeatable.
    #[arg(long = "source", required = true)]
    sources: Vec<String>,
    /// NAME=class1,class2 restriction per source, repeatable.
    #[arg(long = "keep")]
    keeps: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory holding manifest.json.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Validation dataset directory; when absent a fraction of the
    /// training data is carved off.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    valid_frac: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sharpen_t: Option<f64>,
    #[arg(long)]
    sharpen_tau: Option<f64>,
    /// Freeze the task encoding at identity.
    #[arg(long)]
    disable_adapter: bool,
    #[arg(long)]
    disable_pseudo: bool,
    #[arg(long)]
    disable_consist: bool,
    #[arg(long)]
    weak_shift: Option<i64>,
    #[arg(long)]
    strong_shift: Option<i64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    erase_size: Option<usize>,
    /// JSON file with flat dotted keys mirroring these flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    similarity: Option<PathBuf>,
    #[arg(long, default_value = "eval")]
    experiment: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// mnist-zero | odd-even-assembly | partial-overlap | sharpen-ablation
    /// | novel-attack | multi-label
    name: String,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seed list.
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    /// Directory with the four standard MNIST IDX files.
    #[arg(long)]
    idx_dir: Option<PathBuf>,
    /// Multiplier on per-class sample counts.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through errors too
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } => 3,
                Error::NonFiniteLoss { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Assemble(args) => cmd_assemble(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::InspectManifest { path } => cmd_inspect_manifest(&path),
    }
}

fn cmd_gen_data(args: GenDataArgs) -> Result<(), Error> {
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(format!("creating {}", args.out.display()), e))?;
    match args.variant.as_deref() {
        None => {
            let train = synthesize_digits(args.count_per_class, args.seed)?;
            let test = synthesize_digits(args.test_per_class, mix(args.seed, 1))?;
            write_idx_images(&args.out.join("train-images-idx3-ubyte"), &train.samples)?;
            write_idx_labels(&args.out.join("train-labels-idx1-ubyte"), &train.samples)?;
            write_idx_images(&args.out.join("t10k-images-idx3-ubyte"), &test.samples)?;
            write_idx_labels(&args.out.join("t10k-labels-idx1-ubyte"), &test.samples)?;
            println!(
                "wrote {} train and {} test samples to {}",
                train.len(),
                test.len(),
                args.out.display()
            );
        }
        Some(name) => {
            let variant = match name {
                "zero" => Variant::Zero,
                "multi" => Variant::Multi,
                "novel" => Variant::Novel,
                other => {
                    return Err(Error::contract(format!(
                        "unknown variant '{other}' (expected zero, multi, or novel)"
                    )))
                }
            };
            let pool = synthesize_digits(args.count_per_class, args.seed)?;
            let params = VariantParams {
                novel_class: args.novel_class.clone(),
                fraction: args.fraction,
                seed: args.seed,
                ..VariantParams::default()
            };
            let (train, test) = derive_variant(&pool, variant, &params)?;
            write_dataset_dir(&args.out.join("train"), &assemble(&[train])?)?;
            write_dataset_dir(&args.out.join("test"), &assemble(&[test])?)?;
            println!("wrote {name} variant dataset to {}", args.out.display());
        }
    }
    Ok(())
}

fn parse_source(spec: &str) -> Result<(String, PathBuf, PathBuf), Error> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| Error::contract(format!("--source '{spec}' is not NAME=IMAGES:LABELS")))?;
    let (images, labels) = rest
        .split_once(':')
        .ok_or_else(|| Error::contract(format!("--source '{spec}' is not NAME=IMAGES:LABELS")))?;
    Ok((name.to_string(), images.into(), labels.into()))
}

fn cmd_assemble(args: AssembleArgs) -> Result<(), Error> {
    let mut keeps: Vec<(String, BTreeSet<String>)> = Vec::new();
    for spec in &args.keeps {
        let (name, classes) = spec
            .split_once('=')
            .ok_or_else(|| Error::contract(format!("--keep '{spec}' is not NAME=c1,c2")))?;
        keeps.push((
            name.to_string(),
            classes.split(',').map(str::to_string).collect(),
        ));
    }
    let mut sources = Vec::new();
    for spec in &args.sources {
        let (name, images, labels) = parse_source(spec)?;
        let mut d = load_idx(&images, &labels)?;
        d.name = name.clone();
        if let Some((_, keep)) = keeps.iter().find(|(n, _)| *n == name) {
            d = make_partial(&d, keep)?;
            d.name = name;
        }
        sources.push(d);
    }
    let assembled = assemble(&sources)?;
    write_dataset_dir(&args.out, &assembled)?;
    println!(
        "assembled {} samples over schema {} into {}",
        assembled.len(),
        assembled.union_schema,
        args.out.display()
    );
    Ok(())
}

/// Flat dotted-key JSON config; command-line flags override file values.
#[derive(Default)]
struct FileConfig(serde_json::Map<String, serde_json::Value>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig, Error> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Json {
                context: path.display().to_string(),
                source: e,
            })?;
        match value {
            serde_json::Value::Object(map) => Ok(FileConfig(map)),
            _ => Err(Error::contract(format!(
                "{}: config must be a JSON object",
                path.display()
            ))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, Error> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::contract(format!("config key '{key}' must be a number"))),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, Error> {
        Ok(self.f64(key)?.map(|v| v as usize))
    }

    fn i64(&self, key: &str) -> Result<Option<i64>, Error> {
        Ok(self.f64(key)?.map(|v| v as i64))
    }

    fn u64(&self, key: &str) -> Result<Option<u64>, Error> {
        Ok(self.f64(key)?.map(|v| v as u64))
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, Error> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| Error::contract(format!("config key '{key}' must be a boolean"))),
        }
    }
}

fn resolve_train_config(args: &TrainArgs) -> Result<(TrainConfig, f64), Error> {
    let file = FileConfig::load(args.config.as_deref())?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        max_epochs: args
            .epochs
            .or(file.usize("train.epochs")?)
            .unwrap_or(defaults.max_epochs),
        batch_size: args
            .batch_size
            .or(file.usize("train.batch-size")?)
            .unwrap_or(defaults.batch_size),
        seed: args.seed.or(file.u64("train.seed")?).unwrap_or(0),
        learning_rate: args
            .lr
            .or(file.f64("train.lr")?)
            .unwrap_or(defaults.learning_rate),
        sharpen: SharpenConfig {
            t: args
                .sharpen_t
                .or(file.f64("sharpen.t")?)
                .unwrap_or(defaults.sharpen.t),
            tau: args
                .sharpen_tau
                .or(file.f64("sharpen.tau")?)
                .unwrap_or(defaults.sharpen.tau),
        },
        augment: AugmentationConfig {
            weak_max_shift: args
                .weak_shift
                .or(file.i64("augment.weak-shift")?)
                .unwrap_or(defaults.augment.weak_max_shift),
            strong_max_shift: args
                .strong_shift
                .or(file.i64("augment.strong-shift")?)
                .unwrap_or(defaults.augment.strong_max_shift),
            noise_sigma: args
                .noise_sigma
                .or(file.f64("augment.noise-sigma")?)
                .unwrap_or(defaults.augment.noise_sigma),
            erase_size: args
                .erase_size
                .or(file.usize("augment.erase-size")?)
                .unwrap_or(defaults.augment.erase_size),
            seed: 0,
        },
        freeze_q: args.disable_adapter
            || file.bool("train.disable-adapter")?.unwrap_or(false),
        disable_pseudo: args.disable_pseudo
            || file.bool("train.disable-pseudo")?.unwrap_or(false),
        disable_consist: args.disable_consist
            || file.bool("train.disable-consist")?.unwrap_or(false),
        ..defaults
    };
    let valid_frac = args
        .valid_frac
        .or(file.f64("train.valid-frac")?)
        .unwrap_or(0.1);
    Ok((cfg, valid_frac))
}

/// Seeded split of an assembled dataset into train/valid portions.
fn carve_validation(
    d: &AssembledDataset,
    frac: f64,
    seed: u64,
) -> Result<(AssembledDataset, AssembledDataset), Error> {
    if !(0.0 < frac && frac < 1.0) {
        return Err(Error::contract(format!(
            "valid fraction {frac} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut rng = Rng::new(mix(seed, 0xa11d));
    rng.shuffle(&mut order);
    let cut = ((d.len() as f64 * frac).round() as usize).clamp(1, d.len() - 1);
    let pick = |ix: &[usize]| {
        let mut sorted = ix.to_vec();
        sorted.sort_unstable();
        AssembledDataset {
            union_schema: d.union_schema.clone(),
            samples: sorted.iter().map(|&i| d.samples[i].clone()).collect(),
            provenance: sorted.iter().map(|&i| d.provenance[i]).collect(),
            sources: d.sources.clone(),
        }
    };
    Ok((pick(&order[cut..]), pick(&order[..cut])))
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let (cfg, valid_frac) = resolve_train_config(&args)?;
    let data = load_dataset_dir(&args.data)?;
    let (train_set, valid_set) = match &args.valid {
        Some(dir) => (data, load_dataset_dir(dir)?),
        None => carve_validation(&data, valid_frac, cfg.seed)?,
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(format!("creating {}", args.out.display()), e))?;
    let state = ModelState::new(train_set.union_schema.clone(), ModelConfig::default(), cfg.seed)?;
    let metrics = fit(&state, &train_set, &valid_set, &cfg)?;

    metrics.write_csv(&args.out.join("metrics.csv"))?;
    state.save(&args.out.join("checkpoint.bin"), cfg.seed)?;
    metrics.similarity.write_csv(&args.out.join("similarity.csv"))?;
    println!(
        "trained {} epochs (best epoch {}, valid mAUC {:.4}); wrote {}",
        metrics.epochs.len(),
        metrics.best_epoch,
        metrics.best_mauc,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let (state, seed) = ModelState::load(&args.checkpoint)?;
    let data = load_dataset_dir(&args.data)?;
    let metrics = evaluate(&state, &data)?;
    write_metrics_csv(&args.out, &[(args.experiment.clone(), seed, &metrics)])?;
    if let Some(sim_path) = &args.similarity {
        crate::eval::class_similarity(&state, &data)?.write_csv(sim_path)?;
    }
    match metrics.mauc {
        Some(m) => println!("mAUC {:.4}; wrote {}", m, args.out.display()),
        None => println!("no evaluable class; wrote {}", args.out.display()),
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), Error> {
    let preset = Preset::parse(&args.name)?;
    let seeds = args
        .seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::contract(format!("bad seed '{s}'")))
        })
        .collect::<Result<Vec<u64>, Error>>()?;
    let opts = ExperimentOptions {
        seeds,
        idx_dir: args.idx_dir.clone(),
        scale: args.scale,
    };
    let report = run_preset(preset, &opts)?;
    report.write_files(&args.out)?;
    print!("{}", report.summary());
    println!("wrote report to {}", args.out.display());
    Ok(())
}

fn cmd_inspect_manifest(path: &Path) -> Result<(), Error> {
    let manifest_path = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        context: manifest_path.display().to_string(),
        source: e,
    })?;

    println!("union schema ({}): {}", manifest.union_schema.len(), manifest.union_schema.join(", "));
    for src in &manifest.sources {
        println!(
            "source {}: {} samples over {{{}}}",
            src.name,
            src.count,
            src.schema.join(", ")
        );
    }
    let mut unknown_per_class = vec![0usize; manifest.union_schema.len()];
    let (mut pos, mut neg, mut unk) = (0usize, 0usize, 0usize);
    for s in &manifest.samples {
        for (c, ch) in s.label_states.chars().enumerate() {
            match ch {
                'P' => pos += 1,
                'N' => neg += 1,
                'U' => {
                    unk += 1;
                    unknown_per_class[c] += 1;
                }
                _ => return Err(Error::contract(format!("bad state char '{ch}'"))),
            }
        }
    }
    println!(
        "{} samples; states: {pos} positive, {neg} negative, {unk} unknown",
        manifest.samples.len()
    );
    for (name, count) in manifest.union_schema.iter().zip(unknown_per_class) {
        if count > 0 {
            println!("  class {name}: {count} unknown");
        }
    }
    Ok(())
}
