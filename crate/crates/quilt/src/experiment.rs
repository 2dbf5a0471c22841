//! Named experiment presets.
//!
//! Each preset builds its datasets, trains every arm across the requested
//! seeds, evaluates on a held-out test split, and reports per-arm metrics
//! with mean, deviation, and a two-sample t-test between the compared
//! arms. Reports carry full provenance: seeds, configuration values, and
//! content hashes of every input dataset, so reruns are diffable.

use crate::data::{
    assemble, collapse_zero, load_idx, make_partial, multi_test_view, multi_train_view,
    novel_withhold, synthesize_digits, AssembledDataset, LabelState, SourceDataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    auc, evaluate, novelty_score, two_sample_t_test, write_metrics_csv, ClassMetrics, NoveltyMode,
};
use crate::model::{ModelConfig, ModelState};
use crate::rng::{mix, Rng};
use crate::tensor::Tensor;
use crate::train::{fit, TrainConfig};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    MnistZero,
    OddEvenAssembly,
    PartialOverlap,
    SharpenAblation,
    NovelAttack,
    MultiLabel,
}

impl Preset {
    pub fn all() -> [Preset; 6] {
        [
            Preset::MnistZero,
            Preset::OddEvenAssembly,
            Preset::PartialOverlap,
            Preset::SharpenAblation,
            Preset::NovelAttack,
            Preset::MultiLabel,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::MnistZero => "mnist-zero",
            Preset::OddEvenAssembly => "odd-even-assembly",
            Preset::PartialOverlap => "partial-overlap",
            Preset::SharpenAblation => "sharpen-ablation",
            Preset::NovelAttack => "novel-attack",
            Preset::MultiLabel => "multi-label",
        }
    }

    pub fn parse(name: &str) -> Result<Preset> {
        Preset::all()
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let valid: Vec<&str> = Preset::all().iter().map(|p| p.name()).collect();
                Error::contract(format!(
                    "unknown preset '{name}'; valid presets: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub seeds: Vec<u64>,
    /// Directory holding the standard four MNIST IDX files; when present,
    /// presets sample from the real corpus instead of the synthetic one.
    pub idx_dir: Option<PathBuf>,
    /// Multiplier on every per-class sample count, for quick smoke runs.
    pub scale: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            seeds: vec![0, 1, 2],
            idx_dir: None,
            scale: 1.0,
        }
    }
}

/// One trained arm under one seed.
#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub arm: String,
    pub seed: u64,
    /// The preset's compared quantity for this run (a class AUC, an mAUC,
    /// or a novelty AUC, depending on the preset).
    pub headline: f64,
    pub test_metrics: ClassMetrics,
    pub epochs_run: usize,
}

/// A named two-arm comparison with its t-test.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub label: String,
    pub arm_a: String,
    pub arm_b: String,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    pub t: f64,
    pub p: f64,
}

impl Comparison {
    fn build(label: &str, arm_a: &str, arm_b: &str, a: Vec<f64>, b: Vec<f64>) -> Result<Comparison> {
        let tt = two_sample_t_test(&a, &b)?;
        Ok(Comparison {
            label: label.to_string(),
            arm_a: arm_a.to_string(),
            arm_b: arm_b.to_string(),
            values_a: a,
            values_b: b,
            t: tt.t,
            p: tt.p,
        })
    }

    pub fn mean_a(&self) -> f64 {
        mean(&self.values_a)
    }

    pub fn mean_b(&self) -> f64 {
        mean(&self.values_b)
    }

    /// Seed-paired margins `a - b`.
    pub fn margins(&self) -> Vec<f64> {
        self.values_a
            .iter()
            .zip(&self.values_b)
            .map(|(a, b)| a - b)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PresetReport {
    pub preset: String,
    pub seeds: Vec<u64>,
    pub outcomes: Vec<ArmOutcome>,
    pub comparisons: Vec<Comparison>,
    pub dataset_hashes: BTreeMap<String, String>,
    pub config_lines: Vec<(String, String)>,
}

impl PresetReport {
    /// Headline values of one arm, in seed order.
    pub fn headlines(&self, arm: &str) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|&seed| {
                self.outcomes
                    .iter()
                    .find(|o| o.arm == arm && o.seed == seed)
                    .unwrap_or_else(|| panic!("missing outcome for arm '{arm}' seed {seed}"))
                    .headline
            })
            .collect()
    }

    pub fn comparison(&self, label: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.label == label)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "preset: {}", self.preset);
        let _ = writeln!(
            out,
            "seeds: {}",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "\n[config]");
        for (k, v) in &self.config_lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "\n[dataset hashes]");
        for (name, hash) in &self.dataset_hashes {
            let _ = writeln!(out, "{name} = {hash}");
        }
        let _ = writeln!(out, "\n[arms]  headline mean +- sd over seeds");
        let mut arms: Vec<&str> = Vec::new();
        for o in &self.outcomes {
            if !arms.contains(&o.arm.as_str()) {
                arms.push(&o.arm);
            }
        }
        for arm in arms {
            let values = self.headlines(arm);
            let _ = writeln!(
                out,
                "{arm}: {:.4} +- {:.4}  (per seed: {})",
                mean(&values),
                std_dev(&values),
                values
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
        let _ = writeln!(out, "\n[comparisons]");
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{}: {} {:.4} vs {} {:.4}  margin {:+.4}  t {:.3}  p {:.4}",
                c.label,
                c.arm_a,
                c.mean_a(),
                c.arm_b,
                c.mean_b(),
                c.mean_a() - c.mean_b(),
                c.t,
                c.p
            );
        }
        out
    }

    /// Writes `report.csv` (per-class AUC rows per arm and seed) and
    /// `summary.txt` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let rows: Vec<(String, u64, &ClassMetrics)> = self
            .outcomes
            .iter()
            .map(|o| (o.arm.clone(), o.seed, &o.test_metrics))
            .collect();
        write_metrics_csv(&dir.join("report.csv"), &rows)?;
        std::fs::write(dir.join("summary.txt"), self.summary())
            .map_err(|e| Error::io(format!("writing summary in {}", dir.display()), e))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Content hash of a dataset: union schema, then per sample its source,
/// label states, and raw pixel bytes.
pub fn dataset_hash(d: &AssembledDataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update(d.union_schema.names().join(",").as_bytes());
    for (s, &p) in d.samples.iter().zip(&d.provenance) {
        hasher.update(d.sources[p].name.as_bytes());
        hasher.update(s.labels.as_string().as_bytes());
        for v in s.image.values().iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

// ---------------------------------------------------------------------
// dataset recipes
// ---------------------------------------------------------------------

struct Corpus {
    train: SourceDataset,
    valid: SourceDataset,
    test: SourceDataset,
}

fn scaled(count: usize, scale: f64) -> usize {
    ((count as f64 * scale).round() as usize).max(1)
}

/// Synthesizes the three pools, or samples them (class-balanced, seeded)
/// from a real MNIST corpus when one is supplied.
fn load_corpus(
    opts: &ExperimentOptions,
    per_class: (usize, usize, usize),
    data_seed: u64,
) -> Result<Corpus> {
    let (cpc_train, cpc_valid, cpc_test) = (
        scaled(per_class.0, opts.scale),
        scaled(per_class.1, opts.scale),
        scaled(per_class.2, opts.scale),
    );
    match &opts.idx_dir {
        None => Ok(Corpus {
            train: named(synthesize_digits(cpc_train, mix(data_seed, 1))?, "train"),
            valid: named(synthesize_digits(cpc_valid, mix(data_seed, 2))?, "valid"),
            test: named(synthesize_digits(cpc_test, mix(data_seed, 3))?, "test"),
        }),
        Some(dir) => {
            let train_full = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let test_full = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )?;
            let mut rng = Rng::new(mix(data_seed, 4));
            let train = named(balanced_sample(&train_full, cpc_train, &mut rng)?, "train");
            let valid = named(balanced_sample(&train_full, cpc_valid, &mut rng)?, "valid");
            let test = named(balanced_sample(&test_full, cpc_test, &mut rng)?, "test");
            Ok(Corpus { train, valid, test })
        }
    }
}

/// Uses the whole real corpus (for the full-scale run): the entire train
/// file minus a carved validation slice, and the entire test file.
fn load_full_corpus(dir: &Path, valid_fraction: f64, seed: u64) -> Result<Corpus> {
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = named(
        load_idx(
            &dir.join("t10k-images-idx3-ubyte"),
            &dir.join("t10k-labels-idx1-ubyte"),
        )?,
        "test",
    );
    let mut order: Vec<usize> = (0..train_full.len()).collect();
    let mut rng = Rng::new(mix(seed, 5));
    rng.shuffle(&mut order);
    let cut = ((train_full.len() as f64 * valid_fraction) as usize).max(1);
    let pick = |ix: &[usize], name: &str| -> Result<SourceDataset> {
        let mut sorted = ix.to_vec();
        sorted.sort_unstable();
        SourceDataset::new(
            name,
            train_full.schema.clone(),
            sorted.iter().map(|&i| train_full.samples[i].clone()).collect(),
        )
    };
    Ok(Corpus {
        valid: pick(&order[..cut], "valid")?,
        train: pick(&order[cut..], "train")?,
        test,
    })
}

fn named(mut d: SourceDataset, name: &str) -> SourceDataset {
    d.name = name.to_string();
    d
}

fn balanced_sample(pool: &SourceDataset, per_class: usize, rng: &mut Rng) -> Result<SourceDataset> {
    let n = pool.schema.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, s) in pool.samples.iter().enumerate() {
        if let Some(c) = s.labels.positives().next() {
            by_class[c].push(i);
        }
    }
    let mut chosen = Vec::new();
    for indices in by_class.iter_mut() {
        if indices.len() < per_class {
            return Err(Error::contract(format!(
                "corpus holds {} samples of a class, {per_class} requested",
                indices.len()
            )));
        }
        rng.shuffle(indices);
        chosen.extend_from_slice(&indices[..per_class]);
    }
    chosen.sort_unstable();
    SourceDataset::new(
        pool.name.clone(),
        pool.schema.clone(),
        chosen.iter().map(|&i| pool.samples[i].clone()).collect(),
    )
}

/// Keeps the samples depicting one of `digits` (schema unchanged).
fn filter_digits(d: &SourceDataset, digits: &[&str]) -> Result<SourceDataset> {
    let wanted: Vec<usize> = digits
        .iter()
        .map(|name| {
            d.schema
                .index_of(name)
                .ok_or_else(|| Error::contract(format!("no class '{name}' in {}", d.schema)))
        })
        .collect::<Result<_>>()?;
    let samples = d
        .samples
        .iter()
        .filter(|s| {
            s.labels
                .positives()
                .next()
                .is_some_and(|c| wanted.contains(&c))
        })
        .cloned()
        .collect();
    SourceDataset::new(d.name.clone(), d.schema.clone(), samples)
}

fn keep_set(digits: &[&str]) -> std::collections::BTreeSet<String> {
    digits.iter().map(|s| s.to_string()).collect()
}

fn single(d: SourceDataset) -> Result<AssembledDataset> {
    assemble(std::slice::from_ref(&d))
}

// ---------------------------------------------------------------------
// arms and the runner
// ---------------------------------------------------------------------

/// How an arm turns its test metrics into the compared headline value.
enum Headline {
    ClassAuc(String),
    Mauc,
    /// Novelty AUC for the named class, scored by the given mode.
    Novelty { class: String, adapter_query: bool },
}

struct Arm {
    name: String,
    train: AssembledDataset,
    valid: AssembledDataset,
    test: AssembledDataset,
    cfg: TrainConfig,
    headline: Headline,
}

fn run_arm(arm: &Arm, seed: u64) -> Result<ArmOutcome> {
    let mut cfg = arm.cfg.clone();
    cfg.seed = seed;
    let state = ModelState::new(arm.train.union_schema.clone(), ModelConfig::default(), seed)?;
    let run = fit(&state, &arm.train, &arm.valid, &cfg)?;
    let test_metrics = evaluate(&state, &arm.test)?;
    let headline = match &arm.headline {
        Headline::ClassAuc(class) => test_metrics.class_auc(class).ok_or_else(|| {
            Error::NotEvaluable(format!("class '{class}' absent from the test metrics"))
        })?,
        Headline::Mauc => test_metrics
            .mauc
            .ok_or_else(|| Error::NotEvaluable("no evaluable class in test".to_string()))?,
        Headline::Novelty {
            class,
            adapter_query,
        } => novelty_auc(&state, &arm.test, class, *adapter_query)?,
    };
    Ok(ArmOutcome {
        arm: arm.name.clone(),
        seed,
        headline,
        test_metrics,
        epochs_run: run.epochs.len(),
    })
}

/// AUC of novelty scores against novel-class membership on the test set.
fn novelty_auc(
    state: &ModelState,
    test: &AssembledDataset,
    class: &str,
    adapter_query: bool,
) -> Result<f64> {
    let col = test
        .union_schema
        .index_of(class)
        .ok_or_else(|| Error::contract(format!("novel class '{class}' not in test schema")))?;
    let mode = if adapter_query {
        NoveltyMode::AdapterQuery { class: col }
    } else {
        NoveltyMode::MaxComplement {
            trained: (0..test.union_schema.len()).filter(|&c| c != col).collect(),
        }
    };
    let mut scores = Vec::with_capacity(test.len());
    let mut start = 0;
    while start < test.len() {
        let end = (start + 256).min(test.len());
        let pixels = test.samples[start].image.len();
        let mut flat = Vec::with_capacity((end - start) * pixels);
        for s in &test.samples[start..end] {
            flat.extend_from_slice(&s.image.values());
        }
        let batch = Tensor::new(&[end - start, pixels], flat)?;
        scores.extend(novelty_score(state, &batch, &mode)?);
        start = end;
    }
    let labels: Vec<bool> = test
        .samples
        .iter()
        .map(|s| s.labels.state(col) == LabelState::Positive)
        .collect();
    auc(&scores, &labels)
}

/// Averages the per-class AUCs of a subset of classes.
pub fn subset_mauc(metrics: &ClassMetrics, classes: &[&str]) -> Option<f64> {
    let values: Vec<f64> = classes
        .iter()
        .filter_map(|name| metrics.class_auc(name))
        .collect();
    (values.len() == classes.len()).then(|| mean(&values))
}

fn config_lines(cfg: &TrainConfig, extra: &[(String, String)]) -> Vec<(String, String)> {
    let mut lines = vec![
        ("train.epochs".to_string(), cfg.max_epochs.to_string()),
        ("train.batch-size".to_string(), cfg.batch_size.to_string()),
        ("train.lr".to_string(), cfg.learning_rate.to_string()),
        ("sharpen.t".to_string(), cfg.sharpen.t.to_string()),
        ("sharpen.tau".to_string(), cfg.sharpen.tau.to_string()),
        (
            "augment.weak-shift".to_string(),
            cfg.augment.weak_max_shift.to_string(),
        ),
        (
            "augment.strong-shift".to_string(),
            cfg.augment.strong_max_shift.to_string(),
        ),
        (
            "augment.noise-sigma".to_string(),
            cfg.augment.noise_sigma.to_string(),
        ),
        (
            "augment.erase-size".to_string(),
            cfg.augment.erase_size.to_string(),
        ),
    ];
    lines.extend_from_slice(extra);
    lines
}

/// Runs every arm of a preset across the requested seeds.
pub fn run_preset(preset: Preset, opts: &ExperimentOptions) -> Result<PresetReport> {
    if opts.seeds.is_empty() {
        return Err(Error::contract("experiment needs at least one seed"));
    }
    let (arms, comparisons_spec, extra_config) = build_arms(preset, opts)?;

    let mut outcomes = Vec::new();
    for arm in &arms {
        for &seed in &opts.seeds {
            outcomes.push(run_arm(arm, seed)?);
        }
    }

    let mut hashes = BTreeMap::new();
    for arm in &arms {
        hashes.insert(format!("{}/train", arm.name), dataset_hash(&arm.train));
        hashes.insert(format!("{}/valid", arm.name), dataset_hash(&arm.valid));
        hashes.insert(format!("{}/test", arm.name), dataset_hash(&arm.test));
    }

    let report_seeds = opts.seeds.clone();
    let headline_of = |arm: &str| -> Vec<f64> {
        report_seeds
            .iter()
            .map(|&s| {
                outcomes
                    .iter()
                    .find(|o| o.arm == arm && o.seed == s)
                    .expect("every arm ran every seed")
                    .headline
            })
            .collect()
    };
    let mut comparisons = Vec::new();
    for (label, arm_a, arm_b) in comparisons_spec {
        if opts.seeds.len() >= 2 {
            comparisons.push(Comparison::build(
                &label,
                &arm_a,
                &arm_b,
                headline_of(&arm_a),
                headline_of(&arm_b),
            )?);
        }
    }

    let cfg_dump = config_lines(&arms[0].cfg, &extra_config);
    Ok(PresetReport {
        preset: preset.name().to_string(),
        seeds: opts.seeds.clone(),
        outcomes,
        comparisons,
        dataset_hashes: hashes,
        config_lines: cfg_dump,
    })
}

type ArmsSpec = (Vec<Arm>, Vec<(String, String, String)>, Vec<(String, String)>);

fn build_arms(preset: Preset, opts: &ExperimentOptions) -> Result<ArmsSpec> {
    match preset {
        Preset::MnistZero => mnist_zero_arms(opts),
        Preset::OddEvenAssembly => odd_even_arms(opts),
        Preset::PartialOverlap => partial_overlap_arms(opts),
        Preset::SharpenAblation => sharpen_ablation_arms(opts),
        Preset::NovelAttack => novel_attack_arms(opts),
        Preset::MultiLabel => multi_label_arms(opts),
    }
}

fn mnist_zero_arms(opts: &ExperimentOptions) -> Result<ArmsSpec> {
    // 5,000 training images at desk scale; the full corpus when supplied
    let corpus = match &opts.idx_dir {
        Some(dir) if opts.scale >= 1.0 && full_corpus_requested() => {
            load_full_corpus(dir, 0.05, 0x2e80)?
        }
        _ => load_corpus(opts, (500, 30, 500), 0x2e80)?,
    };
    // small batches buy optimization steps: the ten-way arm needs them to
    // digest its richer supervision within the epoch budget
    let cfg = TrainConfig {
        max_epochs: 56,
        batch_size: 24,
        ..TrainConfig::default()
    };

    let binary = Arm {
        name: "zero-vs-others".to_string(),
        train: single(collapse_zero(&corpus.train)?)?,
        valid: single(collapse_zero(&corpus.valid)?)?,
        test: single(collapse_zero(&corpus.test)?)?,
        cfg: cfg.clone(),
        headline: Headline::ClassAuc("zero".to_string()),
    };
    let ten_way = Arm {
        name: "ten-way".to_string(),
        train: single(corpus.train)?,
        valid: single(corpus.valid)?,
        test: single(corpus.test)?,
        cfg,
        headline: Headline::ClassAuc("0".to_string()),
    };
    Ok((
        vec![binary, ten_way],
        vec![(
            "auc-of-zero".to_string(),
            "ten-way".to_string(),
            "zero-vs-others".to_string(),
        )],
        vec![("data.train-images".to_string(), "5000".to_string())],
    ))
}

/// The full-corpus run is opt-in through the environment because it takes
/// hours of CPU; the desk-scale run is the default even with an IDX
/// directory supplied.
fn full_corpus_requested() -> bool {
    std::env::var("QUILT_FULL_MNIST").is_ok_and(|v| v == "1")
}

const ODDS: [&str; 5] = ["1", "3", "5", "7", "9"];
const EVENS: [&str; 5] = ["0", "2", "4", "6", "8"];

fn odd_even_data(opts: &ExperimentOptions) -> Result<(Corpus, AssembledDataset, AssembledDataset)> {
    let corpus = load_corpus(opts, (60, 10, 100), 0x0dde)?;
    let d0 = named(
        make_partial(&filter_digits(&corpus.train, &ODDS)?, &keep_set(&ODDS))?,
        "d0",
    );
    let d1 = named(
        make_partial(&filter_digits(&corpus.train, &EVENS)?, &keep_set(&EVENS))?,
        "d1",
    );
    let assembled = assemble(&[d0, d1])?;
    let valid_full = single(corpus.valid.clone())?;
    Ok((corpus, assembled, valid_full))
}

fn odd_even_arms(opts: &ExperimentOptions) -> Result<ArmsSpec> {
    let (corpus, assembled, valid_full) = odd_even_data(opts)?;
    // 300-image sources need small batches to get a useful step count
    let cfg = TrainConfig {
        max_epochs: 64,
        batch_size: 16,
        ..TrainConfig::default()
    };

    let arm_for = |name: &str, digits: &[&str]| -> Result<Arm> {
        let keep = keep_set(digits);
        Ok(Arm {
            name: name.to_string(),
            train: single(named(
                make_partial(&filter_digits(&corpus.train, digits)?, &keep)?,
                name,
            ))?,
            valid: single(make_partial(&corpus.valid, &keep)?)?,
            test: single(make_partial(&corpus.test, &keep)?)?,
            cfg: cfg.clone(),
            headline: Headline::Mauc,
        })
    };
    let d0_only = arm_for("d0-only", &ODDS)?;
    let d1_only = arm_for("d1-only", &EVENS)?;
    let assembled_arm = Arm {
        name: "assembled".to_string(),
        train: assembled,
        valid: valid_full,
        test: single(corpus.test)?,
        cfg,
        headline: Headline::Mauc,
    };
    Ok((
        vec![d0_only, d1_only, assembled_arm],
        vec![
            (
                "assembled-vs-d0".to_string(),
                "assembled".to_string(),
                "d0-only".to_string(),
            ),
            (
                "assembled-vs-d1".to_string(),
                "assembled".to_string(),
                "d1-only".to_string(),
            ),
        ],
        vec![("data.images-per-source".to_string(), "300".to_string())],
    ))
}

const D0_DIGITS: [&str; 5] = ["1", "2", "3", "4", "5"];
const D1_DIGITS: [&str; 5] = ["3", "4", "5", "6", "7"];
const UNION_7: [&str; 7] = ["1", "2", "3", "4", "5", "6", "7"];

fn partial_overlap_arms(opts: &ExperimentOptions) -> Result<ArmsSpec> {
    // two disjoint image pools, one per source dataset
    let pool_a = load_corpus(opts, (60, 15, 100), 0x07a1)?;
    let pool_b = named(
        synthesize_digits(scaled(60, opts.scale), mix(0x07b2, 1))?,
        "pool-b",
    );
    let pool_b = match &opts.idx_dir {
        None => pool_b,
        Some(_) => {
            // a second disjoint sample from the real corpus
            let alt = load_corpus(opts, (60, 1, 1), 0x07b2)?;
            alt.train
        }
    };

    let d0 = named(
        make_partial(&filter_digits(&pool_a.train, &D0_DIGITS)?, &keep_set(&D0_DIGITS))?,
        "d0",
    );
    let d1 = named(
        make_partial(&filter_digits(&pool_b, &D1_DIGITS)?, &keep_set(&D1_DIGITS))?,
        "d1",
    );
    let full_d0 = named(
        make_partial(&filter_digits(&pool_a.train, &D0_DIGITS)?, &keep_set(&UNION_7))?,
        "d0-full",
    );
    let full_d1 = named(
        make_partial(&filter_digits(&pool_b, &D1_DIGITS)?, &keep_set(&UNION_7))?,
        "d1-full",
    );

    let assembled = assemble(&[d0, d1])?;
    let full_label = assemble(&[full_d0, full_d1])?;
    let valid = single(make_partial(&pool_a.valid, &keep_set(&UNION_7))?)?;
    let test = single(make_partial(&pool_a.test, &keep_set(&UNION_7))?)?;

    let base_cfg = TrainConfig {
        max_epochs: 40,
        batch_size: 24,
        ..TrainConfig::default()
    };
    let strategy = |name: &str, freeze_q: bool, pseudo: bool, consist: bool, data: &AssembledDataset| Arm {
        name: name.to_string(),
        train: data.clone(),
        valid: valid.clone(),
        test: test.clone(),
        cfg: TrainConfig {
            freeze_q,
            disable_pseudo: !pseudo,
            disable_consist: !consist,
            ..base_cfg.clone()
        },
        headline: Headline::Mauc,
    };

    let arms = vec![
        strategy("assembly-bce", true, false, false, &assembled),
        strategy("assembly-pseudo", true, true, false, &assembled),
        strategy("assembly-consist", true, false, true, &assembled),
        strategy("assembly-pseudo-consist", true, true, true, &assembled),
        strategy("full-method", false, true, true, &assembled),
        strategy("full-label", true, false, false, &full_label),
    ];
    Ok((
        arms,
        vec![
            (
                "full-method-vs-full-label".to_string(),
                "full-method".to_string(),
                "full-label".to_string(),
            ),
            (
                "full-method-vs-assembly".to_string(),
                "full-method".to_string(),
                "assembly-bce".to_string(),
            ),
        ],
        vec![("data.images-per-source".to_string(), "300".to_string())],
    ))
}

fn sharpen_ablation_arms(opts: &ExperimentOptions) -> Result<ArmsSpec> {
    let (corpus, assembled, valid_full) = odd_even_data(opts)?;
    let test = single(corpus.test)?;
    let mut arms = Vec::new();
    for t in [1.0, 2.0, 4.0, 8.0] {
        arms.push(Arm {
            name: format!("t-{t}"),
            train: assembled.clone(),
            valid: valid_full.clone(),
            test: test.clone(),
            cfg: TrainConfig {
                max_epochs: 40,
                batch_size: 16,
                sharpen: crate::loss::SharpenConfig::with_t(t),
                ..TrainConfig::default()
            },
            headline: Headline::Mauc,
        });
    }
    Ok((
        arms,
        vec![(
            "t4-vs-t1".to_string(),
            "t-4".to_string(),
            "t-1".to_string(),
        )],
        vec![("sharpen.grid".to_string(), "1,2,4,8".to_string())],
    ))
}

fn novel_attack_arms(opts: &ExperimentOptions) -> Result<ArmsSpec> {
    let corpus = load_corpus(opts, (2000, 100, 200), 0x40e1)?;
    let train = single(novel_withhold(&corpus.train, "0", 0.01, 7)?)?;
    let valid = single(novel_withhold(&corpus.valid, "0", 1.0, 8)?)?;
    let test = single(corpus.test)?;
    let cfg = TrainConfig {
        max_epochs: 25,
        batch_size: 32,
        ..TrainConfig::default()
    };

    let adapter = Arm {
        name: "adapter".to_string(),
        train: train.clone(),
        valid: valid.clone(),
        test: test.clone(),
        cfg: cfg.clone(),
        headline: Headline::Novelty {
            class: "0".to_string(),
            adapter_query: true,
        },
    };
    let baseline = Arm {
        name: "fixed-encoding".to_string(),
        train,
        valid,
        test,
        cfg: TrainConfig {
            freeze_q: true,
            ..cfg
        },
        headline: Headline::Novelty {
            class: "0".to_string(),
            adapter_query: false,
        },
    };
    Ok((
        vec![adapter, baseline],
        vec![(
            "novelty-auc".to_string(),
            "adapter".to_string(),
            "fixed-encoding".to_string(),
        )],
        vec![
            ("novel.class".to_string(), "0".to_string()),
            ("novel.train-fraction".to_string(), "0.01".to_string()),
        ],
    ))
}

fn multi_label_arms(opts: &ExperimentOptions) -> Result<ArmsSpec> {
    let corpus = load_corpus(opts, (200, 30, 150), 0x3717)?;
    let train = single(multi_train_view(&corpus.train)?)?;
    let valid = single(multi_train_view(&corpus.valid)?)?;
    let test_src = multi_test_view(&corpus.test, 3)?;
    if let Some(bad) = test_src
        .samples
        .iter()
        .position(|s| s.labels.positives().count() != 2)
    {
        return Err(Error::contract(format!(
            "multi test sample {bad} does not carry exactly two positives"
        )));
    }
    let test = single(test_src)?;
    let cfg = TrainConfig {
        max_epochs: 15,
        batch_size: 64,
        ..TrainConfig::default()
    };

    let adapter = Arm {
        name: "adapter".to_string(),
        train: train.clone(),
        valid: valid.clone(),
        test: test.clone(),
        cfg: cfg.clone(),
        headline: Headline::Mauc,
    };
    let plain = Arm {
        name: "no-adapter".to_string(),
        train,
        valid,
        test,
        cfg: TrainConfig {
            freeze_q: true,
            ..cfg
        },
        headline: Headline::Mauc,
    };
    Ok((
        vec![adapter, plain],
        vec![(
            "multi-mauc".to_string(),
            "adapter".to_string(),
            "no-adapter".to_string(),
        )],
        vec![("multi.test-positives-per-sample".to_string(), "2".to_string())],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::all() {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
        }
        let err = Preset::parse("nope").unwrap_err().to_string();
        assert!(err.contains("mnist-zero"), "{err}");
        assert!(err.contains("multi-label"), "{err}");
    }

    #[test]
    fn dataset_hash_is_stable_and_sensitive() {
        let a = single(synthesize_digits(2, 1).unwrap()).unwrap();
        let b = single(synthesize_digits(2, 1).unwrap()).unwrap();
        let c = single(synthesize_digits(2, 2).unwrap()).unwrap();
        assert_eq!(dataset_hash(&a), dataset_hash(&b));
        assert_ne!(dataset_hash(&a), dataset_hash(&c));
        assert_eq!(dataset_hash(&a).len(), 64);
    }

    #[test]
    fn tiny_preset_run_produces_report() {
        // heavily scaled-down smoke run of the smallest preset
        let opts = ExperimentOptions {
            seeds: vec![0, 1],
            idx_dir: None,
            scale: 0.05,
        };
        let report = run_preset(Preset::MultiLabel, &opts).unwrap();
        assert_eq!(report.outcomes.len(), 4);
        assert_eq!(report.headlines("adapter").len(), 2);
        assert!(report.comparison("multi-mauc").is_some());
        assert!(!report.dataset_hashes.is_empty());
        let summary = report.summary();
        assert!(summary.contains("multi-label"));
        assert!(summary.contains("[comparisons]"));
    }
}
