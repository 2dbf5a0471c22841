//! Model evaluation: per-class AUC, inter-class similarity, novelty
//! scoring, and the statistical utilities reports are built from.

mod auc;
mod similarity;
mod stats;

pub use auc::{auc, auc_pairwise};
pub use similarity::{class_similarity, SimilarityMatrix};
pub use stats::{pearson, student_t_two_sided_p, two_sample_t_test, TTest};

use crate::data::{AssembledDataset, LabelState};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::tensor::{Tape, Tensor};
use std::fmt::Write as _;
use std::path::Path;

const EVAL_CHUNK: usize = 256;

/// Per-class AUC over the evaluable classes, plus their mean.
///
/// A class is evaluable when the split holds at least one annotated
/// positive and one annotated negative for it; other classes are reported
/// absent and excluded from the mean.
#[derive(Debug, Clone)]
pub struct ClassMetrics {
    pub classes: Vec<String>,
    pub per_class: Vec<Option<f64>>,
    pub mauc: Option<f64>,
}

impl ClassMetrics {
    pub fn class_auc(&self, name: &str) -> Option<f64> {
        self.classes
            .iter()
            .position(|c| c == name)
            .and_then(|i| self.per_class[i])
    }
}

/// Runs the model over un-augmented images (in fixed chunks) and returns
/// the flattened `N x n` answer matrix.
pub fn score_dataset(state: &ModelState, d: &AssembledDataset) -> Result<Vec<f64>> {
    let n = state.classes();
    let mut scores = Vec::with_capacity(d.len() * n);
    let mut start = 0;
    while start < d.len() {
        let end = (start + EVAL_CHUNK).min(d.len());
        let pixels = d.samples[start].image.len();
        let mut flat = Vec::with_capacity((end - start) * pixels);
        for s in &d.samples[start..end] {
            flat.extend_from_slice(&s.image.values());
        }
        let tape = Tape::no_grad();
        let batch = Tensor::new(&[end - start, pixels], flat)?;
        let answers = state.answers(&tape, &batch)?;
        scores.extend_from_slice(&answers.values());
        start = end;
    }
    Ok(scores)
}

/// Per-class AUC on the annotated entries of `d`.
///
/// For each class, only samples whose state for that class is annotated
/// participate; `Unknown` entries are excluded from that class's ranking.
pub fn evaluate(state: &ModelState, d: &AssembledDataset) -> Result<ClassMetrics> {
    if d.is_empty() {
        return Err(Error::contract("evaluate: empty dataset"));
    }
    if state.schema != d.union_schema {
        return Err(Error::contract(format!(
            "evaluate: model schema {} does not match dataset schema {}",
            state.schema, d.union_schema
        )));
    }
    let n = state.classes();
    let all_scores = score_dataset(state, d)?;

    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (i, s) in d.samples.iter().enumerate() {
            match s.labels.state(c) {
                LabelState::Positive => {
                    scores.push(all_scores[i * n + c]);
                    labels.push(true);
                }
                LabelState::Negative => {
                    scores.push(all_scores[i * n + c]);
                    labels.push(false);
                }
                LabelState::Unknown => {}
            }
        }
        per_class.push(match auc(&scores, &labels) {
            Ok(v) => Some(v),
            Err(Error::NotEvaluable(_)) => None,
            Err(e) => return Err(e),
        });
    }

    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mauc = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(ClassMetrics {
        classes: d.union_schema.names().to_vec(),
        per_class,
        mauc,
    })
}

/// How to score "this image shows something never trained on".
#[derive(Debug, Clone)]
pub enum NoveltyMode {
    /// One minus the highest answer over the trained classes; the default
    /// for models without a reserved slot for the novel class.
    MaxComplement { trained: Vec<usize> },
    /// The answer at the novel class's reserved schema slot.
    AdapterQuery { class: usize },
}

/// Novelty score per batch row, higher meaning "more novel".
pub fn novelty_score(state: &ModelState, batch: &Tensor, mode: &NoveltyMode) -> Result<Vec<f64>> {
    let n = state.classes();
    match mode {
        NoveltyMode::AdapterQuery { class } => {
            if *class >= n {
                return Err(Error::contract(format!(
                    "adapter-query novelty needs a reserved slot: class {class} \
                     out of range for {n} classes"
                )));
            }
            state.query_class(batch, *class)
        }
        NoveltyMode::MaxComplement { trained } => {
            if trained.is_empty() {
                return Err(Error::contract("max-complement needs trained classes"));
            }
            if let Some(&bad) = trained.iter().find(|&&c| c >= n) {
                return Err(Error::contract(format!(
                    "trained class {bad} out of range for {n} classes"
                )));
            }
            let tape = Tape::no_grad();
            let answers = state.answers(&tape, batch)?;
            let v = answers.values();
            let rows = answers.shape()[0];
            Ok((0..rows)
                .map(|i| {
                    let max = trained
                        .iter()
                        .map(|&c| v[i * n + c])
                        .fold(f64::NEG_INFINITY, f64::max);
                    1.0 - max
                })
                .collect())
        }
    }
}

/// Writes the metrics-report CSV: `experiment,seed,class,auc` rows for
/// every evaluable class, then one summary row with class `mAUC`.
pub fn write_metrics_csv(
    path: &Path,
    rows: &[(String, u64, &ClassMetrics)],
) -> Result<()> {
    let mut out = String::from("experiment,seed,class,auc\n");
    for (experiment, seed, metrics) in rows {
        for (name, value) in metrics.classes.iter().zip(&metrics.per_class) {
            if let Some(v) = value {
                let _ = writeln!(out, "{experiment},{seed},{name},{v}");
            }
        }
        if let Some(m) = metrics.mauc {
            let _ = writeln!(out, "{experiment},{seed},mAUC,{m}");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
