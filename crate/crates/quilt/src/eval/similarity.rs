//! Inter-class similarity from origin-shifted class-mean features.

use crate::data::{AssembledDataset, LabelState};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::tensor::{Tape, Tensor};
use std::fmt::Write as _;
use std::path::Path;

/// Symmetric matrix of cosine similarities between class means, after
/// shifting the origin of the feature space to the global mean feature.
/// Entries are absent for classes without positive samples or with a zero
/// shifted mean.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub classes: Vec<String>,
    values: Vec<Option<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a * self.classes.len() + b]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// CSV with class-name headers; absent entries are empty cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("class");
        for c in &self.classes {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (i, c) in self.classes.iter().enumerate() {
            let _ = write!(out, "{c}");
            for j in 0..self.classes.len() {
                match self.get(i, j) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        std::fs::write(path, out)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn extract_all_features(state: &ModelState, d: &AssembledDataset) -> Result<Vec<f64>> {
    let mut features = Vec::new();
    let mut start = 0;
    while start < d.len() {
        let end = (start + 256).min(d.len());
        let pixels = d.samples[start].image.len();
        let mut flat = Vec::with_capacity((end - start) * pixels);
        for s in &d.samples[start..end] {
            flat.extend_from_slice(&s.image.values());
        }
        let tape = Tape::no_grad();
        let batch = Tensor::new(&[end - start, pixels], flat)?;
        let f = state.extract_features(&tape, &batch)?;
        features.extend_from_slice(&f.values());
        start = end;
    }
    Ok(features)
}

/// Computes per-class mean features over annotated-positive samples,
/// shifts every mean by the global mean over all samples, and returns the
/// cosine similarity matrix of the shifted means.
pub fn class_similarity(state: &ModelState, d: &AssembledDataset) -> Result<SimilarityMatrix> {
    if d.is_empty() {
        return Err(Error::contract("class_similarity: empty dataset"));
    }
    let n = state.classes();
    let m = state.extractor.config().features;
    let features = extract_all_features(state, d)?;
    let count = d.len();

    let mut global = vec![0.0; m];
    for i in 0..count {
        for k in 0..m {
            global[k] += features[i * m + k];
        }
    }
    for g in global.iter_mut() {
        *g /= count as f64;
    }

    // shifted class means; None when a class has no positive samples
    let mut shifted: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for c in 0..n {
        let mut acc = vec![0.0; m];
        let mut hits = 0usize;
        for (i, s) in d.samples.iter().enumerate() {
            if s.labels.state(c) == LabelState::Positive {
                for k in 0..m {
                    acc[k] += features[i * m + k];
                }
                hits += 1;
            }
        }
        if hits == 0 {
            shifted.push(None);
            continue;
        }
        for (a, g) in acc.iter_mut().zip(&global) {
            *a = *a / hits as f64 - g;
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        shifted.push((norm > 0.0).then_some(acc));
    }

    let mut values = vec![None; n * n];
    for a in 0..n {
        let Some(va) = &shifted[a] else { continue };
        let na = va.iter().map(|v| v * v).sum::<f64>().sqrt();
        for b in a..n {
            let Some(vb) = &shifted[b] else { continue };
            let nb = vb.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
            let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
            let cos = if a == b { 1.0 } else { cos };
            values[a * n + b] = Some(cos);
            values[b * n + a] = Some(cos);
        }
    }

    Ok(SimilarityMatrix {
        classes: d.union_schema.names().to_vec(),
        values,
    })
}

/// Cosine matrix over explicit feature rows: the hand-checkable core of
/// [`class_similarity`], exposed for tests and reports.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn cosine_matrix(shifted: &[Vec<f64>]) -> Vec<Option<f64>> {
    let n = shifted.len();
    let mut values = vec![None; n * n];
    for a in 0..n {
        let na = shifted[a].iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 {
            continue;
        }
        for b in 0..n {
            let nb = shifted[b].iter().map(|v| v * v).sum::<f64>().sqrt();
            if nb == 0.0 {
                continue;
            }
            let dot: f64 = shifted[a].iter().zip(&shifted[b]).map(|(x, y)| x * y).sum();
            values[a * n + b] = Some((dot / (na * nb)).clamp(-1.0, 1.0));
        }
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assemble, synthesize_digits};
    use crate::model::ModelConfig;

    #[test]
    fn antipodal_means_have_similarity_minus_one() {
        let shifted = vec![vec![1.0, 2.0, -1.0], vec![-1.0, -2.0, 1.0]];
        let vals = cosine_matrix(&shifted);
        assert!((vals[1].unwrap() + 1.0).abs() < 1e-12);
        assert!((vals[0].unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_three_class_cosines() {
        let shifted = vec![
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 3.0],
        ];
        let vals = cosine_matrix(&shifted);
        let root_half = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vals[0 * 3 + 1].unwrap() - 0.0).abs() < 1e-12);
        assert!((vals[0 * 3 + 2].unwrap() - root_half).abs() < 1e-12);
        assert!((vals[1 * 3 + 2].unwrap() - root_half).abs() < 1e-12);
    }

    #[test]
    fn zero_shifted_vectors_are_absent() {
        let shifted = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let vals = cosine_matrix(&shifted);
        assert!(vals[0].is_none());
        assert!(vals[1].is_none());
        assert!(vals[3].is_some());
    }

    #[test]
    fn model_similarity_is_symmetric_with_unit_diagonal() {
        let d = assemble(&[synthesize_digits(4, 9).unwrap()]).unwrap();
        let state = ModelState::new(
            d.union_schema.clone(),
            ModelConfig {
                input: 784,
                hidden: 16,
                features: 8,
            },
            5,
        )
        .unwrap();
        let sim = class_similarity(&state, &d).unwrap();
        assert_eq!(sim.len(), 10);
        for a in 0..10 {
            if sim.get(a, a).is_some() {
                assert!((sim.get(a, a).unwrap() - 1.0).abs() < 1e-12);
            }
            for b in 0..10 {
                match (sim.get(a, b), sim.get(b, a)) {
                    (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
                    (None, None) => {}
                    other => panic!("asymmetric absence {other:?}"),
                }
            }
        }
    }
}
