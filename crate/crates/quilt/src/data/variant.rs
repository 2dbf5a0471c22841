//! Derived experiment datasets: binary zero-vs-rest, novel-class holdout,
//! and two-digit multi-label composition.

use super::synth::SIDE;
use super::{LabelSchema, LabelState, PartialLabelVector, Sample, SourceDataset};
use crate::error::{Error, Result};
use crate::rng::{mix, Rng};
use crate::tensor::Tensor;

/// Which derived dataset to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Collapse the ten digit classes to `{non-zero, zero}`.
    Zero,
    /// Remove one class from the train split entirely; it appears in the
    /// test split only.
    Novel,
    /// Train on half-width single digits, test on images composed of two
    /// different digits.
    Multi,
}

#[derive(Debug, Clone)]
pub struct VariantParams {
    /// Class withheld from training (novel variant).
    pub novel_class: String,
    /// Fraction of the train split actually used for training
    /// (novel variant).
    pub fraction: f64,
    /// Fraction of the input routed to the test split.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for VariantParams {
    fn default() -> Self {
        VariantParams {
            novel_class: "0".to_string(),
            fraction: 0.01,
            test_fraction: 1.0 / 6.0,
            seed: 0,
        }
    }
}

fn single_positive(sample: &Sample) -> usize {
    let mut it = sample.labels.positives();
    let first = it.next().expect("fully labeled sample has a positive");
    debug_assert!(it.next().is_none());
    first
}

fn split(d: &SourceDataset, params: &VariantParams) -> (Vec<usize>, Vec<usize>) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(mix(params.seed, 0x5111));
    rng.shuffle(&mut order);
    let test_count = ((n as f64 * params.test_fraction).round() as usize).clamp(1, n - 1);
    let mut test: Vec<usize> = order[..test_count].to_vec();
    let mut train: Vec<usize> = order[test_count..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

fn take(d: &SourceDataset, indices: &[usize]) -> Vec<Sample> {
    indices.iter().map(|&i| d.samples[i].clone()).collect()
}

/// Splits `d` into train/test portions and applies the requested variant.
///
/// `d` must carry the full ten-digit schema with fully labeled samples.
pub fn derive_variant(
    d: &SourceDataset,
    variant: Variant,
    params: &VariantParams,
) -> Result<(SourceDataset, SourceDataset)> {
    if d.schema != LabelSchema::digits() {
        return Err(Error::contract(format!(
            "derive_variant requires the digit schema, got {}",
            d.schema
        )));
    }
    let (train_idx, test_idx) = split(d, params);
    match variant {
        Variant::Zero => {
            let train = collapse_zero(&subset(d, &train_idx, "train")?)?;
            let test = collapse_zero(&subset(d, &test_idx, "test")?)?;
            Ok((train, test))
        }
        Variant::Novel => {
            let train = novel_withhold(
                &subset(d, &train_idx, "train")?,
                &params.novel_class,
                params.fraction,
                params.seed,
            )?;
            let test = subset(d, &test_idx, "novel-test")?;
            Ok((train, test))
        }
        Variant::Multi => {
            let train = multi_train_view(&subset(d, &train_idx, "train")?)?;
            let test = multi_test_view(&subset(d, &test_idx, "test")?, params.seed)?;
            Ok((train, test))
        }
    }
}

fn subset(d: &SourceDataset, indices: &[usize], suffix: &str) -> Result<SourceDataset> {
    SourceDataset::new(
        format!("{}-{suffix}", d.name),
        d.schema.clone(),
        take(d, indices),
    )
}

/// Collapses a fully labeled digit dataset to the binary
/// `{non-zero, zero}` schema.
pub fn collapse_zero(d: &SourceDataset) -> Result<SourceDataset> {
    let zero_col = d
        .schema
        .index_of("0")
        .ok_or_else(|| Error::contract("collapse_zero needs a class named '0'"))?;
    let schema = LabelSchema::new(["non-zero", "zero"])?;
    let samples = d
        .samples
        .iter()
        .map(|s| {
            let is_zero = single_positive(s) == zero_col;
            let states = if is_zero {
                vec![LabelState::Negative, LabelState::Positive]
            } else {
                vec![LabelState::Positive, LabelState::Negative]
            };
            Sample {
                image: s.image.clone(),
                labels: PartialLabelVector::new(states),
            }
        })
        .collect();
    SourceDataset::new(format!("{}-zero", d.name), schema, samples)
}

/// Keeps a seeded `fraction` of the samples, drops every sample depicting
/// `novel_class`, and marks that class `Unknown` on the survivors, so it
/// never receives supervised loss.
pub fn novel_withhold(
    d: &SourceDataset,
    novel_class: &str,
    fraction: f64,
    seed: u64,
) -> Result<SourceDataset> {
    let Some(novel) = d.schema.index_of(novel_class) else {
        return Err(Error::contract(format!(
            "novel class '{novel_class}' not in schema {}",
            d.schema
        )));
    };
    if !(0.0 < fraction && fraction <= 1.0) {
        return Err(Error::contract(format!(
            "novel fraction {fraction} outside (0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut rng = Rng::new(mix(seed, 0x4e6f));
    rng.shuffle(&mut order);
    let keep = ((order.len() as f64 * fraction).round() as usize).max(1);
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();

    let mut samples = Vec::new();
    for &i in &kept {
        let s = &d.samples[i];
        if single_positive(s) == novel {
            continue;
        }
        let mut labels = s.labels.clone();
        labels.set(novel, LabelState::Unknown);
        samples.push(Sample {
            image: s.image.clone(),
            labels,
        });
    }
    SourceDataset::new(format!("{}-novel", d.name), d.schema.clone(), samples)
}

/// Half-width single-digit training view: each image is squeezed to
/// `28 x 14` by column-pair averaging and padded back with zeros on the
/// right; labels are unchanged.
pub fn multi_train_view(d: &SourceDataset) -> Result<SourceDataset> {
    let samples = d
        .samples
        .iter()
        .map(|s| {
            let image = pad_right(&half_width(&s.image));
            Ok(Sample {
                image: Tensor::new(&[SIDE, SIDE], image)?,
                labels: s.labels.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SourceDataset::new(format!("{}-multi", d.name), d.schema.clone(), samples)
}

/// Two-digit test view: samples are paired across different digits, their
/// half-width views concatenated side by side, and both digits marked
/// `Positive`.
pub fn multi_test_view(d: &SourceDataset, seed: u64) -> Result<SourceDataset> {
    compose_pairs(d, &(0..d.len()).collect::<Vec<_>>(), seed)
}

/// 28x28 -> 28x14 by averaging adjacent column pairs.
fn half_width(image: &Tensor) -> Vec<f64> {
    let v = image.values();
    let mut out = Vec::with_capacity(SIDE * SIDE / 2);
    for r in 0..SIDE {
        for c in 0..SIDE / 2 {
            let a = v[r * SIDE + 2 * c];
            let b = v[r * SIDE + 2 * c + 1];
            out.push((a + b) / 2.0);
        }
    }
    out
}

/// Places a 28x14 half on the left of an all-zero 28x28 canvas.
fn pad_right(half: &[f64]) -> Vec<f64> {
    let w = SIDE / 2;
    let mut out = vec![0.0; SIDE * SIDE];
    for r in 0..SIDE {
        out[r * SIDE..r * SIDE + w].copy_from_slice(&half[r * w..(r + 1) * w]);
    }
    out
}

/// Builds two-digit test images by pairing samples of different digits.
fn compose_pairs(d: &SourceDataset, indices: &[usize], seed: u64) -> Result<SourceDataset> {
    let mut order: Vec<usize> = indices.to_vec();
    let mut rng = Rng::new(mix(seed, 0x9a17));
    rng.shuffle(&mut order);

    let mut used = vec![false; order.len()];
    let mut samples = Vec::new();
    for i in 0..order.len() {
        if used[i] {
            continue;
        }
        let di = single_positive(&d.samples[order[i]]);
        let Some(j) = (i + 1..order.len())
            .find(|&j| !used[j] && single_positive(&d.samples[order[j]]) != di)
        else {
            continue;
        };
        used[i] = true;
        used[j] = true;
        let dj = single_positive(&d.samples[order[j]]);

        let left = half_width(&d.samples[order[i]].image);
        let right = half_width(&d.samples[order[j]].image);
        let w = SIDE / 2;
        let mut pixels = vec![0.0; SIDE * SIDE];
        for r in 0..SIDE {
            pixels[r * SIDE..r * SIDE + w].copy_from_slice(&left[r * w..(r + 1) * w]);
            pixels[r * SIDE + w..(r + 1) * SIDE].copy_from_slice(&right[r * w..(r + 1) * w]);
        }
        let mut states = vec![LabelState::Negative; d.schema.len()];
        states[di] = LabelState::Positive;
        states[dj] = LabelState::Positive;
        samples.push(Sample {
            image: Tensor::new(&[SIDE, SIDE], pixels)?,
            labels: PartialLabelVector::new(states),
        });
    }
    SourceDataset::new(format!("{}-multi-test", d.name), d.schema.clone(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthesize_digits;

    fn pool() -> SourceDataset {
        synthesize_digits(30, 42).unwrap()
    }

    #[test]
    fn zero_variant_collapses_schema() {
        let (train, test) = derive_variant(&pool(), Variant::Zero, &VariantParams::default()).unwrap();
        assert_eq!(train.schema.names(), &["non-zero", "zero"]);
        assert_eq!(train.len() + test.len(), 300);
        // a non-zero digit is Negative at class "zero"
        let zero_col = train.schema.index_of("zero").unwrap();
        let nonzero_col = train.schema.index_of("non-zero").unwrap();
        for s in train.samples.iter().chain(&test.samples) {
            let states = s.labels.states();
            assert_ne!(states[zero_col], states[nonzero_col]);
            assert!(states.iter().all(|st| st.is_known()));
        }
        // both splits contain both classes for a pool this size
        assert!(test
            .samples
            .iter()
            .any(|s| s.labels.state(zero_col) == LabelState::Positive));
        assert!(test
            .samples
            .iter()
            .any(|s| s.labels.state(zero_col) == LabelState::Negative));
    }

    #[test]
    fn novel_variant_withholds_the_class_from_training() {
        let params = VariantParams {
            novel_class: "0".into(),
            fraction: 0.5,
            ..VariantParams::default()
        };
        let (train, test) = derive_variant(&pool(), Variant::Novel, &params).unwrap();
        let col = train.schema.index_of("0").unwrap();
        for s in &train.samples {
            assert_ne!(s.labels.state(col), LabelState::Positive);
            assert_eq!(s.labels.state(col), LabelState::Unknown);
        }
        assert!(test
            .samples
            .iter()
            .any(|s| s.labels.state(col) == LabelState::Positive));
        // test split is untouched: fully labeled
        for s in &test.samples {
            assert!(s.labels.states().iter().all(|st| st.is_known()));
        }
    }

    #[test]
    fn novel_fraction_shrinks_training() {
        let params = VariantParams {
            fraction: 0.1,
            ..VariantParams::default()
        };
        let (train, _) = derive_variant(&pool(), Variant::Novel, &params).unwrap();
        // 250 train-split samples * 0.1 = 25 kept, minus any depicting "0"
        assert!(train.len() <= 25);
        assert!(!train.is_empty());
    }

    #[test]
    fn novel_rejects_unknown_class() {
        let params = VariantParams {
            novel_class: "x".into(),
            ..VariantParams::default()
        };
        assert!(derive_variant(&pool(), Variant::Novel, &params).is_err());
    }

    #[test]
    fn multi_test_samples_have_two_positives() {
        let (train, test) = derive_variant(&pool(), Variant::Multi, &VariantParams::default()).unwrap();
        for s in &train.samples {
            assert_eq!(s.labels.positives().count(), 1);
            // right half is zero padding
            let v = s.image.to_vec();
            for r in 0..SIDE {
                for c in SIDE / 2..SIDE {
                    assert_eq!(v[r * SIDE + c], 0.0);
                }
            }
        }
        assert!(!test.is_empty());
        for s in &test.samples {
            assert_eq!(s.labels.positives().count(), 2);
        }
    }

    #[test]
    fn variant_requires_digit_schema() {
        let d = crate::data::test_util::toy_dataset("t", &["a", "b"], 2);
        assert!(derive_variant(&d, Variant::Zero, &VariantParams::default()).is_err());
    }
}
