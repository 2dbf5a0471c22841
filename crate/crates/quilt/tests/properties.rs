//! Property tests over the spec-level invariants.

use proptest::prelude::*;
use quilt::data::{
    assemble, augment, AugMode, AugmentationConfig, LabelSchema, LabelState, PartialLabelVector,
    Sample, SourceDataset,
};
use quilt::eval::auc;
use quilt::loss::{bce_masked, consistency_loss, pseudo_loss, sharpen_value, LossMask, SharpenConfig};
use quilt::rng::Rng;
use quilt::tensor::{Tape, Tensor};

fn prob() -> impl Strategy<Value = f64> {
    (0u32..=1000).prop_map(|i| i as f64 / 1000.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sharpen_moves_towards_the_poles(a in prob(), t in 1.0f64..16.0, tau in 0.05f64..0.95) {
        let cfg = SharpenConfig { t, tau };
        let s = sharpen_value(a, &cfg);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - a).abs() <= 1.0 / t + 1e-12);
        if a > tau {
            prop_assert!(s >= a);
        } else {
            prop_assert!(s <= a);
        }
    }

    #[test]
    fn sharpen_is_monotone_within_a_branch(a in prob(), b in prob(), t in 1.0f64..16.0) {
        let cfg = SharpenConfig { t, tau: 0.5 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // same branch only
        if (lo > 0.5) == (hi > 0.5) {
            prop_assert!(sharpen_value(lo, &cfg) <= sharpen_value(hi, &cfg) + 1e-12);
        }
    }

    #[test]
    fn losses_ignore_unknown_placeholders(
        seed in 0u64..1000,
        placeholder in -10.0f64..10.0,
    ) {
        let mut rng = Rng::new(seed);
        let rows = 2 + rng.range_usize(3);
        let cols = 2 + rng.range_usize(3);
        let mut states = Vec::new();
        let mut has_unknown = false;
        for _ in 0..rows {
            let mut row = Vec::new();
            for _ in 0..cols {
                row.push(match rng.range_usize(3) {
                    0 => LabelState::Positive,
                    1 => LabelState::Negative,
                    _ => {
                        has_unknown = true;
                        LabelState::Unknown
                    }
                });
            }
            states.push(PartialLabelVector::new(row));
        }
        prop_assume!(has_unknown);
        let mut mask = LossMask::from_labels(&states);
        let a_w = Tensor::param(
            &[rows, cols],
            (0..rows * cols).map(|_| 0.05 + 0.9 * rng.uniform()).collect(),
        ).unwrap();
        let a_s = Tensor::param(
            &[rows, cols],
            (0..rows * cols).map(|_| 0.05 + 0.9 * rng.uniform()).collect(),
        ).unwrap();
        let cfg = SharpenConfig::default();

        let snapshot = |mask: &LossMask| {
            let tape = Tape::new();
            (
                bce_masked(&tape, &a_w, mask).unwrap().item().to_bits(),
                pseudo_loss(&tape, &a_w, mask, &cfg).unwrap().item().to_bits(),
                consistency_loss(&tape, &a_s, &a_w, mask, &cfg).unwrap().item().to_bits(),
            )
        };
        let before = snapshot(&mask);
        for (i, lv) in states.iter().enumerate() {
            for (c, st) in lv.states().iter().enumerate() {
                if matches!(st, LabelState::Unknown) {
                    mask.set_placeholder(i, c, placeholder);
                }
            }
        }
        prop_assert_eq!(before, snapshot(&mask));
    }

    #[test]
    fn assembly_unknown_count_formula(seed in 0u64..2000) {
        let mut rng = Rng::new(seed);
        let universe = ["a", "b", "c", "d", "e", "f"];
        let source = |name: &str, rng: &mut Rng| {
            let k = 1 + rng.range_usize(universe.len() - 1);
            let mut picks: Vec<&str> = universe.to_vec();
            for i in (1..picks.len()).rev() {
                let j = rng.range_usize(i + 1);
                picks.swap(i, j);
            }
            let mut subset = picks[..k].to_vec();
            subset.sort_unstable();
            let schema = LabelSchema::new(subset.iter().map(|s| s.to_string())).unwrap();
            let count = 1 + rng.range_usize(12);
            let samples = (0..count)
                .map(|i| Sample {
                    image: Tensor::filled(&[2, 2], 0.5).unwrap(),
                    labels: PartialLabelVector::one_hot(schema.len(), i % schema.len()),
                })
                .collect();
            SourceDataset::new(name, schema, samples).unwrap()
        };
        let d0 = source("s0", &mut rng);
        let d1 = source("s1", &mut rng);
        let union = LabelSchema::union(&[&d0.schema, &d1.schema]).unwrap();
        let expected = d0.len() * (union.len() - d0.schema.len())
            + d1.len() * (union.len() - d1.schema.len());
        let assembled = assemble(&[d0, d1]).unwrap();
        prop_assert_eq!(assembled.unknown_count(), expected);
    }

    #[test]
    fn auc_invariant_under_monotone_transforms(
        seed in 0u64..1000,
        scale in 0.1f64..5.0,
        offset in -3.0f64..3.0,
    ) {
        let mut rng = Rng::new(seed);
        let k = 4 + rng.range_usize(30);
        let scores: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();
        let mut labels: Vec<bool> = (0..k).map(|_| rng.uniform() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        let base = auc(&scores, &labels).unwrap();
        // strictly increasing: affine then exp
        let warped: Vec<f64> = scores.iter().map(|s| (scale * s + offset).exp()).collect();
        let got = auc(&warped, &labels).unwrap();
        prop_assert!((base - got).abs() < 1e-12);
    }

    #[test]
    fn augmentation_stays_in_unit_range(seed in 0u64..500, sigma in 0.0f64..0.5) {
        let cfg = AugmentationConfig {
            noise_sigma: sigma,
            ..AugmentationConfig::default()
        };
        let mut rng = Rng::new(seed);
        let image = Tensor::new(
            &[28, 28],
            (0..784).map(|_| rng.uniform()).collect(),
        ).unwrap();
        let mut draw = Rng::new(seed ^ 0xf0f0);
        for mode in [AugMode::Weak, AugMode::Strong] {
            let out = augment(&image, mode, &cfg, &mut draw);
            prop_assert!(out.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
