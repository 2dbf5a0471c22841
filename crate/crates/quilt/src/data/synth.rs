//! Offline synthetic digit dataset.
//!
//! Digits are rendered as seven-segment glyphs on a 28x28 canvas. Each
//! digit owns a fixed bank of templates generated once from a constant
//! seed: stroke contrast varies, the segment separating a digit from its
//! nearest neighbour is sometimes barely there, a faint borrowed segment
//! sometimes pulls it towards that neighbour, and short distractor strokes
//! add clutter. Neighbouring digits (0 and 8, 1 and 7, 3 and 9, 5 and 6)
//! genuinely overlap, so a classifier cannot saturate and fine-grained
//! labels on the confusable classes carry real information.
//!
//! Generation is fully deterministic: the bank is a function of constants,
//! and per-sample draws (template choice, +-2 pixel shift, gaussian pixel
//! noise) come from the dataset seed.

use super::{LabelSchema, PartialLabelVector, Sample, SourceDataset};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::sync::OnceLock;

pub const SIDE: usize = 28;
const SHIFT: i64 = 2;
const NOISE_SIGMA: f64 = 0.05;
const BANK_SEED: u64 = 0x51e9_ba5e;
const TEMPLATES_PER_DIGIT: usize = 256;

/// Seven-segment identifiers, classic layout.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Seg {
    Top,
    TopRight,
    BottomRight,
    Bottom,
    BottomLeft,
    TopLeft,
    Middle,
}

fn seg_rect(seg: Seg) -> (usize, usize, usize, usize) {
    // (row range, col range), inclusive-exclusive
    match seg {
        Seg::Top => (4, 7, 7, 21),
        Seg::TopRight => (4, 14, 19, 22),
        Seg::BottomRight => (14, 24, 19, 22),
        Seg::Bottom => (21, 24, 7, 21),
        Seg::BottomLeft => (14, 24, 6, 9),
        Seg::TopLeft => (4, 14, 6, 9),
        Seg::Middle => (12, 15, 7, 21),
    }
}

/// Segment sets per digit, classic seven-segment assignments.
fn base_segments(digit: usize) -> &'static [Seg] {
    use Seg::*;
    match digit {
        0 => &[Top, TopRight, BottomRight, Bottom, BottomLeft, TopLeft],
        1 => &[TopRight, BottomRight],
        2 => &[Top, TopRight, Middle, BottomLeft, Bottom],
        3 => &[Top, TopRight, Middle, BottomRight, Bottom],
        4 => &[TopLeft, Middle, TopRight, BottomRight],
        5 => &[Top, TopLeft, Middle, BottomRight, Bottom],
        6 => &[Top, TopLeft, Middle, BottomLeft, Bottom, BottomRight],
        7 => &[Top, TopRight, BottomRight],
        8 => &[
            Top, TopRight, BottomRight, Bottom, BottomLeft, TopLeft, Middle,
        ],
        9 => &[Top, TopRight, BottomRight, Bottom, TopLeft, Middle],
        _ => unreachable!("digit out of range"),
    }
}

/// A faint extra segment pulls the digit towards a neighbour.
fn borrowed_segment(digit: usize) -> Option<Seg> {
    use Seg::*;
    match digit {
        0 => Some(Middle),      // towards 8
        1 => Some(Top),         // towards 7
        2 => Some(BottomRight), // closes the hook
        3 => Some(TopLeft),     // towards 9
        5 => Some(BottomLeft),  // towards 6
        6 => Some(TopRight),    // towards 8
        7 => Some(Middle),      // towards a bare 3
        9 => Some(BottomLeft),  // towards 8
        _ => None,
    }
}

/// Weakening this segment drifts the digit towards a neighbour.
fn weak_segment(digit: usize) -> Option<Seg> {
    use Seg::*;
    match digit {
        0 => Some(TopLeft),
        1 => Some(BottomRight),
        2 => Some(Bottom),
        3 => Some(Middle),
        4 => Some(TopLeft), // towards 1
        5 => Some(Top),
        6 => Some(Top),     // towards 5's lower body
        7 => Some(Top),     // towards 1
        8 => Some(Middle),  // towards 0
        9 => Some(TopLeft), // towards 3
        _ => None,
    }
}

/// One renderable stroke: a pixel rectangle at an intensity.
#[derive(Clone, Copy)]
struct Stroke {
    r0: i64,
    r1: i64,
    c0: i64,
    c1: i64,
    intensity: f64,
}

fn seg_stroke(seg: Seg, dy: i64, dx: i64, intensity: f64, rng: &mut Rng) -> Stroke {
    let (r0, r1, c0, c1) = seg_rect(seg);
    // per-template shape jitter: every edge wobbles by a pixel
    let r0 = r0 as i64 + dy + rng.range_i64(-1, 1);
    let mut r1 = r1 as i64 + dy + rng.range_i64(-1, 1);
    let c0 = c0 as i64 + dx + rng.range_i64(-1, 1);
    let mut c1 = c1 as i64 + dx + rng.range_i64(-1, 1);
    if r1 <= r0 {
        r1 = r0 + 1;
    }
    if c1 <= c0 {
        c1 = c0 + 1;
    }
    Stroke {
        r0,
        r1,
        c0,
        c1,
        intensity,
    }
}

type Template = Vec<Stroke>;

/// Builds the fixed template bank for one digit.
fn build_digit_bank(digit: usize, rng: &mut Rng) -> Vec<Template> {
    let segs = base_segments(digit);
    let mut bank = Vec::with_capacity(TEMPLATES_PER_DIGIT);
    for _ in 0..TEMPLATES_PER_DIGIT {
        let body = 0.35 + 0.55 * rng.uniform();
        // whole-glyph placement variation on top of the per-sample jitter
        let gdy = rng.range_i64(-3, 3);
        let gdx = rng.range_i64(-4, 4);

        let weakened = rng.uniform() < 0.45;
        let borrowed = rng.uniform() < 0.45;

        let mut strokes: Template = Vec::new();
        for &seg in segs {
            let mut level = body * (0.75 + 0.4 * rng.uniform());
            if weakened && Some(seg) == weak_segment(digit) {
                // hard but still above the borrowed-segment band
                level = 0.24 + 0.18 * rng.uniform();
            }
            strokes.push(seg_stroke(seg, gdy, gdx, level.min(0.95), rng));
        }
        if borrowed {
            if let Some(seg) = borrowed_segment(digit) {
                let level = 0.1 + 0.12 * rng.uniform();
                strokes.push(seg_stroke(seg, gdy, gdx, level, rng));
            }
        }
        // distractor clutter: up to three short bars anywhere in the canvas
        for _ in 0..rng.range_usize(4) {
            let horizontal = rng.uniform() < 0.5;
            let (h, w) = if horizontal { (2, 7) } else { (7, 2) };
            let r0 = rng.range_i64(3, (SIDE - h as usize - 3) as i64);
            let c0 = rng.range_i64(3, (SIDE - w as usize - 3) as i64);
            strokes.push(Stroke {
                r0,
                r1: r0 + h,
                c0,
                c1: c0 + w,
                intensity: 0.15 + 0.45 * rng.uniform(),
            });
        }
        bank.push(strokes);
    }
    bank
}

fn bank() -> &'static Vec<Vec<Template>> {
    static BANK: OnceLock<Vec<Vec<Template>>> = OnceLock::new();
    BANK.get_or_init(|| {
        let mut rng = Rng::new(BANK_SEED);
        (0..10).map(|d| build_digit_bank(d, &mut rng)).collect()
    })
}

fn render(strokes: &[Stroke], dy: i64, dx: i64, rng: &mut Rng) -> Vec<f64> {
    let mut canvas = vec![0.0_f64; SIDE * SIDE];
    for s in strokes {
        for r in s.r0 + dy..s.r1 + dy {
            if !(0..SIDE as i64).contains(&r) {
                continue;
            }
            for c in s.c0 + dx..s.c1 + dx {
                if (0..SIDE as i64).contains(&c) {
                    let idx = r as usize * SIDE + c as usize;
                    canvas[idx] = canvas[idx].max(s.intensity);
                }
            }
        }
    }
    for px in canvas.iter_mut() {
        *px = (*px + NOISE_SIGMA * rng.normal()).clamp(0.0, 1.0);
    }
    canvas
}

/// Generates `count_per_class` samples of each digit, interleaved
/// (sample `i` depicts digit `i % 10`), fully labeled over the digit schema.
/// The same `(count_per_class, seed)` pair always produces bit-identical
/// datasets.
pub fn synthesize_digits(count_per_class: usize, seed: u64) -> Result<SourceDataset> {
    assert!(count_per_class >= 1, "count_per_class must be positive");
    let bank = bank();
    let mut rng = Rng::new(seed);
    let total = count_per_class * 10;
    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        let digit = i % 10;
        let t = rng.range_usize(bank[digit].len());
        let dy = rng.range_i64(-SHIFT, SHIFT);
        let dx = rng.range_i64(-SHIFT, SHIFT);
        let pixels = render(&bank[digit][t], dy, dx, &mut rng);
        samples.push(Sample {
            image: Tensor::new(&[SIDE, SIDE], pixels)?,
            labels: PartialLabelVector::one_hot(10, digit),
        });
    }
    SourceDataset::new(format!("synth-{seed}"), LabelSchema::digits(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelState;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synthesize_digits(1, 0).unwrap();
        let b = synthesize_digits(1, 0).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.labels, y.labels);
            let xv = x.image.to_vec();
            let yv = y.image.to_vec();
            assert!(xv.iter().zip(&yv).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn class_balance_is_exact() {
        let d = synthesize_digits(30, 1).unwrap();
        assert_eq!(d.len(), 300);
        let mut counts = [0usize; 10];
        for s in &d.samples {
            let pos: Vec<usize> = s.labels.positives().collect();
            assert_eq!(pos.len(), 1);
            counts[pos[0]] += 1;
        }
        assert!(counts.iter().all(|&c| c == 30));
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let d = synthesize_digits(5, 3).unwrap();
        for s in &d.samples {
            assert!(s.image.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn fully_labeled_single_positive() {
        let d = synthesize_digits(2, 7).unwrap();
        for s in &d.samples {
            assert!(s
                .labels
                .states()
                .iter()
                .all(|st| !matches!(st, LabelState::Unknown)));
            assert_eq!(s.labels.positives().count(), 1);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = synthesize_digits(1, 0).unwrap();
        let b = synthesize_digits(1, 1).unwrap();
        let same = a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| x.image.to_vec() == y.image.to_vec());
        assert!(!same);
    }

    #[test]
    fn template_bank_is_varied() {
        let b = bank();
        assert_eq!(b.len(), 10);
        for digit_bank in b {
            assert_eq!(digit_bank.len(), TEMPLATES_PER_DIGIT);
        }
        // intensities differ across templates of one digit
        let zeros = &b[0];
        let first = zeros[0][0].intensity;
        assert!(zeros.iter().any(|t| (t[0].intensity - first).abs() > 0.05));
    }
}
