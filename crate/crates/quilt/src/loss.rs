//! Loss terms for partially labeled batches.
//!
//! Each answer entry is either annotated (`Positive`/`Negative`) or
//! `Unknown`. Annotated entries contribute masked binary cross entropy.
//! Unannotated entries contribute two unsupervised terms built around a
//! sharpening operator: a pseudo-label term pulling the weak-view answer
//! towards its own sharpened value, and a consistency term pulling the
//! strong-view answer towards the sharpened weak-view answer. Sharpened
//! targets never carry gradient.

use crate::data::{LabelState, PartialLabelVector};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Temperature and threshold of the sharpening operator.
///
/// `t` may be `f64::INFINITY`, which disables pseudo-labeling entirely.
#[derive(Debug, Clone, Copy)]
pub struct SharpenConfig {
    pub t: f64,
    pub tau: f64,
}

impl Default for SharpenConfig {
    fn default() -> Self {
        SharpenConfig { t: 4.0, tau: 0.5 }
    }
}

impl SharpenConfig {
    pub fn with_t(t: f64) -> SharpenConfig {
        SharpenConfig {
            t,
            ..SharpenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::contract(format!(
                "sharpen temperature must be positive, got {}",
                self.t
            )));
        }
        if !(0.0 < self.tau && self.tau < 1.0) {
            return Err(Error::contract(format!(
                "sharpen threshold must lie in (0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Sharpens one probability: values above the threshold move towards 1 by
/// `(1 - a) / t`, values at or below move towards 0 by `a / t`.
pub fn sharpen_value(a: f64, cfg: &SharpenConfig) -> f64 {
    if cfg.t.is_infinite() {
        a
    } else if a > cfg.tau {
        a + (1.0 - a) / cfg.t
    } else {
        a - a / cfg.t
    }
}

/// Sharpens a probability tensor into a detached pseudo-label tensor.
/// The result carries no gradient.
pub fn sharpen(a: &Tensor, cfg: &SharpenConfig) -> Result<Tensor> {
    cfg.validate()?;
    let values: Vec<f64> = a.values().iter().map(|&v| sharpen_value(v, cfg)).collect();
    Tensor::new(&a.shape(), values)
}

/// Which entries of an `N x n` answer matrix are annotated, and with what.
///
/// `targets` holds 1 for `Positive` and 0 for `Negative`; entries where
/// `known` is false are placeholders that no loss term reads.
#[derive(Debug, Clone)]
pub struct LossMask {
    rows: usize,
    cols: usize,
    known: Vec<bool>,
    targets: Tensor,
}

impl LossMask {
    pub fn new(rows: usize, cols: usize, known: Vec<bool>, targets: Vec<f64>) -> Result<LossMask> {
        if known.len() != rows * cols || targets.len() != rows * cols {
            return Err(Error::contract(format!(
                "mask buffers must hold {}x{} entries",
                rows, cols
            )));
        }
        Ok(LossMask {
            rows,
            cols,
            known,
            targets: Tensor::new(&[rows, cols], targets)?,
        })
    }

    /// Builds the mask for a batch of label vectors.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a PartialLabelVector>) -> LossMask {
        let mut known = Vec::new();
        let mut targets = Vec::new();
        let mut rows = 0;
        let mut cols = 0;
        for lv in labels {
            rows += 1;
            cols = lv.len();
            for s in lv.states() {
                known.push(s.is_known());
                targets.push(match s {
                    LabelState::Positive => 1.0,
                    _ => 0.0,
                });
            }
        }
        LossMask::new(rows, cols, known, targets).expect("label vectors share one schema")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn unknown_count(&self) -> usize {
        self.known.len() - self.known_count()
    }

    fn unknown_mask(&self) -> Vec<bool> {
        self.known.iter().map(|&k| !k).collect()
    }

    /// Overwrites the placeholder target at an unannotated entry; panics if
    /// the entry is annotated. Exists for masking-invariance tests.
    pub fn set_placeholder(&mut self, row: usize, col: usize, value: f64) {
        let idx = row * self.cols + col;
        assert!(!self.known[idx], "entry ({row},{col}) is annotated");
        let mut v = self.targets.to_vec();
        v[idx] = value;
        self.targets.set_values(&v);
    }

    fn check_shape(&self, a: &Tensor, kernel: &'static str) -> Result<()> {
        if a.shape() != [self.rows, self.cols] {
            return Err(Error::ShapeMismatch {
                kernel,
                lhs: a.shape(),
                rhs: vec![self.rows, self.cols],
            });
        }
        Ok(())
    }
}

/// Mean binary cross entropy over the annotated entries; zero when nothing
/// is annotated.
pub fn bce_masked(tape: &Tape, answers: &Tensor, mask: &LossMask) -> Result<Tensor> {
    mask.check_shape(answers, "bce_masked")?;
    if mask.known_count() == 0 {
        return Ok(Tensor::scalar(0.0));
    }
    let ones = Tensor::filled(&answers.shape(), 1.0)?;
    let log_a = tape.log_clamped(answers)?;
    let log_not_a = tape.log_clamped(&tape.sub(&ones, answers)?)?;

    let y = mask.targets();
    let not_y = Tensor::new(
        &y.shape(),
        y.values().iter().map(|&v| 1.0 - v).collect::<Vec<_>>(),
    )?;
    let pos_term = tape.mul(y, &log_a)?;
    let neg_term = tape.mul(&not_y, &log_not_a)?;
    let sum = tape.add(&pos_term, &neg_term)?;
    let nll = tape.scale(&sum, -1.0)?;
    let selected = tape.masked_select(&nll, mask.known())?;
    tape.mean(&selected)
}

/// Mean squared gap between the weak-view answers and their own sharpened
/// pseudo-labels over the unannotated entries. Zero when everything is
/// annotated or sharpening is disabled (`t = inf`).
pub fn pseudo_loss(
    tape: &Tape,
    answers_weak: &Tensor,
    mask: &LossMask,
    cfg: &SharpenConfig,
) -> Result<Tensor> {
    mask.check_shape(answers_weak, "pseudo_loss")?;
    cfg.validate()?;
    if mask.unknown_count() == 0 || cfg.t.is_infinite() {
        return Ok(Tensor::scalar(0.0));
    }
    let target = sharpen(answers_weak, cfg)?;
    let diff = tape.sub(answers_weak, &target)?;
    let sq = tape.mul(&diff, &diff)?;
    let selected = tape.masked_select(&sq, &mask.unknown_mask())?;
    tape.mean(&selected)
}

/// Mean squared gap between the strong-view answers and the sharpened
/// weak-view answers over the unannotated entries. Gradient flows through
/// the strong view only.
pub fn consistency_loss(
    tape: &Tape,
    answers_strong: &Tensor,
    answers_weak: &Tensor,
    mask: &LossMask,
    cfg: &SharpenConfig,
) -> Result<Tensor> {
    mask.check_shape(answers_strong, "consistency_loss")?;
    mask.check_shape(answers_weak, "consistency_loss")?;
    cfg.validate()?;
    if mask.unknown_count() == 0 {
        return Ok(Tensor::scalar(0.0));
    }
    let target = sharpen(answers_weak, cfg)?;
    let diff = tape.sub(answers_strong, &target)?;
    let sq = tape.mul(&diff, &diff)?;
    let selected = tape.masked_select(&sq, &mask.unknown_mask())?;
    tape.mean(&selected)
}

/// Per-batch loss terms and their sum (unit weights).
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub l_bce: Tensor,
    pub l_pseudo: Tensor,
    pub l_consist: Tensor,
    pub l_total: Tensor,
    pub known_entries: usize,
    pub unknown_entries: usize,
}

impl LossBreakdown {
    /// The four scalar values `(bce, pseudo, consist, total)`.
    pub fn values(&self) -> (f64, f64, f64, f64) {
        (
            self.l_bce.item(),
            self.l_pseudo.item(),
            self.l_consist.item(),
            self.l_total.item(),
        )
    }

    pub fn is_finite(&self) -> bool {
        let (a, b, c, d) = self.values();
        a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()
    }
}

/// Builds all three terms and their unit-weight sum.
pub fn total_loss(
    tape: &Tape,
    answers_weak: &Tensor,
    answers_strong: &Tensor,
    mask: &LossMask,
    cfg: &SharpenConfig,
) -> Result<LossBreakdown> {
    let l_bce = bce_masked(tape, answers_weak, mask)?;
    let l_pseudo = pseudo_loss(tape, answers_weak, mask, cfg)?;
    let l_consist = consistency_loss(tape, answers_strong, answers_weak, mask, cfg)?;
    compose(tape, l_bce, l_pseudo, l_consist, mask)
}

/// Sums already-built terms into a [`LossBreakdown`]; used by the training
/// step to honor ablation switches without changing the summation path.
pub fn compose(
    tape: &Tape,
    l_bce: Tensor,
    l_pseudo: Tensor,
    l_consist: Tensor,
    mask: &LossMask,
) -> Result<LossBreakdown> {
    let partial = tape.add(&l_bce, &l_pseudo)?;
    let l_total = tape.add(&partial, &l_consist)?;
    Ok(LossBreakdown {
        l_bce,
        l_pseudo,
        l_consist,
        l_total,
        known_entries: mask.known_count(),
        unknown_entries: mask.unknown_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_2x3(states: &str) -> LossMask {
        // 'P', 'N', 'U' per entry, row-major
        let labels: Vec<PartialLabelVector> = states
            .as_bytes()
            .chunks(3)
            .map(|row| {
                PartialLabelVector::from_string(std::str::from_utf8(row).unwrap()).unwrap()
            })
            .collect();
        LossMask::from_labels(&labels)
    }

    #[test]
    fn sharpen_matches_hand_values() {
        let t4 = SharpenConfig::default();
        assert!((sharpen_value(0.8, &t4) - 0.85).abs() < 1e-15);
        assert!((sharpen_value(0.5, &t4) - 0.375).abs() < 1e-15);
        let t1 = SharpenConfig::with_t(1.0);
        assert_eq!(sharpen_value(0.8, &t1), 1.0);
        assert_eq!(sharpen_value(0.2, &t1), 0.0);
    }

    #[test]
    fn sharpen_fixed_points_and_identity() {
        for t in [1.0, 2.0, 4.0, 8.0, f64::INFINITY] {
            let cfg = SharpenConfig::with_t(t);
            assert_eq!(sharpen_value(0.0, &cfg), 0.0);
            assert_eq!(sharpen_value(1.0, &cfg), 1.0);
        }
        let inf = SharpenConfig::with_t(f64::INFINITY);
        for i in 0..=100 {
            let a = i as f64 / 100.0;
            assert_eq!(sharpen_value(a, &inf), a);
        }
    }

    #[test]
    fn sharpen_rejects_bad_temperature() {
        assert!(SharpenConfig::with_t(0.0).validate().is_err());
        assert!(SharpenConfig::with_t(-1.0).validate().is_err());
        assert!(SharpenConfig::with_t(f64::NAN).validate().is_err());
    }

    #[test]
    fn sharpen_tensor_is_detached() {
        let tape = Tape::new();
        let a = Tensor::param(&[2], vec![0.8, 0.3]).unwrap();
        let s = sharpen(&a, &SharpenConfig::default()).unwrap();
        assert!(!s.requires_grad());
        assert!((s.to_vec()[0] - 0.85).abs() < 1e-15);
        drop(tape);
    }

    #[test]
    fn bce_hand_values() {
        let tape = Tape::new();
        // one annotated positive entry with answer 0.5: -ln 0.5
        let mask = LossMask::new(1, 2, vec![true, false], vec![1.0, 0.0]).unwrap();
        let a = Tensor::param(&[1, 2], vec![0.5, 0.9]).unwrap();
        let loss = bce_masked(&tape, &a, &mask).unwrap();
        assert!((loss.item() - 0.693_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_is_zero() {
        let tape = Tape::new();
        let mask = LossMask::new(1, 1, vec![true], vec![1.0]).unwrap();
        let a = Tensor::param(&[1, 1], vec![1.0]).unwrap();
        let loss = bce_masked(&tape, &a, &mask).unwrap();
        // log is clamped at 1 - 1e-12, so the loss is ~1e-12, not exactly 0
        assert!(loss.item().abs() < 1e-11);
    }

    #[test]
    fn bce_ignores_unknown_placeholders_bit_for_bit() {
        let tape = Tape::new();
        let mut mask = mask_2x3("PNUUPN");
        let a = Tensor::param(
            &[2, 3],
            vec![0.7, 0.2, 0.9, 0.4, 0.6, 0.1],
        )
        .unwrap();
        let before = bce_masked(&tape, &a, &mask).unwrap().item();
        mask.set_placeholder(0, 2, 0.7321);
        mask.set_placeholder(1, 0, -3.0);
        let after = bce_masked(&tape, &a, &mask).unwrap().item();
        assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn bce_all_unknown_is_zero() {
        let tape = Tape::new();
        let mask = mask_2x3("UUUUUU");
        let a = Tensor::param(&[2, 3], vec![0.5; 6]).unwrap();
        assert_eq!(bce_masked(&tape, &a, &mask).unwrap().item(), 0.0);
    }

    #[test]
    fn pseudo_loss_hand_value() {
        let tape = Tape::new();
        let mask = mask_2x3("UUUUUU");
        let a = Tensor::param(&[2, 3], vec![0.8; 6]).unwrap();
        let loss = pseudo_loss(&tape, &a, &mask, &SharpenConfig::default()).unwrap();
        // sharpen(0.8) = 0.85, (0.8 - 0.85)^2 = 0.0025 at every entry
        assert!((loss.item() - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn pseudo_loss_zero_cases() {
        let tape = Tape::new();
        let all_known = mask_2x3("PNPNPN");
        let a = Tensor::param(&[2, 3], vec![0.8; 6]).unwrap();
        let l = pseudo_loss(&tape, &a, &all_known, &SharpenConfig::default()).unwrap();
        assert_eq!(l.item(), 0.0);

        let all_unknown = mask_2x3("UUUUUU");
        let inf = SharpenConfig::with_t(f64::INFINITY);
        let l = pseudo_loss(&tape, &a, &all_unknown, &inf).unwrap();
        assert_eq!(l.item(), 0.0);

        // answers at the sharpen fixed points
        let hard = Tensor::param(&[2, 3], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let l = pseudo_loss(&tape, &hard, &all_unknown, &SharpenConfig::default()).unwrap();
        assert_eq!(l.item(), 0.0);
    }

    #[test]
    fn consistency_hand_value_and_gradient_direction() {
        let tape = Tape::new();
        let mask = mask_2x3("UUUUUU");
        // sharpen(a_w) = 0.85; (0.7 - 0.85)^2 = 0.0225
        let a_w = Tensor::param(&[2, 3], vec![0.8; 6]).unwrap();
        let a_s = Tensor::param(&[2, 3], vec![0.7; 6]).unwrap();
        let loss = consistency_loss(&tape, &a_s, &a_w, &mask, &SharpenConfig::default()).unwrap();
        assert!((loss.item() - 0.0225).abs() < 1e-15);

        tape.backward(&loss).unwrap();
        // target is detached: no gradient reaches the weak view
        assert!(a_w.grad().unwrap().iter().all(|&g| g == 0.0));
        assert!(a_s.grad().unwrap().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn consistency_zero_residual() {
        let tape = Tape::new();
        let cfg = SharpenConfig::default();
        let mask = mask_2x3("UUUUUU");
        let a_w = Tensor::param(&[2, 3], vec![0.8; 6]).unwrap();
        let target = sharpen_value(0.8, &cfg);
        let a_s = Tensor::new(&[2, 3], vec![target; 6]).unwrap();
        let loss = consistency_loss(&tape, &a_s, &a_w, &mask, &cfg).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn total_loss_respects_empty_masks() {
        let tape = Tape::new();
        let cfg = SharpenConfig::default();

        let all_known = mask_2x3("PNPNPN");
        let a_w = Tensor::param(&[2, 3], vec![0.6; 6]).unwrap();
        let a_s = Tensor::param(&[2, 3], vec![0.4; 6]).unwrap();
        let b = total_loss(&tape, &a_w, &a_s, &all_known, &cfg).unwrap();
        let (bce, pseudo, consist, total) = b.values();
        assert_eq!(pseudo, 0.0);
        assert_eq!(consist, 0.0);
        assert_eq!(total.to_bits(), bce.to_bits());

        let all_unknown = mask_2x3("UUUUUU");
        let b = total_loss(&tape, &a_w, &a_s, &all_unknown, &cfg).unwrap();
        assert_eq!(b.l_bce.item(), 0.0);
        assert_eq!(b.known_entries, 0);
        assert_eq!(b.unknown_entries, 6);
    }

    #[test]
    fn total_loss_matches_hand_computation() {
        // 2-sample, 3-class batch computed entry by entry with scalar
        // arithmetic, then compared to the tensor path at 1e-12.
        let tape = Tape::new();
        let cfg = SharpenConfig::default();
        let mask = mask_2x3("PNUUPN");
        let aw = [0.7, 0.2, 0.9, 0.4, 0.6, 0.1];
        let as_ = [0.65, 0.25, 0.8, 0.5, 0.55, 0.2];
        let a_w = Tensor::param(&[2, 3], aw.to_vec()).unwrap();
        let a_s = Tensor::param(&[2, 3], as_.to_vec()).unwrap();
        let got = total_loss(&tape, &a_w, &a_s, &mask, &cfg).unwrap();

        let y = [1.0, 0.0, f64::NAN, f64::NAN, 1.0, 0.0];
        let known = [true, true, false, false, true, true];
        let mut bce = 0.0;
        let mut pseudo = 0.0;
        let mut consist = 0.0;
        let mut k = 0.0;
        let mut u = 0.0;
        for i in 0..6 {
            if known[i] {
                bce += -(y[i] * aw[i].ln() + (1.0 - y[i]) * (1.0 - aw[i]).ln());
                k += 1.0;
            } else {
                let sharp = sharpen_value(aw[i], &cfg);
                pseudo += (aw[i] - sharp) * (aw[i] - sharp);
                consist += (as_[i] - sharp) * (as_[i] - sharp);
                u += 1.0;
            }
        }
        bce /= k;
        pseudo /= u;
        consist /= u;

        let (g_bce, g_pseudo, g_consist, g_total) = got.values();
        assert!((g_bce - bce).abs() < 1e-12, "{g_bce} vs {bce}");
        assert!((g_pseudo - pseudo).abs() < 1e-12);
        assert!((g_consist - consist).abs() < 1e-12);
        assert!((g_total - (bce + pseudo + consist)).abs() < 1e-12);
    }

    #[test]
    fn loss_gradients_pass_grad_check() {
        use crate::tensor::grad_check;
        let cfg = SharpenConfig::default();
        let point = [0.7, 0.2, 0.9, 0.4, 0.6, 0.1];

        // bce has no detached parts: check the real operation directly
        let mask = mask_2x3("PNUUPN");
        let err = grad_check(
            {
                let mask = mask.clone();
                move |tape, a| bce_masked(tape, a, &mask)
            },
            &point,
            &[2, 3],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "bce relative error {err}");

        // the pseudo target is a stop-gradient, so the finite-difference
        // oracle must hold it fixed at its base-point value; the analytic
        // graph is identical to pseudo_loss's at that point
        let base = Tensor::new(&[2, 3], point.to_vec()).unwrap();
        let frozen = sharpen(&base, &cfg).unwrap();
        let err = grad_check(
            {
                let mask = mask.clone();
                let frozen = frozen.clone();
                move |tape, a| {
                    let diff = tape.sub(a, &frozen)?;
                    let sq = tape.mul(&diff, &diff)?;
                    let unknown: Vec<bool> = mask.known().iter().map(|&k| !k).collect();
                    let sel = tape.masked_select(&sq, &unknown)?;
                    tape.mean(&sel)
                }
            },
            &point,
            &[2, 3],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "pseudo relative error {err}");
        {
            // and the analytic gradients really do coincide
            let tape = Tape::new();
            let a = Tensor::param(&[2, 3], point.to_vec()).unwrap();
            let l = pseudo_loss(&tape, &a, &mask, &cfg).unwrap();
            tape.backward(&l).unwrap();
            let real = a.grad().unwrap();
            let tape2 = Tape::new();
            let a2 = Tensor::param(&[2, 3], point.to_vec()).unwrap();
            let diff = tape2.sub(&a2, &frozen).unwrap();
            let sq = tape2.mul(&diff, &diff).unwrap();
            let unknown: Vec<bool> = mask.known().iter().map(|&k| !k).collect();
            let sel = tape2.masked_select(&sq, &unknown).unwrap();
            let l2 = tape2.mean(&sel).unwrap();
            tape2.backward(&l2).unwrap();
            assert_eq!(real, a2.grad().unwrap());
        }

        // the consistency gradient flows through the strong view only, and
        // perturbing the strong view never touches the target: the real
        // operation checks directly
        let a_w = Tensor::new(&[2, 3], point.to_vec()).unwrap();
        let err = grad_check(
            move |tape, a_s| consistency_loss(tape, a_s, &a_w, &mask, &cfg),
            &[0.65, 0.25, 0.8, 0.5, 0.55, 0.2],
            &[2, 3],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "strong-path relative error {err}");
    }
}
