//! Weak and strong stochastic views of an image.
//!
//! The weak view is a small integer translation. The strong view adds a
//! larger translation, gaussian pixel noise, and one erased square patch.
//! Both are deterministic functions of the supplied random state, so a
//! training epoch replays exactly from its seed.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AugmentationConfig {
    pub weak_max_shift: i64,
    pub strong_max_shift: i64,
    pub noise_sigma: f64,
    pub erase_size: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            weak_max_shift: 2,
            strong_max_shift: 4,
            noise_sigma: 0.1,
            erase_size: 8,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strong_max_shift < self.weak_max_shift {
            return Err(Error::contract(format!(
                "strong_max_shift {} < weak_max_shift {}",
                self.strong_max_shift, self.weak_max_shift
            )));
        }
        if self.weak_max_shift < 0 || self.noise_sigma < 0.0 {
            return Err(Error::contract(
                "augmentation magnitudes must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugMode {
    Weak,
    Strong,
}

fn translate(pixels: &[f64], h: usize, w: usize, dy: i64, dx: i64) -> Vec<f64> {
    if dy == 0 && dx == 0 {
        return pixels.to_vec();
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h as i64 {
        let src_r = r - dy;
        if !(0..h as i64).contains(&src_r) {
            continue;
        }
        for c in 0..w as i64 {
            let src_c = c - dx;
            if (0..w as i64).contains(&src_c) {
                out[r as usize * w + c as usize] = pixels[src_r as usize * w + src_c as usize];
            }
        }
    }
    out
}

/// Produces one augmented view of `x`, consuming draws from `rng`.
pub fn augment(x: &Tensor, mode: AugMode, cfg: &AugmentationConfig, rng: &mut Rng) -> Tensor {
    let shape = x.shape();
    let (h, w) = (shape[0], shape[1]);
    let max_shift = match mode {
        AugMode::Weak => cfg.weak_max_shift,
        AugMode::Strong => cfg.strong_max_shift,
    };
    let (dy, dx) = if max_shift > 0 {
        (
            rng.range_i64(-max_shift, max_shift),
            rng.range_i64(-max_shift, max_shift),
        )
    } else {
        (0, 0)
    };
    let mut pixels = translate(&x.values(), h, w, dy, dx);

    if mode == AugMode::Strong {
        if cfg.noise_sigma > 0.0 {
            for px in pixels.iter_mut() {
                *px = (*px + cfg.noise_sigma * rng.normal()).clamp(0.0, 1.0);
            }
        }
        let e = cfg.erase_size.min(h).min(w);
        if e > 0 {
            let top = rng.range_usize(h - e + 1);
            let left = rng.range_usize(w - e + 1);
            for r in top..top + e {
                for c in left..left + e {
                    pixels[r * w + c] = 0.0;
                }
            }
        }
    }

    Tensor::new(&[h, w], pixels).expect("augmented image keeps its shape")
}
