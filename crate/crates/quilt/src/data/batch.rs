//! Epoch batching: shuffled, dual-view, mask-carrying minibatches.

use super::{augment, AugMode, AugmentationConfig, AssembledDataset};
use crate::loss::LossMask;
use crate::rng::{mix, Rng};
use crate::tensor::Tensor;

/// One minibatch: both augmented views of the same underlying images
/// (flattened to `N x H*W`), plus the annotation mask.
pub struct TrainBatch {
    pub weak: Tensor,
    pub strong: Tensor,
    pub mask: LossMask,
    /// Dataset indices of the samples in this batch, in batch order.
    pub indices: Vec<usize>,
}

/// Iterates each sample exactly once per epoch, shuffled by `epoch_seed`.
/// Augmentation draws come from a stream derived from the same seed, so a
/// `(dataset, batch_size, epoch_seed)` triple always replays identically.
pub fn batches<'a>(
    d: &'a AssembledDataset,
    batch_size: usize,
    epoch_seed: u64,
    cfg: &'a AugmentationConfig,
) -> impl Iterator<Item = TrainBatch> + 'a {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut shuffle_rng = Rng::new(mix(epoch_seed, 0x0bb1));
    shuffle_rng.shuffle(&mut order);
    let aug_rng = Rng::new(mix(epoch_seed, 0xa064));

    BatchIter {
        dataset: d,
        order,
        cursor: 0,
        batch_size,
        cfg,
        rng: aug_rng,
    }
}

struct BatchIter<'a> {
    dataset: &'a AssembledDataset,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    cfg: &'a AugmentationConfig,
    rng: Rng,
}

impl Iterator for BatchIter<'_> {
    type Item = TrainBatch;

    fn next(&mut self) -> Option<TrainBatch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices: Vec<usize> = self.order[self.cursor..end].to_vec();
        self.cursor = end;

        let pixels = self.dataset.samples[indices[0]].image.len();
        let mut weak = Vec::with_capacity(indices.len() * pixels);
        let mut strong = Vec::with_capacity(indices.len() * pixels);
        for &i in &indices {
            let sample = &self.dataset.samples[i];
            let w = augment(&sample.image, AugMode::Weak, self.cfg, &mut self.rng);
            let s = augment(&sample.image, AugMode::Strong, self.cfg, &mut self.rng);
            weak.extend_from_slice(&w.values());
            strong.extend_from_slice(&s.values());
        }
        let mask = LossMask::from_labels(indices.iter().map(|&i| &self.dataset.samples[i].labels));
        Some(TrainBatch {
            weak: Tensor::new(&[indices.len(), pixels], weak).expect("batch shape"),
            strong: Tensor::new(&[indices.len(), pixels], strong).expect("batch shape"),
            mask,
            indices,
        })
    }
}
