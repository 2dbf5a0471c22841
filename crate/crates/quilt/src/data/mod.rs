//! Label schemas, tri-state partial labels, and multi-dataset assembly.
//!
//! A sample's annotation is a [`PartialLabelVector`]: one [`LabelState`] per
//! class in the dataset's [`LabelSchema`]. Annotation only ever produces
//! `Positive` or `Negative`; `Unknown` appears when datasets with different
//! schemas are assembled under their union, or when labels are deliberately
//! removed to build an experiment variant.

mod augment;
mod batch;
mod idx;
mod manifest;
mod synth;
mod variant;

pub use augment::{augment, AugMode, AugmentationConfig};
pub use batch::{batches, TrainBatch};
pub use idx::{load_idx, write_idx_images, write_idx_labels, IMAGE_MAGIC, LABEL_MAGIC};
pub use manifest::{load_dataset_dir, write_dataset_dir, Manifest};
pub use synth::synthesize_digits;
pub use variant::{
    collapse_zero, derive_variant, multi_test_view, multi_train_view, novel_withhold, Variant,
    VariantParams,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::BTreeSet;
use std::fmt;

/// Tri-state annotation for one class on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelState {
    Positive,
    Negative,
    /// The source dataset never annotated this class for this sample.
    Unknown,
}

impl LabelState {
    pub fn is_known(self) -> bool {
        !matches!(self, LabelState::Unknown)
    }

    pub fn as_char(self) -> char {
        match self {
            LabelState::Positive => 'P',
            LabelState::Negative => 'N',
            LabelState::Unknown => 'U',
        }
    }

    pub fn from_char(c: char) -> Result<LabelState> {
        match c {
            'P' => Ok(LabelState::Positive),
            'N' => Ok(LabelState::Negative),
            'U' => Ok(LabelState::Unknown),
            other => Err(Error::contract(format!("unknown label state '{other}'"))),
        }
    }
}

/// Ordered list of distinct class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    names: Vec<String>,
}

impl LabelSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<LabelSchema> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::contract("schema must have at least one class"));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::contract(format!(
                "schema has duplicate class names: {names:?}"
            )));
        }
        Ok(LabelSchema { names })
    }

    /// The ten digit classes "0" through "9".
    pub fn digits() -> LabelSchema {
        LabelSchema::new((0..10).map(|d| d.to_string())).expect("digit names are distinct")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    /// Lexicographically sorted union of several schemas.
    pub fn union(schemas: &[&LabelSchema]) -> Result<LabelSchema> {
        let set: BTreeSet<String> = schemas
            .iter()
            .flat_map(|s| s.names.iter().cloned())
            .collect();
        LabelSchema::new(set)
    }
}

impl fmt::Display for LabelSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.names.join(", "))
    }
}

/// One [`LabelState`] per class of a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialLabelVector {
    states: Vec<LabelState>,
}

impl PartialLabelVector {
    pub fn new(states: Vec<LabelState>) -> PartialLabelVector {
        PartialLabelVector { states }
    }

    /// Fully annotated one-hot vector: `Positive` at `class`, `Negative`
    /// elsewhere.
    pub fn one_hot(n: usize, class: usize) -> PartialLabelVector {
        let mut states = vec![LabelState::Negative; n];
        states[class] = LabelState::Positive;
        PartialLabelVector { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, class: usize) -> LabelState {
        self.states[class]
    }

    pub fn states(&self) -> &[LabelState] {
        &self.states
    }

    pub fn set(&mut self, class: usize, state: LabelState) {
        self.states[class] = state;
    }

    pub fn unknown_count(&self) -> usize {
        self.states
            .iter()
            .filter(|s| matches!(s, LabelState::Unknown))
            .count()
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter_map(|(i, s)| matches!(s, LabelState::Positive).then_some(i))
    }

    pub fn as_string(&self) -> String {
        self.states.iter().map(|s| s.as_char()).collect()
    }

    pub fn from_string(s: &str) -> Result<PartialLabelVector> {
        let states = s.chars().map(LabelState::from_char).collect::<Result<_>>()?;
        Ok(PartialLabelVector { states })
    }
}

/// An image with its label vector.
#[derive(Debug, Clone)]
pub struct Sample {
    /// H x W pixels in `[0, 1]`.
    pub image: Tensor,
    pub labels: PartialLabelVector,
}

/// A dataset as annotated by a single source: every sample's label vector
/// matches the source's schema.
#[derive(Debug, Clone)]
pub struct SourceDataset {
    pub name: String,
    pub schema: LabelSchema,
    pub samples: Vec<Sample>,
}

impl SourceDataset {
    pub fn new(
        name: impl Into<String>,
        schema: LabelSchema,
        samples: Vec<Sample>,
    ) -> Result<SourceDataset> {
        let n = schema.len();
        if let Some(bad) = samples.iter().position(|s| s.labels.len() != n) {
            return Err(Error::contract(format!(
                "sample {bad} has {} label states, schema has {n} classes",
                samples[bad].labels.len()
            )));
        }
        Ok(SourceDataset {
            name: name.into(),
            schema,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Restricts a dataset to a subset of its classes.
///
/// Every sample and its image are kept; an image whose depicted class falls
/// outside `keep_classes` simply keeps `Negative` states for every retained
/// class. The new schema is `keep_classes` in canonical (lexicographic)
/// order.
pub fn make_partial(d: &SourceDataset, keep_classes: &BTreeSet<String>) -> Result<SourceDataset> {
    if keep_classes.is_empty() {
        return Err(Error::contract("make_partial: keep_classes is empty"));
    }
    for name in keep_classes {
        if !d.schema.contains(name) {
            return Err(Error::contract(format!(
                "make_partial: class '{name}' not in schema {}",
                d.schema
            )));
        }
    }
    let schema = LabelSchema::new(keep_classes.iter().cloned())?;
    let keep_indices: Vec<usize> = schema
        .names()
        .iter()
        .map(|n| d.schema.index_of(n).expect("checked above"))
        .collect();
    let samples = d
        .samples
        .iter()
        .map(|s| Sample {
            image: s.image.clone(),
            labels: PartialLabelVector::new(
                keep_indices.iter().map(|&i| s.labels.state(i)).collect(),
            ),
        })
        .collect();
    SourceDataset::new(d.name.clone(), schema, samples)
}

/// Several datasets merged under the union of their schemas.
#[derive(Debug, Clone)]
pub struct AssembledDataset {
    pub union_schema: LabelSchema,
    pub samples: Vec<Sample>,
    /// Index into `sources` for each sample.
    pub provenance: Vec<usize>,
    pub sources: Vec<SourceInfo>,
}

/// Per-source metadata kept by an assembly.
#[derive(Debug, Clone)]
pub struct SourceInfo {
    pub name: String,
    pub schema: LabelSchema,
    pub count: usize,
}

impl AssembledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn source_name(&self, sample: usize) -> &str {
        &self.sources[self.provenance[sample]].name
    }

    /// Total number of `Unknown` states across all samples.
    pub fn unknown_count(&self) -> usize {
        self.samples
            .iter()
            .map(|s| {
                s.labels
                    .states()
                    .iter()
                    .filter(|st| matches!(st, LabelState::Unknown))
                    .count()
            })
            .sum()
    }
}

/// Merges datasets under their union schema.
///
/// Samples keep their original states on the classes their source annotated
/// and receive `Unknown` on every other class. Sample order is the
/// concatenation of the sources in argument order.
pub fn assemble(sources: &[SourceDataset]) -> Result<AssembledDataset> {
    if sources.is_empty() {
        return Err(Error::contract("assemble: no sources given"));
    }
    let mut names = BTreeSet::new();
    for s in sources {
        if !names.insert(&s.name) {
            return Err(Error::contract(format!(
                "assemble: duplicate dataset name '{}'",
                s.name
            )));
        }
    }
    let schemas: Vec<&LabelSchema> = sources.iter().map(|s| &s.schema).collect();
    let union = LabelSchema::union(&schemas)?;

    let mut samples = Vec::new();
    let mut provenance = Vec::new();
    for (src_idx, src) in sources.iter().enumerate() {
        // union index of each class of this source's schema
        let remap: Vec<usize> = src
            .schema
            .names()
            .iter()
            .map(|n| union.index_of(n).expect("union contains source classes"))
            .collect();
        for sample in &src.samples {
            let mut states = vec![LabelState::Unknown; union.len()];
            for (local, &u) in remap.iter().enumerate() {
                states[u] = sample.labels.state(local);
            }
            samples.push(Sample {
                image: sample.image.clone(),
                labels: PartialLabelVector::new(states),
            });
            provenance.push(src_idx);
        }
    }
    Ok(AssembledDataset {
        union_schema: union,
        samples,
        provenance,
        sources: sources
            .iter()
            .map(|s| SourceInfo {
                name: s.name.clone(),
                schema: s.schema.clone(),
                count: s.samples.len(),
            })
            .collect(),
    })
}


#[cfg(test)]
mod tests {
    use super::test_util::toy_dataset;
    use super::*;

    #[test]
    fn schema_rejects_duplicates() {
        assert!(LabelSchema::new(["a", "b", "a"]).is_err());
        assert!(LabelSchema::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn union_is_lexicographic() {
        let a = LabelSchema::new(["3", "1"]).unwrap();
        let b = LabelSchema::new(["2", "1"]).unwrap();
        let u = LabelSchema::union(&[&a, &b]).unwrap();
        assert_eq!(u.names(), &["1", "2", "3"]);
    }

    #[test]
    fn make_partial_keeps_off_schema_images_as_negatives() {
        let d = toy_dataset("mnist", &["0", "1", "2", "3"], 1);
        let keep: BTreeSet<String> = ["1".into(), "3".into()].into();
        let p = make_partial(&d, &keep).unwrap();
        assert_eq!(p.schema.names(), &["1", "3"]);
        assert_eq!(p.len(), d.len());
        // the image of "0" is all-Negative in the restricted schema
        let zero_img = &p.samples[0];
        assert!(zero_img
            .labels
            .states()
            .iter()
            .all(|s| *s == LabelState::Negative));
        // the image of "3" is Positive at "3"
        let three = &p.samples[3];
        assert_eq!(three.labels.state(1), LabelState::Positive);
        assert_eq!(three.labels.state(0), LabelState::Negative);
    }

    #[test]
    fn make_partial_full_keep_is_identity_up_to_order() {
        let d = toy_dataset("d", &["b", "a"], 2);
        let keep: BTreeSet<String> = ["b".into(), "a".into()].into();
        let p = make_partial(&d, &keep).unwrap();
        assert_eq!(p.schema.names(), &["a", "b"]);
        for (orig, new) in d.samples.iter().zip(&p.samples) {
            assert_eq!(orig.labels.state(0), new.labels.state(1)); // "b"
            assert_eq!(orig.labels.state(1), new.labels.state(0)); // "a"
        }
    }

    #[test]
    fn make_partial_rejects_bad_subset() {
        let d = toy_dataset("d", &["a", "b"], 1);
        assert!(make_partial(&d, &BTreeSet::new()).is_err());
        let bad: BTreeSet<String> = ["z".into()].into();
        assert!(make_partial(&d, &bad).is_err());
    }

    #[test]
    fn assemble_disjoint_schemas() {
        let d0 = toy_dataset("odd", &["1", "3"], 2);
        let d1 = toy_dataset("even", &["0", "2"], 3);
        let a = assemble(&[d0, d1]).unwrap();
        assert_eq!(a.union_schema.names(), &["0", "1", "2", "3"]);
        assert_eq!(a.len(), 4 + 6);
        // odd samples are Unknown on even classes
        for i in 0..4 {
            assert_eq!(a.samples[i].labels.state(0), LabelState::Unknown);
            assert_eq!(a.samples[i].labels.state(2), LabelState::Unknown);
            assert!(a.samples[i].labels.state(1).is_known());
        }
        assert_eq!(a.source_name(0), "odd");
        assert_eq!(a.source_name(4), "even");
        // unknown count: 4 samples x 2 missing + 6 samples x 2 missing
        assert_eq!(a.unknown_count(), 4 * 2 + 6 * 2);
    }

    #[test]
    fn assemble_single_source_is_identity() {
        let d = toy_dataset("d", &["a", "b", "c"], 2);
        let a = assemble(std::slice::from_ref(&d)).unwrap();
        assert_eq!(a.union_schema, d.schema);
        assert_eq!(a.unknown_count(), 0);
        for (orig, new) in d.samples.iter().zip(&a.samples) {
            assert_eq!(orig.labels, new.labels);
        }
    }

    #[test]
    fn assemble_rejects_duplicate_names() {
        let d0 = toy_dataset("same", &["a"], 1);
        let d1 = toy_dataset("same", &["b"], 1);
        assert!(assemble(&[d0, d1]).is_err());
        assert!(assemble(&[]).is_err());
    }

    #[test]
    fn assemble_overlapping_schemas() {
        let d0 = toy_dataset("d0", &["1", "2", "3"], 1);
        let d1 = toy_dataset("d1", &["3", "4", "5"], 1);
        let a = assemble(&[d0, d1]).unwrap();
        assert_eq!(a.union_schema.names(), &["1", "2", "3", "4", "5"]);
        // class "3" is known for all samples; "1" unknown for all d1 samples
        let i3 = a.union_schema.index_of("3").unwrap();
        let i1 = a.union_schema.index_of("1").unwrap();
        for s in &a.samples {
            assert!(s.labels.state(i3).is_known());
        }
        for s in &a.samples[3..] {
            assert_eq!(s.labels.state(i1), LabelState::Unknown);
        }
    }

    #[test]
    fn restriction_round_trips_through_assembly() {
        let d = toy_dataset("d", &["b", "a", "c"], 2);
        let a = assemble(std::slice::from_ref(&d)).unwrap();
        for (orig, asm) in d.samples.iter().zip(&a.samples) {
            for (local, name) in d.schema.names().iter().enumerate() {
                let u = a.union_schema.index_of(name).unwrap();
                assert_eq!(orig.labels.state(local), asm.labels.state(u));
            }
        }
    }
}
