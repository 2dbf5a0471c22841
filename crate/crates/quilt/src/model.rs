//! The shared feature extractor, the learnable task encoding, and the
//! dynamic adapter.
//!
//! Every class is a question ("is class c in the image?"). The adapter
//! turns class c's encoding vector into a classifier vector `w_c = A q_c + b`
//! and answers with `sigmoid(w_c . f(x))`. Because the encoding is a
//! trainable parameter initialized at the identity, classes start mutually
//! orthogonal and drift into soft vectors expressing inter-class structure
//! as training progresses.

use crate::data::LabelSchema;
use crate::error::{Error, Result};
use crate::rng::{mix, Rng};
use crate::tensor::{Tape, Tensor};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

/// Layer sizes of the dense extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input: usize,
    pub hidden: usize,
    pub features: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: 28 * 28,
            hidden: 256,
            features: 64,
        }
    }
}

/// Two dense ReLU layers mapping flattened pixels to feature vectors.
#[derive(Debug)]
pub struct FeatureExtractor {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    cfg: ModelConfig,
}

fn uniform_init(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..rows * cols)
        .map(|_| (rng.uniform() * 2.0 - 1.0) * bound)
        .collect()
}

impl FeatureExtractor {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<FeatureExtractor> {
        let mut rng = Rng::new(mix(seed, 0xfe47));
        let w1 = Tensor::param(
            &[cfg.input, cfg.hidden],
            uniform_init(&mut rng, cfg.input, cfg.hidden, cfg.input),
        )?;
        let b1 = Tensor::param(&[1, cfg.hidden], vec![0.0; cfg.hidden])?;
        let w2 = Tensor::param(
            &[cfg.hidden, cfg.features],
            uniform_init(&mut rng, cfg.hidden, cfg.features, cfg.hidden),
        )?;
        let b2 = Tensor::param(&[1, cfg.features], vec![0.0; cfg.features])?;
        Ok(FeatureExtractor { w1, b1, w2, b2, cfg })
    }

    pub fn config(&self) -> ModelConfig {
        self.cfg
    }

    /// `batch` is `N x input` in `[0, 1]`; the result is `N x features`,
    /// non-negative because of the final ReLU.
    pub fn forward(&self, tape: &Tape, batch: &Tensor) -> Result<Tensor> {
        let shape = batch.shape();
        if shape.len() != 2 || shape[1] != self.cfg.input {
            return Err(Error::contract(format!(
                "extractor expects N x {} input, got {shape:?}",
                self.cfg.input
            )));
        }
        let ones = Tensor::filled(&[shape[0], 1], 1.0)?;
        let h1 = tape.matmul(batch, &self.w1)?;
        let h1 = tape.add(&h1, &tape.matmul(&ones, &self.b1)?)?;
        let h1 = tape.relu(&h1)?;
        let h2 = tape.matmul(&h1, &self.w2)?;
        let h2 = tape.add(&h2, &tape.matmul(&ones, &self.b2)?)?;
        tape.relu(&h2)
    }
}

/// The `n x n` learnable task encoding.
///
/// Internally the matrix is stored with class c's encoding in column c, so
/// the all-classes forward pass is a single right-multiplication; the
/// public accessors and the checkpoint format speak row-per-class.
#[derive(Debug)]
pub struct TaskEncoding {
    matrix: Tensor,
    n: usize,
}

impl TaskEncoding {
    /// Identity initialization: every class starts as a one-hot question.
    pub fn identity(n: usize) -> Result<TaskEncoding> {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Ok(TaskEncoding {
            matrix: Tensor::param(&[n, n], values)?,
            n,
        })
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn parameter(&self) -> &Tensor {
        &self.matrix
    }

    /// The encoding vector of one class.
    pub fn class_encoding(&self, class: usize) -> Vec<f64> {
        let v = self.matrix.values();
        (0..self.n).map(|k| v[k * self.n + class]).collect()
    }

    /// Row-per-class copy of the encoding (row c = encoding of class c).
    pub fn rows(&self) -> Vec<f64> {
        let v = self.matrix.values();
        let mut out = vec![0.0; self.n * self.n];
        for c in 0..self.n {
            for k in 0..self.n {
                out[c * self.n + k] = v[k * self.n + c];
            }
        }
        out
    }

    /// Loads a row-per-class buffer (the checkpoint layout).
    pub fn set_rows(&self, rows: &[f64]) {
        assert_eq!(rows.len(), self.n * self.n);
        let mut v = vec![0.0; self.n * self.n];
        for c in 0..self.n {
            for k in 0..self.n {
                v[k * self.n + c] = rows[c * self.n + k];
            }
        }
        self.matrix.set_values(&v);
    }
}

/// The affine map from encoding vectors to classifier vectors:
/// `w_c = A q_c + b` with one bias shared across classes.
#[derive(Debug)]
pub struct AdapterWeights {
    /// `features x classes`.
    pub map: Tensor,
    /// `features x 1`.
    pub bias: Tensor,
}

impl AdapterWeights {
    pub fn new(features: usize, classes: usize, seed: u64) -> Result<AdapterWeights> {
        let mut rng = Rng::new(mix(seed, 0xada7));
        Ok(AdapterWeights {
            map: Tensor::param(
                &[features, classes],
                uniform_init(&mut rng, features, classes, classes),
            )?,
            bias: Tensor::param(&[features, 1], vec![0.0; features])?,
        })
    }
}

/// Per-class probability answers for a feature batch.
///
/// `answers[i][c] = sigmoid((A q_c + b) . features[i])`, computed for all
/// classes at once: `sigmoid(E A Q + (E b) 1^T)` with Q holding encodings
/// column-per-class.
pub fn adapter_answer(
    tape: &Tape,
    encoding: &TaskEncoding,
    features: &Tensor,
    adapter: &AdapterWeights,
) -> Result<Tensor> {
    let n = encoding.classes();
    let logits = tape.matmul(&tape.matmul(features, &adapter.map)?, encoding.parameter())?;
    let bias_col = tape.matmul(features, &adapter.bias)?;
    let ones_row = Tensor::filled(&[1, n], 1.0)?;
    let bias_full = tape.matmul(&bias_col, &ones_row)?;
    tape.sigmoid(&tape.add(&logits, &bias_full)?)
}

/// Everything trainable plus the schema it answers for.
#[derive(Debug)]
pub struct ModelState {
    pub extractor: FeatureExtractor,
    pub encoding: TaskEncoding,
    pub adapter: AdapterWeights,
    pub schema: LabelSchema,
}

impl ModelState {
    pub fn new(schema: LabelSchema, cfg: ModelConfig, seed: u64) -> Result<ModelState> {
        let n = schema.len();
        Ok(ModelState {
            extractor: FeatureExtractor::new(cfg, seed)?,
            encoding: TaskEncoding::identity(n)?,
            adapter: AdapterWeights::new(cfg.features, n, seed)?,
            schema,
        })
    }

    pub fn classes(&self) -> usize {
        self.schema.len()
    }

    pub fn extract_features(&self, tape: &Tape, batch: &Tensor) -> Result<Tensor> {
        self.extractor.forward(tape, batch)
    }

    /// Full forward pass: flattened batch to `N x n` probabilities.
    pub fn answers(&self, tape: &Tape, batch: &Tensor) -> Result<Tensor> {
        if self.encoding.classes() != self.schema.len() {
            return Err(Error::contract(format!(
                "encoding holds {} classes, schema holds {}",
                self.encoding.classes(),
                self.schema.len()
            )));
        }
        let features = self.extract_features(tape, batch)?;
        adapter_answer(tape, &self.encoding, &features, &self.adapter)
    }

    /// The single-question view: probabilities for one class, equal to the
    /// corresponding column of [`ModelState::answers`] exactly.
    pub fn query_class(&self, batch: &Tensor, class_index: usize) -> Result<Vec<f64>> {
        let n = self.schema.len();
        if class_index >= n {
            return Err(Error::contract(format!(
                "class index {class_index} out of range for {n} classes"
            )));
        }
        let tape = Tape::no_grad();
        let all = self.answers(&tape, batch)?;
        let v = all.values();
        let rows = all.shape()[0];
        Ok((0..rows).map(|i| v[i * n + class_index]).collect())
    }

    /// Trainable tensors in checkpoint order:
    /// extractor w1, b1, w2, b2, adapter map, adapter bias, encoding.
    pub fn parameters(&self) -> Vec<Tensor> {
        vec![
            self.extractor.w1.clone(),
            self.extractor.b1.clone(),
            self.extractor.w2.clone(),
            self.extractor.b2.clone(),
            self.adapter.map.clone(),
            self.adapter.bias.clone(),
            self.encoding.parameter().clone(),
        ]
    }

    pub fn zero_grads(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Deep copy of all parameter values.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.parameters().iter().map(Tensor::to_vec).collect()
    }

    pub fn restore(&self, snapshot: &[Vec<f64>]) {
        for (p, s) in self.parameters().iter().zip(snapshot) {
            p.set_values(s);
        }
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        save_checkpoint(self, path, seed)
    }

    pub fn load(path: &Path) -> Result<(ModelState, u64)> {
        load_checkpoint(path)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    schema: Vec<String>,
    dims: CheckpointDims,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDims {
    input: usize,
    hidden: usize,
    features: usize,
    classes: usize,
}

/// Checkpoint layout: one line of compact JSON
/// `{schema, dims, seed}` terminated by `\n`, followed by a flat
/// little-endian `f64` blob holding, in order: extractor w1, b1, w2, b2;
/// adapter map; adapter bias; task encoding (row c = encoding of class c).
pub fn save_checkpoint(state: &ModelState, path: &Path, seed: u64) -> Result<()> {
    let cfg = state.extractor.config();
    let header = CheckpointHeader {
        schema: state.schema.names().to_vec(),
        dims: CheckpointDims {
            input: cfg.input,
            hidden: cfg.hidden,
            features: cfg.features,
            classes: state.schema.len(),
        },
        seed,
    };
    let mut blob: Vec<f64> = Vec::new();
    blob.extend_from_slice(&state.extractor.w1.to_vec());
    blob.extend_from_slice(&state.extractor.b1.to_vec());
    blob.extend_from_slice(&state.extractor.w2.to_vec());
    blob.extend_from_slice(&state.extractor.b2.to_vec());
    blob.extend_from_slice(&state.adapter.map.to_vec());
    blob.extend_from_slice(&state.adapter.bias.to_vec());
    blob.extend_from_slice(&state.encoding.rows());

    let mut file = fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut line = serde_json::to_string(&header).expect("header serializes");
    line.push('\n');
    file.write_all(line.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let mut bytes = Vec::with_capacity(blob.len() * 8);
    for v in blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelState, u64)> {
    let mut file =
        fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::contract(format!("{}: missing header line", path.display())))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        })?;

    let d = &header.dims;
    let expected = d.input * d.hidden
        + d.hidden
        + d.hidden * d.features
        + d.features
        + d.features * d.classes
        + d.features
        + d.classes * d.classes;
    let blob_bytes = &bytes[newline + 1..];
    if blob_bytes.len() != expected * 8 {
        return Err(Error::contract(format!(
            "{}: blob holds {} bytes, dims require {}",
            path.display(),
            blob_bytes.len(),
            expected * 8
        )));
    }
    let mut values = Vec::with_capacity(expected);
    for chunk in blob_bytes.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }

    let schema = LabelSchema::new(header.schema.clone())?;
    if schema.len() != d.classes {
        return Err(Error::contract(format!(
            "{}: schema lists {} classes, dims say {}",
            path.display(),
            schema.len(),
            d.classes
        )));
    }
    let state = ModelState::new(
        schema,
        ModelConfig {
            input: d.input,
            hidden: d.hidden,
            features: d.features,
        },
        header.seed,
    )?;
    let mut cursor = 0;
    let mut take = |len: usize| {
        let slice = values[cursor..cursor + len].to_vec();
        cursor += len;
        slice
    };
    state.extractor.w1.set_values(&take(d.input * d.hidden));
    state.extractor.b1.set_values(&take(d.hidden));
    state.extractor.w2.set_values(&take(d.hidden * d.features));
    state.extractor.b2.set_values(&take(d.features));
    state.adapter.map.set_values(&take(d.features * d.classes));
    state.adapter.bias.set_values(&take(d.features));
    state.encoding.set_rows(&take(d.classes * d.classes));
    Ok((state, header.seed))
}
