//! On-disk form of an assembled dataset.
//!
//! A dataset directory holds `manifest.json` plus one IDX image file per
//! source, named `<source>.images.idx`. The manifest records the union
//! schema, the sources, and per-sample provenance and label states; images
//! are referenced by source and position, never embedded.

use super::{
    write_idx_images, AssembledDataset, LabelSchema, PartialLabelVector, Sample, SourceInfo,
    IMAGE_MAGIC,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub union_schema: Vec<String>,
    pub sources: Vec<ManifestSource>,
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestSource {
    pub name: String,
    pub schema: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestSample {
    pub source: String,
    pub label_states: String,
}

impl Manifest {
    pub fn from_dataset(d: &AssembledDataset) -> Manifest {
        Manifest {
            union_schema: d.union_schema.names().to_vec(),
            sources: d
                .sources
                .iter()
                .map(|s| ManifestSource {
                    name: s.name.clone(),
                    schema: s.schema.names().to_vec(),
                    count: s.count,
                })
                .collect(),
            samples: d
                .samples
                .iter()
                .zip(&d.provenance)
                .map(|(s, &p)| ManifestSample {
                    source: d.sources[p].name.clone(),
                    label_states: s.labels.as_string(),
                })
                .collect(),
        }
    }
}

fn image_file(dir: &Path, source: &str) -> std::path::PathBuf {
    dir.join(format!("{source}.images.idx"))
}

/// Writes `manifest.json` and one image file per source into `dir`.
pub fn write_dataset_dir(dir: &Path, d: &AssembledDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let manifest = Manifest::from_dataset(d);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), json)
        .map_err(|e| Error::io(format!("writing manifest in {}", dir.display()), e))?;

    for (idx, info) in d.sources.iter().enumerate() {
        let samples: Vec<Sample> = d
            .samples
            .iter()
            .zip(&d.provenance)
            .filter(|(_, &p)| p == idx)
            .map(|(s, _)| s.clone())
            .collect();
        write_idx_images(&image_file(dir, &info.name), &samples)?;
    }
    Ok(())
}

/// Reads a dataset directory written by [`write_dataset_dir`].
pub fn load_dataset_dir(dir: &Path) -> Result<AssembledDataset> {
    let manifest_path = dir.join("manifest.json");
    let json = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: Manifest = serde_json::from_str(&json).map_err(|e| Error::Json {
        context: manifest_path.display().to_string(),
        source: e,
    })?;

    let union = LabelSchema::new(manifest.union_schema.clone())?;
    let mut sources = Vec::new();
    let mut images: Vec<Vec<(Vec<usize>, Vec<f64>)>> = Vec::new();
    for src in &manifest.sources {
        sources.push(SourceInfo {
            name: src.name.clone(),
            schema: LabelSchema::new(src.schema.clone())?,
            count: src.count,
        });
        images.push(read_image_idx(&image_file(dir, &src.name))?);
        if images.last().unwrap().len() != src.count {
            return Err(Error::contract(format!(
                "source '{}': manifest promises {} images, file holds {}",
                src.name,
                src.count,
                images.last().unwrap().len()
            )));
        }
    }

    let mut cursors = vec![0usize; sources.len()];
    let mut samples = Vec::with_capacity(manifest.samples.len());
    let mut provenance = Vec::with_capacity(manifest.samples.len());
    for (i, ms) in manifest.samples.iter().enumerate() {
        let Some(src_idx) = sources.iter().position(|s| s.name == ms.source) else {
            return Err(Error::contract(format!(
                "sample {i} references unknown source '{}'",
                ms.source
            )));
        };
        let labels = PartialLabelVector::from_string(&ms.label_states)?;
        if labels.len() != union.len() {
            return Err(Error::contract(format!(
                "sample {i}: {} label states for a {}-class union schema",
                labels.len(),
                union.len()
            )));
        }
        let pos = cursors[src_idx];
        cursors[src_idx] += 1;
        let Some((shape, pixels)) = images[src_idx].get(pos) else {
            return Err(Error::contract(format!(
                "source '{}' exhausted at sample {i}",
                ms.source
            )));
        };
        samples.push(Sample {
            image: Tensor::new(shape, pixels.clone())?,
            labels,
        });
        provenance.push(src_idx);
    }

    Ok(AssembledDataset {
        union_schema: union,
        samples,
        provenance,
        sources,
    })
}

fn read_image_idx(path: &Path) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let magic = u32::from_be_bytes(bytes[0..4].try_into().map_err(|_| {
        Error::contract(format!("{}: truncated header", path.display()))
    })?);
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected: IMAGE_MAGIC,
            actual: magic,
        });
    }
    let count = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let rows = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_be_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::contract(format!(
            "{}: file holds {} bytes, header promises {need}",
            path.display(),
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        let pixels = bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        out.push((vec![rows, cols], pixels));
    }
    Ok(out)
}
