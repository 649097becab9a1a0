//! Dataset loading and mini-batch scheduling.
//!
//! The IDX loaders are bit-exact for the MNIST-family containers: big-endian
//! magic `0x00000803` (images) / `0x00000801` (labels), big-endian u32 sizes,
//! then raw bytes. Pixels scale by 1/255 into `[0, 1]`.

use crate::error::{CoreError, CoreResult};
use crate::linalg::standard_normal;
use crate::models::LabeledDataset;
use crate::oracle::MiniBatch;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Pixel matrix decoded from an IDX image file, scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `count * rows * cols` entries.
    pub pixels: Vec<f64>,
}

struct BeReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> BeReader<'a> {
    fn new(bytes: &'a [u8], origin: &'a str) -> Self {
        Self {
            bytes,
            pos: 0,
            origin,
        }
    }

    fn read_u32(&mut self) -> CoreResult<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(CoreError::IdxTruncated {
                origin: self.origin.to_string(),
                detail: "header shorter than declared".into(),
            });
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn remaining(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

/// Decode an IDX image payload. `origin` names the source in errors.
pub fn parse_idx_images(bytes: &[u8], origin: &str) -> CoreResult<IdxImages> {
    let mut r = BeReader::new(bytes, origin);
    let magic = r.read_u32()?;
    if magic != IMAGE_MAGIC {
        return Err(CoreError::IdxFormat {
            origin: origin.to_string(),
            detail: format!("magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"),
        });
    }
    let count = r.read_u32()? as usize;
    let rows = r.read_u32()? as usize;
    let cols = r.read_u32()? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| CoreError::IdxFormat {
            origin: origin.to_string(),
            detail: "declared size overflows".into(),
        })?;
    let payload = r.remaining();
    if payload.len() != expected {
        return Err(CoreError::IdxTruncated {
            origin: origin.to_string(),
            detail: format!("payload {} bytes, declared {}", payload.len(), expected),
        });
    }
    let pixels = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Decode an IDX label payload; labels must lie in `[0, class_count)`.
pub fn parse_idx_labels(bytes: &[u8], class_count: usize, origin: &str) -> CoreResult<Vec<usize>> {
    let mut r = BeReader::new(bytes, origin);
    let magic = r.read_u32()?;
    if magic != LABEL_MAGIC {
        return Err(CoreError::IdxFormat {
            origin: origin.to_string(),
            detail: format!("magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"),
        });
    }
    let count = r.read_u32()? as usize;
    let payload = r.remaining();
    if payload.len() != count {
        return Err(CoreError::IdxTruncated {
            origin: origin.to_string(),
            detail: format!("payload {} bytes, declared {}", payload.len(), count),
        });
    }
    let mut labels = Vec::with_capacity(count);
    for &b in payload {
        let label = b as usize;
        if label >= class_count {
            return Err(CoreError::IdxFormat {
                origin: origin.to_string(),
                detail: format!("label {label} outside [0..{}]", class_count - 1),
            });
        }
        labels.push(label);
    }
    Ok(labels)
}

pub fn load_idx_images<P: AsRef<Path>>(path: P) -> CoreResult<IdxImages> {
    let bytes = std::fs::read(&path)?;
    parse_idx_images(&bytes, &path.as_ref().display().to_string())
}

pub fn load_idx_labels<P: AsRef<Path>>(path: P, class_count: usize) -> CoreResult<Vec<usize>> {
    let bytes = std::fs::read(&path)?;
    parse_idx_labels(&bytes, class_count, &path.as_ref().display().to_string())
}

/// Encode raw image bytes into the IDX container.
pub fn encode_idx_images(
    count: usize,
    rows: usize,
    cols: usize,
    bytes: &[u8],
) -> CoreResult<Vec<u8>> {
    if bytes.len() != count * rows * cols {
        return Err(CoreError::InvalidData(format!(
            "expected {} bytes, got {}",
            count * rows * cols,
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + bytes.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(bytes);
    Ok(out)
}

/// Encode raw labels into the IDX container.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Epoch-based mini-batch scheduler: every epoch is a fresh shuffled
/// partition of `{1..N}`, so each sample is visited exactly once per epoch.
/// The final batch of an epoch may be shorter than the batch size.
#[derive(Debug, Clone)]
pub struct EpochSchedule {
    permutation: Vec<usize>,
    batch_size: usize,
    cursor: usize,
    epoch: u64,
}

impl EpochSchedule {
    pub fn new(sample_count: usize, batch_size: usize) -> CoreResult<Self> {
        if sample_count == 0 {
            return Err(CoreError::InvalidConfig("sample count must be >= 1".into()));
        }
        if batch_size == 0 || batch_size > sample_count {
            return Err(CoreError::InvalidConfig(format!(
                "batch size must lie in [1..{sample_count}], got {batch_size}"
            )));
        }
        Ok(Self {
            permutation: (1..=sample_count).collect(),
            batch_size,
            // Start exhausted so the first batch triggers the first shuffle.
            cursor: sample_count,
            epoch: 0,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.permutation.len().div_ceil(self.batch_size)
    }

    /// 1-based index of the epoch the most recent batch belongs to.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// True when the last returned batch closed out its epoch.
    pub fn at_epoch_end(&self) -> bool {
        self.cursor >= self.permutation.len()
    }

    /// Next mini-batch, drawn without replacement within the epoch; on
    /// exhaustion the permutation is reshuffled from the stream and a new
    /// epoch begins.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> MiniBatch {
        if self.cursor >= self.permutation.len() {
            self.permutation.shuffle(rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + self.batch_size).min(self.permutation.len());
        let batch = MiniBatch::new(self.permutation[self.cursor..end].to_vec());
        self.cursor = end;
        batch
    }
}

/// Synthetic classification dataset: `per_class` points per class around
/// well-separated class centers with unit Gaussian noise, min-max normalized
/// into `[0, 1]` per feature. For `classes <= dim` the raw centers sit at
/// `separation * e_c`; extra centers fall back to random unit directions.
pub fn make_gaussian_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> CoreResult<LabeledDataset> {
    if classes < 2 {
        return Err(CoreError::InvalidConfig(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if per_class == 0 || dim == 0 {
        return Err(CoreError::InvalidConfig(
            "per_class and dim must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut center = vec![0.0; dim];
        if c < dim {
            center[c] = separation;
        } else {
            let dir: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            let nrm = crate::linalg::norm2(&dir).max(1e-12);
            for (ci, di) in center.iter_mut().zip(&dir) {
                *ci = separation * di / nrm;
            }
        }
        centers.push(center);
    }

    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &ci in center {
                features.push(ci + standard_normal(&mut rng));
            }
            labels.push(c);
        }
    }

    // Min-max normalize each feature into [0, 1]; constant features map to 0.5.
    for j in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let v = features[i * dim + j];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        for i in 0..n {
            let v = &mut features[i * dim + j];
            *v = if span > 0.0 { (*v - lo) / span } else { 0.5 };
        }
    }

    LabeledDataset::new(features, dim, labels, classes)
}
