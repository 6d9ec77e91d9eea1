//! Rotated-digit domain adaptation: IDX ingestion, image rotation, domain
//! construction and a one-hot linear-regression classifier adapted with BAM.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conjugate::{Conjugate, RegressionBelief, RegressionStats};
use crate::error::{invalid, Error, Result};
use crate::memory::{bam_prior, select, MemoryBuffer, ReadoutWeights, SelectionConfig};
use crate::rng::StreamFactory;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{actual} trailing bytes after payload of {expected} bytes")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("dimension product overflows: {0:?}")]
    Overflow(Vec<u32>),
    #[error("label {label} at index {index} is not a digit")]
    BadLabel { index: usize, label: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("gzip: {0}")]
    Gzip(String),
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated { expected: at + 4, actual: bytes.len() })
}

/// Strips a gzip wrapper if present.
pub fn maybe_gunzip(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| IdxError::Gzip(e.to_string()))?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

/// Parses an unsigned-byte IDX payload with the given magic, returning the
/// dimensions and the body.
fn parse_raw(bytes: &[u8], magic: u32) -> Result<(Vec<u32>, &[u8]), IdxError> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(IdxError::BadMagic { expected: magic, found });
    }
    let ndim = (magic & 0xff) as usize;
    let dims: Vec<u32> = (0..ndim).map(|i| read_u32(bytes, 4 + 4 * i)).collect::<Result<_, _>>()?;
    let header = 4 + 4 * ndim;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| IdxError::Overflow(dims.clone()))?;
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(IdxError::Truncated { expected, actual: bytes.len() }),
        std::cmp::Ordering::Greater => Err(IdxError::TrailingBytes { expected, actual: bytes.len() }),
        std::cmp::Ordering::Equal => Ok((dims, &bytes[header..])),
    }
}

/// Images as `(count, rows, cols, row-major pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), IdxError> {
    let bytes = maybe_gunzip(bytes)?;
    let (dims, body) = parse_raw(&bytes, IMAGE_MAGIC)?;
    Ok((dims[0] as usize, dims[1] as usize, dims[2] as usize, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let bytes = maybe_gunzip(bytes)?;
    let (_, body) = parse_raw(&bytes, LABEL_MAGIC)?;
    Ok(body.to_vec())
}

pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for d in [count, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Grayscale images with digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxDataset {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl IdxDataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self, IdxError> {
        let size = rows * cols;
        let images = if size == 0 { 0 } else { pixels.len() / size };
        if images * size != pixels.len() || images != labels.len() {
            return Err(IdxError::CountMismatch { images, labels: labels.len() });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
            return Err(IdxError::BadLabel { index, label });
        }
        Ok(Self { rows, cols, pixels, labels })
    }

    pub fn from_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Self, IdxError> {
        let (count, rows, cols, pixels) = parse_idx_images(image_bytes)?;
        let labels = parse_idx_labels(label_bytes)?;
        if count != labels.len() {
            return Err(IdxError::CountMismatch { images: count, labels: labels.len() });
        }
        Self::new(rows, cols, pixels, labels)
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Ok(Self::from_idx(&std::fs::read(images)?, &std::fs::read(labels)?)?)
    }

    /// Loads `<prefix>-images-idx3-ubyte[.gz]` and the matching labels file.
    pub fn load_split(dir: &Path, prefix: &str) -> Result<Self> {
        let find = |stem: String| -> Result<std::path::PathBuf> {
            [dir.join(format!("{stem}.gz")), dir.join(&stem)]
                .into_iter()
                .find(|p| p.exists())
                .ok_or_else(|| {
                    Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("{} not found in {}", stem, dir.display()),
                    ))
                })
        };
        let images = find(format!("{prefix}-images-idx3-ubyte"))?;
        let labels = find(format!("{prefix}-labels-idx1-ubyte"))?;
        Self::load(&images, &labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Rotates counter-clockwise (as displayed, rows growing downwards) about the
/// image centre with bilinear interpolation; samples outside the image are 0.
pub fn rotate_image(image: &[u8], rows: usize, cols: usize, angle: f64) -> Vec<u8> {
    assert_eq!(image.len(), rows * cols, "image size does not match dimensions");
    if angle == 0.0 {
        return image.to_vec();
    }
    let (s, c) = angle.sin_cos();
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= rows as isize || col >= cols as isize {
            0.0
        } else {
            image[r as usize * cols + col as usize] as f64
        }
    };
    let mut out = vec![0u8; rows * cols];
    for r in 0..rows {
        for col in 0..cols {
            let x = col as f64 - cx;
            let y = cy - r as f64;
            let sx = x * c + y * s;
            let sy = -x * s + y * c;
            let src_c = sx + cx;
            let src_r = cy - sy;
            let (r0, c0) = (src_r.floor(), src_c.floor());
            let (fr, fc) = (src_r - r0, src_c - c0);
            let (r0, c0) = (r0 as isize, c0 as isize);
            let v = (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1))
                + fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
            out[r * cols + col] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRole {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub angle: f64,
    pub sample_indices: Vec<usize>,
    pub role: DomainRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MnistConfig {
    pub train_domains: usize,
    pub train_per_domain: usize,
    pub test_domains: usize,
    /// Images per test domain; `None` splits the whole test set evenly.
    pub test_per_domain: Option<usize>,
    pub adaptation_count: usize,
    pub prior_precision: f64,
    pub noise_variance: f64,
    /// Multiplier applied to raw 0-255 pixel values.
    pub pixel_scale: f64,
    pub selection: SelectionConfig,
}

impl Default for MnistConfig {
    fn default() -> Self {
        Self {
            train_domains: 32,
            train_per_domain: 1875,
            test_domains: 8,
            test_per_domain: None,
            adaptation_count: 10,
            prior_precision: 0.1,
            noise_variance: 1e-4,
            pixel_scale: 1.0 / 255.0,
            selection: SelectionConfig::bottom_up(0.0),
        }
    }
}

impl MnistConfig {
    /// 8 training domains of 256 images.
    pub fn desk() -> Self {
        Self { train_domains: 8, train_per_domain: 256, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_domains == 0 || self.train_per_domain == 0 {
            return Err(invalid("train_domains", "need at least one non-empty training domain"));
        }
        if self.test_domains == 0 {
            return Err(invalid("test_domains", "need at least one test domain"));
        }
        if self.adaptation_count == 0 {
            return Err(invalid("adaptation_count", "must be positive"));
        }
        if let Some(n) = self.test_per_domain {
            if n <= self.adaptation_count {
                return Err(invalid("test_per_domain", "must exceed adaptation_count"));
            }
        }
        if !(self.prior_precision > 0.0 && self.prior_precision.is_finite()) {
            return Err(invalid("prior_precision", "must be positive and finite"));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(invalid("noise_variance", "must be positive and finite"));
        }
        if !(self.pixel_scale > 0.0 && self.pixel_scale.is_finite()) {
            return Err(invalid("pixel_scale", "must be positive and finite"));
        }
        self.selection.validate()
    }
}

/// Samples disjoint training domains and an even split of the test set, each
/// with an angle drawn from U[0, pi).
pub fn build_domains<R: Rng + ?Sized>(
    train_len: usize,
    test_len: usize,
    cfg: &MnistConfig,
    rng: &mut R,
) -> Result<(Vec<DomainSpec>, Vec<DomainSpec>)> {
    cfg.validate()?;
    let needed = cfg.train_domains * cfg.train_per_domain;
    if needed > train_len {
        return Err(invalid(
            "train_per_domain",
            format!("{} domains x {} images exceed the {train_len} training images", cfg.train_domains, cfg.train_per_domain),
        ));
    }
    let per_test = cfg.test_per_domain.unwrap_or(test_len / cfg.test_domains);
    if per_test * cfg.test_domains > test_len || per_test <= cfg.adaptation_count {
        return Err(invalid(
            "test_per_domain",
            format!("{} test domains of {per_test} images do not fit {test_len} test images", cfg.test_domains),
        ));
    }
    let mut train_idx: Vec<usize> = (0..train_len).collect();
    train_idx.shuffle(rng);
    let train = train_idx[..needed]
        .chunks(cfg.train_per_domain)
        .map(|chunk| DomainSpec {
            angle: rng.random_range(0.0..PI),
            sample_indices: chunk.to_vec(),
            role: DomainRole::Train,
        })
        .collect();
    let mut test_idx: Vec<usize> = (0..test_len).collect();
    test_idx.shuffle(rng);
    let test = test_idx[..per_test * cfg.test_domains]
        .chunks(per_test)
        .map(|chunk| DomainSpec {
            angle: rng.random_range(0.0..PI),
            sample_indices: chunk.to_vec(),
            role: DomainRole::Test,
        })
        .collect();
    Ok((train, test))
}

/// Rotated, scaled features and labels of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub features: DMatrix<f64>,
    pub labels: Vec<u8>,
}

impl DomainData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn one_hot(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), NUM_CLASSES, |i, k| (self.labels[i] as usize == k) as u8 as f64)
    }

    pub fn stats(&self) -> Result<RegressionStats> {
        RegressionStats::from_batch(&self.features, &self.one_hot())
    }

    /// Rows `range` as a new domain.
    pub fn slice(&self, range: std::ops::Range<usize>) -> DomainData {
        DomainData {
            features: self.features.rows(range.start, range.len()).into_owned(),
            labels: self.labels[range].to_vec(),
        }
    }
}

pub fn prepare_domain(data: &IdxDataset, spec: &DomainSpec, pixel_scale: f64) -> DomainData {
    let d = data.rows() * data.cols();
    let n = spec.sample_indices.len();
    let mut features = DMatrix::zeros(n, d);
    for (row, &i) in spec.sample_indices.iter().enumerate() {
        let img = rotate_image(data.image(i), data.rows(), data.cols(), spec.angle);
        for (j, &p) in img.iter().enumerate() {
            features[(row, j)] = p as f64 * pixel_scale;
        }
    }
    DomainData {
        features,
        labels: spec.sample_indices.iter().map(|&i| data.label(i)).collect(),
    }
}

/// Zero-mean prior over the ten heads.
pub fn classifier_base(d_feat: usize, cfg: &MnistConfig) -> Result<RegressionBelief> {
    RegressionBelief::isotropic(NUM_CLASSES, d_feat, cfg.prior_precision, cfg.noise_variance)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn predict_classes(belief: &RegressionBelief, features: &DMatrix<f64>) -> Vec<usize> {
    let scores = features * belief.mean().transpose();
    scores.row_iter().map(|r| argmax(r.iter().copied())).collect()
}

pub fn accuracy(predicted: &[usize], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(&p, &l)| p == l as usize).count();
    hits as f64 / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub weights: ReadoutWeights,
    pub accuracy: f64,
}

/// Conditions the prior given by `weights` on the first `adaptation_count`
/// examples of `test` and scores the remaining ones.
pub fn classify_with_weights(
    base: &RegressionBelief,
    buffer: &MemoryBuffer<RegressionStats>,
    test: &DomainData,
    weights: &ReadoutWeights,
    adaptation_count: usize,
) -> Result<f64> {
    let (adapt, held_out) = split_test(test, adaptation_count)?;
    let prior = bam_prior(base, buffer, weights)?;
    let post = prior.posterior(&adapt.stats()?)?;
    Ok(accuracy(&predict_classes(&post, &held_out.features), &held_out.labels))
}

fn split_test(test: &DomainData, adaptation_count: usize) -> Result<(DomainData, DomainData)> {
    if adaptation_count == 0 || adaptation_count >= test.len() {
        return Err(invalid(
            "adaptation_count",
            format!("{adaptation_count} leaves no held-out examples in a domain of {}", test.len()),
        ));
    }
    Ok((test.slice(0..adaptation_count), test.slice(adaptation_count..test.len())))
}

/// Selects a readout using the adaptation examples as the target, then
/// classifies the held-out examples.
pub fn adapt_and_classify(
    base: &RegressionBelief,
    buffer: &MemoryBuffer<RegressionStats>,
    test: &DomainData,
    cfg: &MnistConfig,
) -> Result<AdaptOutcome> {
    let (adapt, _) = split_test(test, cfg.adaptation_count)?;
    let selection = select(base, buffer, &adapt.stats()?, &cfg.selection)?;
    let accuracy = classify_with_weights(base, buffer, test, &selection.weights, cfg.adaptation_count)?;
    Ok(AdaptOutcome { weights: selection.weights, accuracy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistRecord {
    pub seed: u64,
    pub test_domain: usize,
    pub angle: f64,
    pub method: String,
    pub accuracy: f64,
    pub selected: usize,
}

/// One seed of the protocol: BAM and the pooled (all-ones) baseline on every
/// test domain.
pub fn mnist_experiment(
    train: &IdxDataset,
    test: &IdxDataset,
    cfg: &MnistConfig,
    seed: u64,
    streams: &StreamFactory,
) -> Result<Vec<MnistRecord>> {
    if (train.rows(), train.cols()) != (test.rows(), test.cols()) {
        return Err(invalid("test", "train and test image sizes differ"));
    }
    let mut rng = streams.stream(&["mnist", "domains"], seed);
    let (train_specs, test_specs) = build_domains(train.len(), test.len(), cfg, &mut rng)?;
    let stats: Vec<RegressionStats> = train_specs
        .par_iter()
        .map(|s| prepare_domain(train, s, cfg.pixel_scale).stats())
        .collect::<Result<_>>()?;
    let mut buffer = MemoryBuffer::new();
    for s in stats {
        buffer.push(s)?;
    }
    let base = classifier_base(train.rows() * train.cols(), cfg)?;
    let pooled = ReadoutWeights::all(buffer.len());
    let per_domain: Vec<Vec<MnistRecord>> = test_specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let data = prepare_domain(test, spec, cfg.pixel_scale);
            let bam = adapt_and_classify(&base, &buffer, &data, cfg)?;
            let baseline = classify_with_weights(&base, &buffer, &data, &pooled, cfg.adaptation_count)?;
            let record = |method: &str, accuracy, selected| MnistRecord {
                seed,
                test_domain: i,
                angle: spec.angle,
                method: method.into(),
                accuracy,
                selected,
            };
            Ok(vec![
                record("bam", bam.accuracy, bam.weights.len()),
                record("pooled", baseline, buffer.len()),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(per_domain.into_iter().flatten().collect())
}

/// Ten ray-shaped glyphs, class `k` pointing at angle `2 pi k / 10`, on a
/// `size x size` canvas with optional uniform pixel noise. Labels cycle 0..9.
pub fn synthetic_digits<R: Rng + ?Sized>(rng: &mut R, n: usize, size: usize, noise: f64) -> IdxDataset {
    let centre = (size as f64 - 1.0) / 2.0;
    let templates: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|k| {
            let dir = 2.0 * PI * k as f64 / NUM_CLASSES as f64;
            let mut img = vec![0.0; size * size];
            let length = 0.45 * size as f64;
            for step in 0..(4 * size) {
                let t = length * step as f64 / (4 * size) as f64;
                let c = (centre + t * dir.cos()).round();
                let r = (centre - t * dir.sin()).round();
                if r >= 0.0 && c >= 0.0 && (r as usize) < size && (c as usize) < size {
                    img[r as usize * size + c as usize] = 255.0;
                }
            }
            // mark the tip so rays differ from their mirror images
            let tip_c = (centre + length * dir.cos()).round().clamp(0.0, size as f64 - 1.0) as usize;
            let tip_r = (centre - length * dir.sin()).round().clamp(0.0, size as f64 - 1.0) as usize;
            for (dr, dc) in [(0, 1), (1, 0), (0, usize::MAX), (usize::MAX, 0)] {
                let (r, c) = (tip_r.wrapping_add(dr), tip_c.wrapping_add(dc));
                if r < size && c < size {
                    img[r * size + c] = 255.0;
                }
            }
            img
        })
        .collect();
    let mut pixels = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % NUM_CLASSES;
        labels.push(k as u8);
        for &p in &templates[k] {
            let jitter = if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 };
            pixels.push((p + jitter).round().clamp(0.0, 255.0) as u8);
        }
    }
    IdxDataset::new(size, size, pixels, labels).expect("synthetic dataset is consistent")
}
