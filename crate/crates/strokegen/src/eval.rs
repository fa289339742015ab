//! Evaluation metrics: raster MSE, Frechet distance between embedding
//! distributions, a CLIP-style prompt/image agreement score, and codebook
//! usage statistics.
//!
//! Embeddings come from an [`EmbeddingAdapter`]. The built-in
//! [`HashProjectionEmbedder`] is a deterministic stand-in (average-pooled
//! pixels / hashed bag-of-words, pushed through a seeded random projection);
//! an external vision-language model can be dropped in through the same
//! trait to produce comparable numbers.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::raster::RasterPatch;
use crate::{Error, Result};

/// Mean squared error between two rasters of identical shape.
pub fn mse(a: &RasterPatch, b: &RasterPatch) -> Result<f64> {
    a.mse(b)
}

/// Mean MSE over aligned pairs.
pub fn mean_mse(pairs: &[(RasterPatch, RasterPatch)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("mean_mse over no pairs"));
    }
    let mut acc = 0.0;
    for (a, b) in pairs {
        acc += a.mse(b)?;
    }
    Ok(acc / pairs.len() as f64)
}

/// Sample mean and covariance (rows are observations).
pub fn mean_and_cov(samples: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("need at least two samples for a covariance"));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::invalid("embedding dimensions differ across samples"));
    }
    let mut mu = DVector::zeros(d);
    for s in samples {
        mu += DVector::from_column_slice(s);
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = DVector::from_column_slice(s) - &mu;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    Ok((mu, cov))
}

/// Principal square root of a symmetric PSD matrix; small negative
/// eigenvalues from numerical noise are clamped to zero.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * sqrt_vals * eig.eigenvectors.transpose()
}

/// Frechet distance between two Gaussians:
/// `|mu_r - mu_g|^2 + tr(S_r + S_g - 2 (S_r^1/2 S_g S_r^1/2)^1/2)`.
pub fn frechet_distance(
    mu_r: &DVector<f64>,
    sigma_r: &DMatrix<f64>,
    mu_g: &DVector<f64>,
    sigma_g: &DMatrix<f64>,
) -> Result<f64> {
    if mu_r.len() != mu_g.len() || sigma_r.shape() != sigma_g.shape() {
        return Err(Error::invalid("distribution dimensions differ"));
    }
    let diff = mu_r - mu_g;
    let root_r = sym_sqrt(sigma_r);
    let covmean = sym_sqrt(&(&root_r * sigma_g * &root_r));
    let score = diff.dot(&diff) + sigma_r.trace() + sigma_g.trace() - 2.0 * covmean.trace();
    // numerical noise can push an exact-zero distance slightly negative
    Ok(score.max(0.0))
}

/// FID between two embedding sets (rows are samples).
pub fn fid(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<f64> {
    let (mu_r, sigma_r) = mean_and_cov(real)?;
    let (mu_g, sigma_g) = mean_and_cov(generated)?;
    frechet_distance(&mu_r, &sigma_r, &mu_g, &sigma_g)
}

pub trait EmbeddingAdapter {
    fn dim(&self) -> usize;
    fn embed_image(&self, img: &RasterPatch) -> Result<Vec<f64>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Deterministic embedder: images are average-pooled to an 8x8x3 grid and
/// texts hashed into a 192-bucket bag of words; both are mapped into a shared
/// space by one seeded random projection.
pub struct HashProjectionEmbedder {
    dim: usize,
    projection: Vec<f64>, // dim x FEATURES, row-major
}

const POOL: usize = 8;
const FEATURES: usize = POOL * POOL * 3;

impl HashProjectionEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (FEATURES as f64).sqrt();
        let projection = (0..dim * FEATURES).map(|_| rng.gen_range(-scale..scale)).collect();
        HashProjectionEmbedder { dim, projection }
    }

    fn project(&self, features: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                features
                    .iter()
                    .enumerate()
                    .map(|(j, f)| self.projection[i * FEATURES + j] * f)
                    .sum()
            })
            .collect()
    }
}

impl Default for HashProjectionEmbedder {
    fn default() -> Self {
        HashProjectionEmbedder::new(64, 0x5eed)
    }
}

impl EmbeddingAdapter for HashProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_image(&self, img: &RasterPatch) -> Result<Vec<f64>> {
        if img.height < POOL || img.width < POOL {
            return Err(Error::invalid("image too small to embed"));
        }
        let mut features = vec![0.0f64; FEATURES];
        for c in 0..3 {
            let ch = c.min(img.channels - 1);
            for by in 0..POOL {
                for bx in 0..POOL {
                    let y0 = by * img.height / POOL;
                    let y1 = (by + 1) * img.height / POOL;
                    let x0 = bx * img.width / POOL;
                    let x1 = (bx + 1) * img.width / POOL;
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += img.get(ch, y, x) as f64;
                        }
                    }
                    features[(c * POOL + by) * POOL + bx] = acc / ((y1 - y0) * (x1 - x0)) as f64;
                }
            }
        }
        Ok(self.project(&features))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let mut features = vec![0.0f64; FEATURES];
        for token in text.to_lowercase().split_whitespace() {
            let digest = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % FEATURES;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            features[bucket] += sign;
        }
        Ok(self.project(&features))
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean of `100 * max(cos(text, image), 0)` over prompt/image pairs.
pub fn clip_score(adapter: &dyn EmbeddingAdapter, pairs: &[(String, RasterPatch)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("clip_score over no pairs"));
    }
    let mut acc = 0.0;
    for (prompt, img) in pairs {
        let t = adapter.embed_text(prompt)?;
        let v = adapter.embed_image(img)?;
        acc += 100.0 * cosine(&t, &v).max(0.0);
    }
    Ok(acc / pairs.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodebookStats {
    pub codebook_size: u32,
    pub total_tokens: u64,
    pub used_codes: u32,
    pub usage_fraction: f64,
    /// Histogram over all code ids; index is the code.
    pub counts: Vec<u64>,
}

impl CodebookStats {
    /// Fraction of tokens covered by the `k` most frequent codes.
    pub fn top_share(&self, k: usize) -> f64 {
        if self.total_tokens == 0 {
            return 0.0;
        }
        let mut sorted: Vec<u64> = self.counts.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let top: u64 = sorted.iter().take(k).sum();
        top as f64 / self.total_tokens as f64
    }
}

/// Histogram of code usage over a corpus of code ids.
pub fn codebook_usage(codes: impl IntoIterator<Item = u32>, codebook_size: u32) -> Result<CodebookStats> {
    let mut counts = vec![0u64; codebook_size as usize];
    let mut total = 0u64;
    for code in codes {
        if code >= codebook_size {
            return Err(Error::invalid(format!("code {code} outside codebook of {codebook_size}")));
        }
        counts[code as usize] += 1;
        total += 1;
    }
    let used = counts.iter().filter(|&&c| c > 0).count() as u32;
    Ok(CodebookStats {
        codebook_size,
        total_tokens: total,
        used_codes: used,
        usage_fraction: used as f64 / codebook_size as f64,
        counts,
    })
}

/// Per-class usage fractions for a corpus keyed by class label.
pub fn codebook_usage_by_class(
    classed: &HashMap<String, Vec<u32>>,
    codebook_size: u32,
) -> Result<HashMap<String, CodebookStats>> {
    classed
        .iter()
        .map(|(k, codes)| Ok((k.clone(), codebook_usage(codes.iter().copied(), codebook_size)?)))
        .collect()
}
