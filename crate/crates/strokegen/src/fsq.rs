//! Finite scalar quantization: a fixed codebook of equidistant points on a
//! low-dimensional hypercube, indexed by a mixed-radix scalar code.

use candle_core::Tensor;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FsqConfig {
    /// Number of levels per hypercube dimension.
    pub levels: Vec<u32>,
}

impl Default for FsqConfig {
    fn default() -> Self {
        FsqConfig { levels: vec![7, 5, 5, 5, 5] }
    }
}

impl FsqConfig {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|&l| l < 2) {
            return Err(Error::invalid("fsq levels must be >= 2 and non-empty"));
        }
        Ok(FsqConfig { levels })
    }

    pub fn dims(&self) -> usize {
        self.levels.len()
    }

    pub fn codebook_size(&self) -> u32 {
        self.levels.iter().product()
    }

    /// Mixed-radix basis: `b_1 = 1`, `b_j = l_1 * ... * l_{j-1}`.
    pub fn basis(&self) -> Vec<u32> {
        let mut b = Vec::with_capacity(self.levels.len());
        let mut acc = 1u32;
        for &l in &self.levels {
            b.push(acc);
            acc *= l;
        }
        b
    }
}

/// A quantized point on the hypercube together with its scalar index.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FsqCode {
    pub levels_vec: Vec<u32>,
    pub index: u32,
}

impl FsqCode {
    pub fn from_levels(levels_vec: Vec<u32>, cfg: &FsqConfig) -> Result<Self> {
        let index = code_index(&levels_vec, cfg)?;
        Ok(FsqCode { levels_vec, index })
    }

    pub fn from_index(index: u32, cfg: &FsqConfig) -> Result<Self> {
        let levels_vec = code_unindex(index, cfg)?;
        Ok(FsqCode { levels_vec, index })
    }
}

/// Scalar code for a level tuple: `v = sum_j z_j * b_j`.
pub fn code_index(levels_vec: &[u32], cfg: &FsqConfig) -> Result<u32> {
    if levels_vec.len() != cfg.dims() {
        return Err(Error::invalid(format!(
            "level tuple has {} dims, config has {}",
            levels_vec.len(),
            cfg.dims()
        )));
    }
    for (j, (&z, &l)) in levels_vec.iter().zip(&cfg.levels).enumerate() {
        if z >= l {
            return Err(Error::invalid(format!("level {z} out of range for dim {j} (l={l})")));
        }
    }
    Ok(levels_vec.iter().zip(cfg.basis()).map(|(&z, b)| z * b).sum())
}

/// Inverse of [`code_index`]: mixed-radix digits of `v`.
pub fn code_unindex(v: u32, cfg: &FsqConfig) -> Result<Vec<u32>> {
    if v >= cfg.codebook_size() {
        return Err(Error::invalid(format!(
            "code {v} out of range for codebook of size {}",
            cfg.codebook_size()
        )));
    }
    let mut rest = v;
    let mut out = Vec::with_capacity(cfg.dims());
    for &l in &cfg.levels {
        out.push(rest % l);
        rest /= l;
    }
    Ok(out)
}

/// Squashes an unbounded projection into the level range `[0, l_j - 1]` per
/// dimension via a scaled sigmoid. Smooth; the quantizer rounds its output.
pub fn bound(z_proj: &Tensor, cfg: &FsqConfig) -> Result<Tensor> {
    let dims = z_proj.dims();
    let q = *dims.last().ok_or_else(|| Error::invalid("empty projection"))?;
    if q != cfg.dims() {
        return Err(Error::invalid(format!("projection has {q} dims, config has {}", cfg.dims())));
    }
    let scale: Vec<f32> = cfg.levels.iter().map(|&l| (l - 1) as f32).collect();
    let scale = Tensor::from_vec(scale, q, z_proj.device())?.broadcast_as(dims)?;
    let squashed = candle_nn::ops::sigmoid(z_proj)?;
    Ok(squashed.broadcast_mul(&scale)?)
}

/// Bounds and rounds to the nearest level, passing gradients straight through
/// the rounding step.
pub fn quantize(z_proj: &Tensor, cfg: &FsqConfig) -> Result<Tensor> {
    let bounded = bound(z_proj, cfg)?;
    let rounded = bounded.detach().round()?;
    // bounded + (round(bounded) - bounded) with the residual detached
    let residual = (rounded - bounded.detach())?;
    Ok((bounded + residual)?)
}

/// Integer level tuple for a single projected vector (evaluation path).
pub fn quantize_levels(z_proj: &Tensor, cfg: &FsqConfig) -> Result<Vec<u32>> {
    let q = quantize(z_proj, cfg)?.detach();
    let v: Vec<f32> = q.flatten_all()?.to_vec1()?;
    Ok(v.iter().map(|&x| x.round().max(0.0) as u32).collect())
}

/// Hypercube coordinates for a code index, normalized to `[-1, 1]` per
/// dimension, as decoder input.
pub fn code_to_input(code: &FsqCode, cfg: &FsqConfig) -> Vec<f32> {
    code.levels_vec
        .iter()
        .zip(&cfg.levels)
        .map(|(&z, &l)| 2.0 * z as f32 / (l - 1) as f32 - 1.0)
        .collect()
}

/// Same normalization applied to a (possibly straight-through) level tensor.
pub fn levels_to_input(levels: &Tensor, cfg: &FsqConfig) -> Result<Tensor> {
    let q = cfg.dims();
    let scale: Vec<f32> = cfg.levels.iter().map(|&l| 2.0 / (l - 1) as f32).collect();
    let scale = Tensor::from_vec(scale, q, levels.device())?.broadcast_as(levels.dims())?;
    Ok(levels.broadcast_mul(&scale)?.affine(1.0, -1.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    #[test]
    fn default_codebook_size() {
        let cfg = FsqConfig::default();
        assert_eq!(cfg.codebook_size(), 4375);
        assert_eq!(cfg.basis(), vec![1, 7, 35, 175, 875]);
    }

    #[test]
    fn index_examples() {
        let cfg = FsqConfig::default();
        assert_eq!(code_index(&[0, 0, 0, 0, 0], &cfg).unwrap(), 0);
        assert_eq!(code_index(&[6, 4, 4, 4, 4], &cfg).unwrap(), 4374);
        assert_eq!(code_index(&[3, 2, 0, 4, 1], &cfg).unwrap(), 1592);
        assert_eq!(code_unindex(1592, &cfg).unwrap(), vec![3, 2, 0, 4, 1]);
        assert!(code_index(&[7, 0, 0, 0, 0], &cfg).is_err());
        assert!(code_unindex(4375, &cfg).is_err());
    }

    #[test]
    fn bijection_exhaustive() {
        let cfg = FsqConfig::default();
        for v in 0..cfg.codebook_size() {
            let levels = code_unindex(v, &cfg).unwrap();
            assert_eq!(code_index(&levels, &cfg).unwrap(), v);
        }
    }

    #[test]
    fn quantize_bounds_and_rounds() {
        let cfg = FsqConfig::default();
        let dev = Device::Cpu;
        // very negative projections squash to the minimum level everywhere
        let z = Tensor::from_vec(vec![-30.0f32; 5], 5, &dev).unwrap();
        let q = quantize(&z, &cfg).unwrap().to_vec1::<f32>().unwrap();
        assert!(q.iter().all(|&v| v == 0.0), "{q:?}");
        let z = Tensor::from_vec(vec![30.0f32; 5], 5, &dev).unwrap();
        let q = quantize(&z, &cfg).unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(q, vec![6.0, 4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn straight_through_gradient_matches_bound() {
        let cfg = FsqConfig::default();
        let dev = Device::Cpu;
        let data = vec![0.37f32, -1.2, 0.05, 2.1, -0.6];
        let v = Var::from_slice(&data, 5, &dev).unwrap();
        let g_q = quantize(v.as_tensor(), &cfg)
            .unwrap()
            .sum_all()
            .unwrap()
            .backward()
            .unwrap()
            .get(v.as_tensor())
            .unwrap()
            .to_vec1::<f32>()
            .unwrap();
        let g_b = bound(v.as_tensor(), &cfg)
            .unwrap()
            .sum_all()
            .unwrap()
            .backward()
            .unwrap()
            .get(v.as_tensor())
            .unwrap()
            .to_vec1::<f32>()
            .unwrap();
        for (a, b) in g_q.iter().zip(&g_b) {
            assert!((a - b).abs() < 1e-6, "straight-through grad {a} vs bound grad {b}");
        }
    }
}
