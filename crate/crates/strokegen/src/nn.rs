//! Deterministic parameter management for the neural models.
//!
//! Parameters are created through a [`ParamStore`] whose initializers draw
//! from a seeded ChaCha stream, so two stores built with the same seed and
//! the same creation order hold identical weights. Checkpoints are
//! safetensors files keyed by parameter name.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{Conv1d, Conv1dConfig, Conv2d, Conv2dConfig, Embedding, Linear, Module};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Gaussian with the given standard deviation.
    Normal(f64),
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
}

pub struct ParamStore {
    vars: Vec<(String, Var)>,
    rng: ChaCha8Rng,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore { vars: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed), device: Device::Cpu }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn sample(&mut self, n: usize, init: Init) -> Vec<f32> {
        match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(c) => vec![c as f32; n],
            Init::Normal(std) => (0..n).map(|_| (self.normal() * std) as f32).collect(),
            Init::Uniform(b) => (0..n).map(|_| self.rng.gen_range(-b..b) as f32).collect(),
        }
    }

    /// Standard normal via Box-Muller on the seeded stream.
    fn normal(&mut self) -> f64 {
        let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Creates (or returns the existing) named parameter.
    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some((_, var)) = self.vars.iter().find(|(n, _)| n == name) {
            if var.dims() != shape {
                return Err(Error::invalid(format!(
                    "parameter {name} exists with shape {:?}, requested {shape:?}",
                    var.dims()
                )));
            }
            return Ok(var.as_tensor().clone());
        }
        let n: usize = shape.iter().product();
        let data = self.sample(n, init);
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, &self.device)?)?;
        let tensor = var.as_tensor().clone();
        self.vars.push((name.to_string(), var));
        Ok(tensor)
    }

    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.vars.iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> =
            self.vars.iter().map(|(n, v)| (n.clone(), v.as_tensor().clone())).collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Overwrites every parameter from a checkpoint; all names must be
    /// present with matching shapes.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let map = candle_core::safetensors::load(path, &self.device)?;
        for (name, var) in &self.vars {
            let tensor = map
                .get(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint missing parameter {name}")))?;
            var.set(&tensor.to_dtype(DType::F32)?)?;
        }
        Ok(())
    }
}

/// Fan-in scaled linear layer.
pub fn linear(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Result<Linear> {
    let bound = (1.0 / in_dim as f64).sqrt();
    let w = store.get(&format!("{name}.weight"), &[out_dim, in_dim], Init::Uniform(bound))?;
    let b = if bias {
        Some(store.get(&format!("{name}.bias"), &[out_dim], Init::Uniform(bound))?)
    } else {
        None
    };
    Ok(Linear::new(w, b))
}

pub fn conv2d(
    store: &mut ParamStore,
    name: &str,
    in_c: usize,
    out_c: usize,
    kernel: usize,
    cfg: Conv2dConfig,
) -> Result<Conv2d> {
    let fan_in = in_c * kernel * kernel;
    let bound = (1.0 / fan_in as f64).sqrt();
    let w = store.get(&format!("{name}.weight"), &[out_c, in_c, kernel, kernel], Init::Uniform(bound))?;
    let b = store.get(&format!("{name}.bias"), &[out_c], Init::Uniform(bound))?;
    Ok(Conv2d::new(w, Some(b), cfg))
}

pub fn conv1d(
    store: &mut ParamStore,
    name: &str,
    in_c: usize,
    out_c: usize,
    kernel: usize,
    cfg: Conv1dConfig,
) -> Result<Conv1d> {
    let fan_in = in_c * kernel;
    let bound = (1.0 / fan_in as f64).sqrt();
    let w = store.get(&format!("{name}.weight"), &[out_c, in_c, kernel], Init::Uniform(bound))?;
    let b = store.get(&format!("{name}.bias"), &[out_c], Init::Uniform(bound))?;
    Ok(Conv1d::new(w, Some(b), cfg))
}

/// Layer normalization over the last dimension, built from primitive tensor
/// ops. `candle_nn::LayerNorm` must not be used in training code: its
/// contiguous-input fast path runs through a custom op with no backward, so
/// it silently detaches the computation graph.
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl Module for LayerNorm {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let last = x.rank() - 1;
        let mean = x.mean_keepdim(last)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(last)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)
    }
}

pub fn layer_norm(store: &mut ParamStore, name: &str, dim: usize) -> Result<LayerNorm> {
    let w = store.get(&format!("{name}.weight"), &[dim], Init::Const(1.0))?;
    let b = store.get(&format!("{name}.bias"), &[dim], Init::Zeros)?;
    Ok(LayerNorm { weight: w, bias: b, eps: 1e-5 })
}

pub fn embedding(store: &mut ParamStore, name: &str, n: usize, dim: usize) -> Result<Embedding> {
    let w = store.get(&format!("{name}.weight"), &[n, dim], Init::Normal(0.02))?;
    Ok(Embedding::new(w, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_nn::Module;

    #[test]
    fn same_seed_same_weights() {
        let mut a = ParamStore::new(7);
        let mut b = ParamStore::new(7);
        let ta = a.get("w", &[4, 4], Init::Normal(1.0)).unwrap();
        let tb = b.get("w", &[4, 4], Init::Normal(1.0)).unwrap();
        let va: Vec<f32> = ta.flatten_all().unwrap().to_vec1().unwrap();
        let vb: Vec<f32> = tb.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(va, vb);
        let mut c = ParamStore::new(8);
        let tc = c.get("w", &[4, 4], Init::Normal(1.0)).unwrap();
        let vc: Vec<f32> = tc.flatten_all().unwrap().to_vec1().unwrap();
        assert_ne!(va, vc);
    }

    #[test]
    fn get_is_idempotent_and_shape_checked() {
        let mut s = ParamStore::new(0);
        let t1 = s.get("p", &[3], Init::Normal(1.0)).unwrap();
        let t2 = s.get("p", &[3], Init::Normal(1.0)).unwrap();
        assert_eq!(
            t1.to_vec1::<f32>().unwrap(),
            t2.to_vec1::<f32>().unwrap()
        );
        assert!(s.get("p", &[4], Init::Zeros).is_err());
        assert_eq!(s.all_vars().len(), 1);
        assert_eq!(s.num_params(), 3);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.safetensors");
        let mut a = ParamStore::new(1);
        let _ = linear(&mut a, "lin", 4, 2, true).unwrap();
        a.save(&path).unwrap();
        let mut b = ParamStore::new(999);
        let _ = linear(&mut b, "lin", 4, 2, true).unwrap();
        b.load(&path).unwrap();
        for (name, _) in [("lin.weight", 0), ("lin.bias", 1)] {
            let va = a.vars.iter().find(|(n, _)| n == name).unwrap().1.flatten_all().unwrap().to_vec1::<f32>().unwrap();
            let vb = b.vars.iter().find(|(n, _)| n == name).unwrap().1.flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert_eq!(va, vb);
        }
        assert!(b.load(&dir.path().join("missing.safetensors")).is_err());
    }

    /// Guards against candle_nn::LayerNorm's no-backward fast path: the norm
    /// used in training must pass gradients to both its input and its scale.
    #[test]
    fn layer_norm_propagates_gradients() {
        let mut s = ParamStore::new(5);
        let ln = layer_norm(&mut s, "ln", 4).unwrap();
        let x = Var::from_tensor(&Tensor::rand(0f32, 1f32, (2, 3, 4), &Device::Cpu).unwrap()).unwrap();
        let loss = ln.forward(x.as_tensor()).unwrap().sqr().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(&x).is_some(), "no gradient reached the layer-norm input");
        for v in s.all_vars() {
            assert!(grads.get(&v).is_some(), "no gradient reached a layer-norm parameter");
        }
    }

    #[test]
    fn training_updates_stored_vars() {
        use candle_nn::Optimizer;
        let mut s = ParamStore::new(3);
        let lin = linear(&mut s, "l", 2, 1, true).unwrap();
        let mut opt = candle_nn::AdamW::new_lr(s.all_vars(), 0.1).unwrap();
        let x = Tensor::from_vec(vec![1.0f32, -1.0], (1, 2), s.device()).unwrap();
        let before = lin.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        for _ in 0..5 {
            let y = lin.forward(&x).unwrap();
            let loss = y.sqr().unwrap().sum_all().unwrap();
            opt.backward_step(&loss).unwrap();
        }
        let after = lin.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(after[0].abs() < before[0].abs(), "loss did not shrink: {before:?} -> {after:?}");
    }
}
