//! The visual shape quantizer: a convolutional encoder maps a raster patch
//! to `xi` latent columns, each squashed onto the FSQ hypercube; decoder
//! heads turn the quantized codes back into Bezier control points (open
//! stroke or closed shape) plus optional width and color. Training is
//! raster-supervised: decoded strokes are re-rendered differentiably and
//! compared to the input, with a geometric regularizer on the decoded
//! on-curve points.

use std::io::Write as _;
use std::path::Path;

use candle_core::{Device, Tensor};
use candle_nn::{Conv1d, Conv1dConfig, Conv2d, Conv2dConfig, Linear, Module, Optimizer};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fsq::{self, FsqCode, FsqConfig};
use crate::nn::{self, ParamStore};
use crate::raster::{self, RasterPatch, RenderConfig};
use crate::svg::{CubicSegment, Point, Rgb, StrokePath};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    Stroke,
    Shape,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VsqConfig {
    /// Bezier segments per shape.
    pub nu: usize,
    /// Codes per shape.
    pub xi: usize,
    /// Latent width.
    pub d: usize,
    pub head_mode: HeadMode,
    pub enable_width: bool,
    pub enable_color: bool,
    /// Geometric-loss weight; forced to 0 in shape mode.
    pub alpha: f64,
    pub fsq: FsqConfig,
    /// Encoder input / render-supervision resolution.
    pub input_resolution: usize,
    /// Channel widths of the strided conv encoder.
    pub conv_channels: Vec<usize>,
    /// Hidden width of the point head.
    pub decoder_hidden: usize,
    /// Stroke width used when the width head is disabled.
    pub default_width: f64,
}

impl Default for VsqConfig {
    fn default() -> Self {
        VsqConfig {
            nu: 2,
            xi: 1,
            d: 64,
            head_mode: HeadMode::Stroke,
            enable_width: false,
            enable_color: false,
            alpha: 0.4,
            fsq: FsqConfig::default(),
            input_resolution: 64,
            conv_channels: vec![8, 16, 32, 64],
            decoder_hidden: 128,
            default_width: 0.045,
        }
    }
}

impl VsqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.xi == 0 || self.d == 0 {
            return Err(Error::invalid("nu, xi and d must be positive"));
        }
        if self.conv_channels.is_empty() {
            return Err(Error::invalid("encoder needs at least one conv block"));
        }
        if !(self.default_width > 0.0) {
            return Err(Error::invalid("default stroke width must be positive"));
        }
        Ok(())
    }

    /// Effective geometric weight (shape mode disables the constraint).
    pub fn effective_alpha(&self) -> f64 {
        match self.head_mode {
            HeadMode::Stroke => self.alpha,
            HeadMode::Shape => 0.0,
        }
    }

    /// Scalar outputs of the point head.
    pub fn point_outputs(&self) -> usize {
        match self.head_mode {
            HeadMode::Stroke => 2 * (3 * self.nu + 1),
            HeadMode::Shape => 2 * (3 * self.nu),
        }
    }
}

/// Exact geometric loss on on-curve points, direct evaluation.
///
/// `rho_{i,j}` are pairwise distances; each point's scaled inner distances
/// `rho_{i,j}/|i-j|` should be equal, and the loss is the mean (over points)
/// of their variance.
pub fn geometric_loss(points: &[Point]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("geometric loss needs at least 2 points"));
    }
    let nu = (n - 1) as f64;
    let mut total = 0.0;
    for j in 0..n {
        let scaled: Vec<f64> = (0..n)
            .filter(|&i| i != j)
            .map(|i| points[i].dist(&points[j]) / (i as f64 - j as f64).abs())
            .collect();
        let mean = scaled.iter().sum::<f64>() / nu;
        let var = scaled.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / nu;
        total += var;
    }
    Ok(total / n as f64)
}

/// Differentiable geometric loss on an `(n, 2)` point tensor.
pub fn geometric_loss_t(points: &Tensor) -> Result<Tensor> {
    let (n, _) = points.dims2()?;
    if n < 2 {
        return Err(Error::invalid("geometric loss needs at least 2 points"));
    }
    let nu = (n - 1) as f64;
    let dev = points.device();
    let a = points.unsqueeze(0)?; // (1, n, 2)
    let b = points.unsqueeze(1)?; // (n, 1, 2)
    let rho = (b.broadcast_sub(&a)?.sqr()?.sum(2)? + 1e-12)?.sqrt()?; // (n, n), rho[j][i]
    let mut w = vec![0f32; n * n];
    let mut m = vec![0f32; n * n];
    for j in 0..n {
        for i in 0..n {
            if i != j {
                w[j * n + i] = 1.0 / (i as f64 - j as f64).abs() as f32;
                m[j * n + i] = 1.0;
            }
        }
    }
    let weights = Tensor::from_vec(w, (n, n), dev)?;
    let mask = Tensor::from_vec(m, (n, n), dev)?;
    let scaled = (rho * weights)?; // (n, n)
    let mean = scaled.sum(1)?.affine(1.0 / nu, 0.0)?; // (n,)
    let dev2 = scaled.broadcast_sub(&mean.unsqueeze(1)?)?.sqr()?;
    let var = (dev2 * mask)?.sum(1)?.affine(1.0 / nu, 0.0)?; // (n,)
    Ok(var.mean(0)?)
}

/// A decoded shape: open stroke or closed outline with optional attributes.
#[derive(Debug, Clone)]
pub struct DecodedShape {
    pub path: StrokePath,
}

pub struct VsqModel {
    pub cfg: VsqConfig,
    store: ParamStore,
    convs: Vec<Conv2d>,
    pool_heads: Vec<Linear>,
    proj_down: Vec<Linear>,
    proj_up: Vec<Linear>,
    point_fc1: Linear,
    point_fc2: Option<Linear>, // stroke mode second FC
    shape_conv: Option<Conv1d>, // shape mode 1-D conv head
    width_head: Option<Linear>,
    color_head: Option<Linear>,
}

const SHAPE_SEQ_HIDDEN: usize = 16;

impl VsqModel {
    pub fn new(cfg: VsqConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(seed);
        let q = cfg.fsq.dims();
        let mut convs = Vec::new();
        let mut in_c = 3;
        for (i, &out_c) in cfg.conv_channels.iter().enumerate() {
            let conv_cfg = Conv2dConfig { padding: 1, stride: 2, ..Default::default() };
            convs.push(nn::conv2d(&mut store, &format!("enc.conv{i}"), in_c, out_c, 3, conv_cfg)?);
            in_c = out_c;
        }
        let mut pool_heads = Vec::new();
        let mut proj_down = Vec::new();
        let mut proj_up = Vec::new();
        for k in 0..cfg.xi {
            pool_heads.push(nn::linear(&mut store, &format!("enc.pool{k}"), in_c, cfg.d, true)?);
            proj_down.push(nn::linear(&mut store, &format!("enc.down{k}"), cfg.d, q, true)?);
            proj_up.push(nn::linear(&mut store, &format!("dec.up{k}"), q, cfg.d, true)?);
        }
        let latent = cfg.d * cfg.xi;
        let (point_fc1, point_fc2, shape_conv) = match cfg.head_mode {
            HeadMode::Stroke => {
                let fc1 = nn::linear(&mut store, "dec.point_fc1", latent, cfg.decoder_hidden, true)?;
                let fc2 = nn::linear(&mut store, "dec.point_fc2", cfg.decoder_hidden, cfg.point_outputs(), true)?;
                (fc1, Some(fc2), None)
            }
            HeadMode::Shape => {
                let fc1 = nn::linear(&mut store, "dec.point_fc1", latent, cfg.nu * SHAPE_SEQ_HIDDEN, true)?;
                let conv_cfg = Conv1dConfig { padding: 1, stride: 1, ..Default::default() };
                let conv = nn::conv1d(&mut store, "dec.point_conv", SHAPE_SEQ_HIDDEN, 6, 3, conv_cfg)?;
                (fc1, None, Some(conv))
            }
        };
        let width_head = if cfg.enable_width {
            Some(nn::linear(&mut store, "dec.width", latent, 1, true)?)
        } else {
            None
        };
        let color_head = if cfg.enable_color {
            Some(nn::linear(&mut store, "dec.color", latent, 3, true)?)
        } else {
            None
        };
        Ok(VsqModel {
            cfg,
            store,
            convs,
            pool_heads,
            proj_down,
            proj_up,
            point_fc1,
            point_fc2,
            shape_conv,
            width_head,
            color_head,
        })
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    pub fn num_params(&self) -> usize {
        self.store.num_params()
    }

    pub fn all_vars(&self) -> Vec<candle_core::Var> {
        self.store.all_vars()
    }

    /// Encoder features: `(B, C_last)` pooled conv activations.
    fn backbone(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.forward(&h)?.relu()?;
        }
        Ok(h.mean(3)?.mean(2)?)
    }

    /// Per-code unbounded projections: `xi` tensors of shape `(B, q)`.
    fn project(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let feats = self.backbone(x)?;
        let mut out = Vec::with_capacity(self.cfg.xi);
        for k in 0..self.cfg.xi {
            let pooled = self.pool_heads[k].forward(&feats)?.relu()?;
            out.push(self.proj_down[k].forward(&pooled)?);
        }
        Ok(out)
    }

    /// Straight-through quantized levels per code: `xi` tensors `(B, q)`.
    pub fn encode_t(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.project(&x.clone())?
            .iter()
            .map(|z| fsq::quantize(z, &self.cfg.fsq))
            .collect()
    }

    /// Concatenated decoder latent from quantized levels.
    fn latent_from_levels(&self, levels: &[Tensor]) -> Result<Tensor> {
        if levels.len() != self.cfg.xi {
            return Err(Error::invalid(format!(
                "expected {} codes, got {}",
                self.cfg.xi,
                levels.len()
            )));
        }
        let mut parts = Vec::with_capacity(self.cfg.xi);
        for (k, lv) in levels.iter().enumerate() {
            let input = fsq::levels_to_input(lv, &self.cfg.fsq)?;
            parts.push(self.proj_up[k].forward(&input)?.relu()?);
        }
        Ok(Tensor::cat(&parts, 1)?)
    }

    /// Decoded control points `(B, n_points, 2)` in `(0, 1)`; stroke mode has
    /// `3*nu + 1` points `[p0, c1, c2, p1, ...]`, shape mode `3*nu` points
    /// `[c1, c2, p1, ...]`.
    pub fn decode_points_t(&self, levels: &[Tensor]) -> Result<Tensor> {
        let latent = self.latent_from_levels(levels)?;
        let (b, _) = latent.dims2()?;
        let raw = match self.cfg.head_mode {
            HeadMode::Stroke => {
                let h = self.point_fc1.forward(&latent)?.relu()?;
                self.point_fc2.as_ref().unwrap().forward(&h)?
            }
            HeadMode::Shape => {
                let h = self
                    .point_fc1
                    .forward(&latent)?
                    .relu()?
                    .reshape((b, SHAPE_SEQ_HIDDEN, self.cfg.nu))?;
                // (B, 6, nu) -> (B, nu, 6) -> flat segment-major values
                self.shape_conv
                    .as_ref()
                    .unwrap()
                    .forward(&h)?
                    .transpose(1, 2)?
                    .reshape((b, 6 * self.cfg.nu))?
            }
        };
        let pts = candle_nn::ops::sigmoid(&raw)?;
        Ok(pts.reshape((b, self.cfg.point_outputs() / 2, 2))?)
    }

    /// Predicted widths `(B, 1)` if the head is enabled.
    pub fn decode_width_t(&self, levels: &[Tensor]) -> Result<Option<Tensor>> {
        match &self.width_head {
            None => Ok(None),
            Some(head) => {
                let latent = self.latent_from_levels(levels)?;
                Ok(Some(candle_nn::ops::sigmoid(&head.forward(&latent)?)?))
            }
        }
    }

    /// Predicted colors `(B, 3)` if the head is enabled.
    pub fn decode_color_t(&self, levels: &[Tensor]) -> Result<Option<Tensor>> {
        match &self.color_head {
            None => Ok(None),
            Some(head) => {
                let latent = self.latent_from_levels(levels)?;
                Ok(Some(candle_nn::ops::sigmoid(&head.forward(&latent)?)?))
            }
        }
    }

    fn patch_to_input(&self, patch: &RasterPatch) -> Result<Tensor> {
        let r = self.cfg.input_resolution;
        let resized = if patch.height != r || patch.width != r {
            crate::dataprep::resize_nearest(patch, r, r)
        } else {
            patch.clone()
        };
        if resized.channels != 3 {
            // replicate grayscale across channels
            let mut rgb = RasterPatch::white(3, r, r);
            for y in 0..r {
                for x in 0..r {
                    let v = resized.luma(y, x);
                    for c in 0..3 {
                        rgb.set(c, y, x, v);
                    }
                }
            }
            return Ok(rgb.to_tensor(self.device())?.unsqueeze(0)?);
        }
        Ok(resized.to_tensor(self.device())?.unsqueeze(0)?)
    }

    /// Deterministic evaluation-mode encoding of one patch to `xi` codes.
    pub fn encode_patch(&self, patch: &RasterPatch) -> Result<Vec<FsqCode>> {
        let x = self.patch_to_input(patch)?;
        let mut codes = Vec::with_capacity(self.cfg.xi);
        for z in self.project(&x)? {
            let levels = fsq::quantize_levels(&z.detach(), &self.cfg.fsq)?;
            codes.push(FsqCode::from_levels(levels, &self.cfg.fsq)?);
        }
        Ok(codes)
    }

    fn levels_from_codes(&self, codes: &[FsqCode]) -> Result<Vec<Tensor>> {
        if codes.len() != self.cfg.xi {
            return Err(Error::invalid(format!("expected {} codes, got {}", self.cfg.xi, codes.len())));
        }
        codes
            .iter()
            .map(|c| {
                let lv: Vec<f32> = c.levels_vec.iter().map(|&v| v as f32).collect();
                Ok(Tensor::from_vec(lv, (1, self.cfg.fsq.dims()), self.device())?)
            })
            .collect()
    }

    /// Pure decode of `xi` codes to a path (open stroke or closed shape).
    pub fn decode_codes(&self, codes: &[FsqCode]) -> Result<StrokePath> {
        let levels = self.levels_from_codes(codes)?;
        let pts = self.decode_points_t(&levels)?.detach();
        let flat: Vec<f32> = pts.flatten_all()?.to_vec1()?;
        let points: Vec<Point> = flat
            .chunks(2)
            .map(|c| Point::new(c[0] as f64, c[1] as f64))
            .collect();
        let width = match self.decode_width_t(&levels)? {
            Some(w) => w.detach().flatten_all()?.to_vec1::<f32>()?[0] as f64,
            None => self.cfg.default_width,
        };
        let color = match self.decode_color_t(&levels)? {
            Some(c) => {
                let v: Vec<f32> = c.detach().flatten_all()?.to_vec1()?;
                Some(Rgb::new(v[0] as f64, v[1] as f64, v[2] as f64))
            }
            None => None,
        };
        match self.cfg.head_mode {
            HeadMode::Stroke => {
                let start = points[0];
                let segments = points[1..]
                    .chunks(3)
                    .map(|c| CubicSegment { c1: c[0], c2: c[1], end: c[2] })
                    .collect();
                Ok(StrokePath { start, segments, closed: false, width: Some(width), color })
            }
            HeadMode::Shape => {
                let segments: Vec<CubicSegment> = points
                    .chunks(3)
                    .map(|c| CubicSegment { c1: c[0], c2: c[1], end: c[2] })
                    .collect();
                // the path closes back to the last segment's end point
                let start = segments.last().unwrap().end;
                Ok(StrokePath { start, segments, closed: true, width: None, color })
            }
        }
    }

    /// Differentiable render of decoded points for one batch element.
    fn render_decoded(
        &self,
        pts: &Tensor,
        width: Option<&Tensor>,
        color: Option<&Tensor>,
        b: usize,
        render: &RenderConfig,
    ) -> Result<Tensor> {
        let controls = pts.narrow(0, b, 1)?.squeeze(0)?; // (n_points, 2)
        let color_t = match color {
            Some(c) => c.narrow(0, b, 1)?.squeeze(0)?,
            None => Tensor::from_vec(vec![0f32, 0.0, 0.0], 3, self.device())?,
        };
        match self.cfg.head_mode {
            HeadMode::Stroke => {
                let width_t = match width {
                    Some(w) => w.narrow(0, b, 1)?.squeeze(0)?,
                    None => Tensor::from_vec(vec![self.cfg.default_width as f32], 1, self.device())?,
                };
                // prepend the start point: decoded layout is already
                // [p0, c1, c2, p1, ...]
                raster::render_stroke_t(&controls, &width_t, &color_t, render)
            }
            HeadMode::Shape => raster::render_filled_t(&controls, &color_t, render),
        }
    }

    /// On-curve (segment boundary) points of the decoded control tensor for
    /// one batch element: `(nu + 1, 2)` in stroke mode.
    fn oncurve_points(&self, pts: &Tensor, b: usize) -> Result<Tensor> {
        let sample = pts.narrow(0, b, 1)?.squeeze(0)?;
        let idx: Vec<u32> = match self.cfg.head_mode {
            HeadMode::Stroke => (0..=self.cfg.nu).map(|i| (3 * i) as u32).collect(),
            HeadMode::Shape => (1..=self.cfg.nu).map(|i| (3 * i - 1) as u32).collect(),
        };
        let idx_t = Tensor::from_vec(idx, self.cfg.nu + matches!(self.cfg.head_mode, HeadMode::Stroke) as usize, self.device())?;
        Ok(sample.index_select(&idx_t, 0)?)
    }

    /// Full loss on a batch `(B, 3, R, R)`: render MSE plus the weighted
    /// geometric term. Returns `(loss, mse_value, geom_value)`.
    pub fn loss_on_batch(&self, x: &Tensor, render: &RenderConfig) -> Result<(Tensor, f64, f64)> {
        let (bsz, _, _, _) = x.dims4()?;
        let levels = self.encode_t(x)?;
        let pts = self.decode_points_t(&levels)?;
        let width = self.decode_width_t(&levels)?;
        let color = self.decode_color_t(&levels)?;
        let mut renders = Vec::with_capacity(bsz);
        for b in 0..bsz {
            renders.push(self.render_decoded(&pts, width.as_ref(), color.as_ref(), b, render)?);
        }
        let rendered = Tensor::stack(&renders, 0)?;
        let mse = rendered.sub(x)?.sqr()?.mean_all()?;
        let alpha = self.cfg.effective_alpha();
        let (loss, geom_val) = if alpha > 0.0 {
            let mut geoms = Vec::with_capacity(bsz);
            for b in 0..bsz {
                geoms.push(geometric_loss_t(&self.oncurve_points(&pts, b)?)?);
            }
            let geom = Tensor::stack(&geoms, 0)?.mean(0)?;
            let gv = geom.to_scalar::<f32>()? as f64;
            ((mse.clone() + geom.affine(alpha, 0.0)?)?, gv)
        } else {
            (mse.clone(), 0.0)
        };
        let mse_val = mse.to_scalar::<f32>()? as f64;
        Ok((loss, mse_val, geom_val))
    }

    /// Mean decoded geometric loss over patches (no gradients).
    pub fn mean_geometric(&self, patches: &[RasterPatch]) -> Result<f64> {
        let mut acc = 0.0;
        for p in patches {
            let codes = self.encode_patch(p)?;
            let path = self.decode_codes(&codes)?;
            let pts = path.endpoints();
            acc += geometric_loss(&pts)?;
        }
        Ok(acc / patches.len() as f64)
    }

    /// Reconstruction MSE over patches in evaluation mode.
    pub fn eval_mse(&self, patches: &[RasterPatch], render: &RenderConfig) -> Result<f64> {
        let mut acc = 0.0;
        for p in patches {
            let x = self.patch_to_input(p)?;
            let (_, mse, _) = self.loss_on_batch(&x.detach(), render)?;
            acc += mse;
        }
        Ok(acc / patches.len() as f64)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.store.save(&dir.join("vsq.safetensors"))?;
        std::fs::write(dir.join("vsq_config.json"), serde_json::to_string_pretty(&self.cfg)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("vsq_config.json");
        if !cfg_path.exists() {
            return Err(Error::MissingArtifact(cfg_path));
        }
        let cfg: VsqConfig = serde_json::from_str(&std::fs::read_to_string(cfg_path)?)?;
        let mut model = VsqModel::new(cfg, 0)?;
        model.store.load(&dir.join("vsq.safetensors"))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VsqTrainParams {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Evaluate the held-out split every this many steps.
    pub eval_every: usize,
    /// Stop once held-out MSE drops below this value.
    pub early_stop_mse: Option<f64>,
    pub holdout_fraction: f64,
}

impl Default for VsqTrainParams {
    fn default() -> Self {
        VsqTrainParams {
            steps: 3000,
            batch_size: 8,
            lr: 2e-5,
            seed: 0,
            eval_every: 100,
            early_stop_mse: None,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VsqTrainReport {
    pub steps_run: usize,
    pub final_loss: f64,
    pub holdout_mse: f64,
}

#[derive(Debug, Serialize)]
struct MetricLine {
    step: usize,
    loss: f64,
    mse: f64,
    geom: f64,
}

/// Trains a VSQ model on raster patches; optionally writes a JSONL metrics
/// log and checkpoints into `out_dir`.
pub fn train_vsq(
    patches: &[RasterPatch],
    cfg: VsqConfig,
    params: &VsqTrainParams,
    out_dir: Option<&Path>,
) -> Result<(VsqModel, VsqTrainReport)> {
    if patches.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    let model = VsqModel::new(cfg, params.seed)?;
    let render = RenderConfig::with_resolution(model.cfg.input_resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x7261_7374);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.shuffle(&mut rng);
    let n_holdout = ((patches.len() as f64 * params.holdout_fraction).ceil() as usize)
        .clamp(1, patches.len().saturating_sub(1).max(1));
    let (holdout_idx, train_idx) = order.split_at(n_holdout.min(patches.len() - 1));
    let train_idx = if train_idx.is_empty() { holdout_idx } else { train_idx };
    let holdout: Vec<RasterPatch> = holdout_idx.iter().map(|&i| patches[i].clone()).collect();
    // pre-resize training inputs once
    let inputs: Vec<Tensor> = train_idx
        .iter()
        .map(|&i| model.patch_to_input(&patches[i])?.squeeze(0).map_err(Error::from))
        .collect::<Result<_>>()?;
    let mut opt = candle_nn::AdamW::new_lr(model.all_vars(), params.lr)?;
    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(std::io::BufWriter::new(std::fs::File::create(dir.join("vsq_metrics.jsonl"))?))
        }
        None => None,
    };
    let mut cursor = 0usize;
    let mut perm: Vec<usize> = (0..inputs.len()).collect();
    perm.shuffle(&mut rng);
    let mut final_loss = f64::NAN;
    let mut holdout_mse = f64::NAN;
    let mut steps_run = 0;
    for step in 1..=params.steps {
        let bsz = params.batch_size.min(inputs.len());
        let mut batch = Vec::with_capacity(bsz);
        for _ in 0..bsz {
            if cursor >= perm.len() {
                cursor = 0;
                perm.shuffle(&mut rng);
            }
            batch.push(inputs[perm[cursor]].clone());
            cursor += 1;
        }
        let x = Tensor::stack(&batch, 0)?;
        let (loss, mse, geom) = model.loss_on_batch(&x, &render)?;
        opt.backward_step(&loss)?;
        final_loss = loss.to_scalar::<f32>()? as f64;
        steps_run = step;
        if let Some(log) = log.as_mut() {
            serde_json::to_writer(&mut *log, &MetricLine { step, loss: final_loss, mse, geom })?;
            log.write_all(b"\n")?;
        }
        if step % params.eval_every == 0 || step == params.steps {
            holdout_mse = model.eval_mse(&holdout, &render)?;
            if params.early_stop_mse.map(|t| holdout_mse < t).unwrap_or(false) {
                break;
            }
        }
    }
    if holdout_mse.is_nan() {
        holdout_mse = model.eval_mse(&holdout, &render)?;
    }
    if let Some(mut log) = log {
        log.flush()?;
    }
    if let Some(dir) = out_dir {
        model.save(dir)?;
    }
    let report = VsqTrainReport { steps_run, final_loss, holdout_mse };
    Ok((model, report))
}
