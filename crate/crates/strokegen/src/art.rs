//! The autoregressive transformer over interleaved position/code token
//! sequences with a text-embedding prefix: causal LM training, grammar-masked
//! nucleus sampling, and stroke-context completion.

use std::io::Write as _;
use std::path::Path;

use candle_core::{DType, Device, IndexOp, Tensor};
use candle_nn::{Embedding, Linear, Module, Optimizer};

use crate::nn::LayerNorm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{build_sequence, TokenKind, TokenPair, TokenSequence, TokenizedSample, Vocabulary, CONTEXT_LEN};
use crate::nn::{self, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub context_len: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub vocab: Vocabulary,
    /// Width of the text-adapter embeddings.
    pub d_text: usize,
    /// Mask illegal ids during sampling so outputs always satisfy the
    /// sequence grammar.
    pub grammar_mask: bool,
}

impl Default for ArtConfig {
    fn default() -> Self {
        ArtConfig {
            d_model: 128,
            n_heads: 8,
            n_blocks: 4,
            context_len: CONTEXT_LEN,
            top_p: 0.9,
            temperature: 1.0,
            vocab: Vocabulary::default(),
            d_text: 32,
            grammar_mask: true,
        }
    }
}

impl ArtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::invalid("d_model must be a positive multiple of n_heads"));
        }
        if self.n_blocks == 0 || self.context_len < 8 {
            return Err(Error::invalid("need at least one block and a usable context"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(Error::invalid("top_p must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Pluggable text encoder: any model that maps a prompt to a deterministic
/// list of embedding vectors (one per text token).
pub trait TextEncoderAdapter {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<Vec<f32>>;
}

/// Deterministic whitespace-token embedder: each token's embedding is drawn
/// from a ChaCha stream seeded by its hash. A pretrained language encoder is
/// a drop-in replacement through the trait.
pub struct HashTextEncoder {
    dim: usize,
}

impl HashTextEncoder {
    pub fn new(dim: usize) -> Self {
        HashTextEncoder { dim }
    }
}

impl TextEncoderAdapter for HashTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<Vec<f32>> {
        text.to_lowercase()
            .split_whitespace()
            .map(|token| {
                let digest = Sha256::digest(token.as_bytes());
                let seed = u64::from_le_bytes(digest[..8].try_into().unwrap());
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..self.dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
            })
            .collect()
    }
}

struct Block {
    ln1: LayerNorm,
    qkv: Linear,
    attn_out: Linear,
    ln2: LayerNorm,
    mlp1: Linear,
    mlp2: Linear,
}

pub struct ArtModel {
    pub cfg: ArtConfig,
    store: ParamStore,
    tok_emb: Embedding,
    pos_emb: Embedding,
    text_proj: Linear,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
}

impl ArtModel {
    pub fn new(cfg: ArtConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(seed);
        let d = cfg.d_model;
        let total = cfg.vocab.total() as usize;
        let tok_emb = nn::embedding(&mut store, "tok_emb", total, d)?;
        let pos_emb = nn::embedding(&mut store, "pos_emb", cfg.context_len, d)?;
        let text_proj = nn::linear(&mut store, "text_proj", cfg.d_text, d, true)?;
        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for i in 0..cfg.n_blocks {
            blocks.push(Block {
                ln1: nn::layer_norm(&mut store, &format!("b{i}.ln1"), d)?,
                qkv: nn::linear(&mut store, &format!("b{i}.qkv"), d, 3 * d, true)?,
                attn_out: nn::linear(&mut store, &format!("b{i}.attn_out"), d, d, true)?,
                ln2: nn::layer_norm(&mut store, &format!("b{i}.ln2"), d)?,
                mlp1: nn::linear(&mut store, &format!("b{i}.mlp1"), d, 4 * d, true)?,
                mlp2: nn::linear(&mut store, &format!("b{i}.mlp2"), 4 * d, d, true)?,
            });
        }
        let ln_f = nn::layer_norm(&mut store, "ln_f", d)?;
        Ok(ArtModel { cfg, store, tok_emb, pos_emb, text_proj, blocks, ln_f })
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

    /// Embeds one sequence: vocabulary ids through the shared matrix `W`,
    /// text slots through the projected adapter embeddings, plus learned
    /// absolute position embeddings. Rows = `seq.len()`.
    pub fn embed_sequence(&self, seq: &TokenSequence, text_embs: &[Vec<f32>]) -> Result<Tensor> {
        if text_embs.len() != seq.text_len {
            return Err(Error::Sequence(format!(
                "sequence has {} text slots, got {} embeddings",
                seq.text_len,
                text_embs.len()
            )));
        }
        let total_len = seq.len();
        if total_len > self.cfg.context_len {
            return Err(Error::Sequence(format!(
                "sequence length {total_len} exceeds context {}",
                self.cfg.context_len
            )));
        }
        if seq.ids.is_empty() {
            return Err(Error::Sequence("empty sequence".into()));
        }
        let dev = self.device();
        let mut rows: Vec<Tensor> = Vec::with_capacity(total_len);
        let embed_id = |id: u32| -> Result<Tensor> {
            let idx = Tensor::from_vec(vec![id], 1, dev)?;
            Ok(self.tok_emb.forward(&idx)?.squeeze(0)?)
        };
        // layout: <SOS>, text slots, <BOS>, pairs..., <EOS>
        rows.push(embed_id(seq.ids[0])?);
        for emb in text_embs {
            if emb.len() != self.cfg.d_text {
                return Err(Error::invalid(format!(
                    "text embedding width {} != configured {}",
                    emb.len(),
                    self.cfg.d_text
                )));
            }
            let t = Tensor::from_vec(emb.clone(), (1, self.cfg.d_text), dev)?;
            rows.push(self.text_proj.forward(&t)?.squeeze(0)?);
        }
        for &id in &seq.ids[1..] {
            rows.push(embed_id(id)?);
        }
        let x = Tensor::stack(&rows, 0)?; // (T, d)
        let pos: Vec<u32> = (0..total_len as u32).collect();
        let pos_t = Tensor::from_vec(pos, total_len, dev)?;
        Ok(x.add(&self.pos_emb.forward(&pos_t)?)?)
    }

    /// Causal transformer over embedded inputs `(B, T, d)`.
    fn forward_hidden(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let h_heads = self.cfg.n_heads;
        let hd = d / h_heads;
        let mask = causal_mask(t, x.device())?;
        let mut h = x.clone();
        for blk in &self.blocks {
            let normed = blk.ln1.forward(&h)?;
            let qkv = blk.qkv.forward(&normed)?; // (B, T, 3d)
            let qkv = qkv.reshape((b, t, 3, h_heads, hd))?;
            let q = qkv.i((.., .., 0))?.permute((0, 2, 1, 3))?.contiguous()?; // (B, H, T, hd)
            let k = qkv.i((.., .., 1))?.permute((0, 2, 1, 3))?.contiguous()?;
            let v = qkv.i((.., .., 2))?.permute((0, 2, 1, 3))?.contiguous()?;
            let att = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? / (hd as f64).sqrt())?;
            let att = att.broadcast_add(&mask)?;
            let att = candle_nn::ops::softmax(&att, 3)?;
            let ctx = att.matmul(&v)?; // (B, H, T, hd)
            let merged = ctx.permute((0, 2, 1, 3))?.contiguous()?.reshape((b, t, d))?;
            h = (h + blk.attn_out.forward(&merged)?)?;
            let normed = blk.ln2.forward(&h)?;
            let mlp = blk.mlp2.forward(&blk.mlp1.forward(&normed)?.relu()?)?;
            h = (h + mlp)?;
        }
        Ok(self.ln_f.forward(&h)?)
    }

    /// Logits for selected flat slots of the hidden states, through the tied
    /// embedding matrix: `(N, vocab)`.
    fn logits_at(&self, hidden: &Tensor, flat_slots: &[u32]) -> Result<Tensor> {
        let (b, t, d) = hidden.dims3()?;
        let flat = hidden.reshape((b * t, d))?;
        let idx = Tensor::from_vec(flat_slots.to_vec(), flat_slots.len(), hidden.device())?;
        let selected = flat.index_select(&idx, 0)?;
        let w = self.tok_emb.embeddings(); // (V, d)
        Ok(selected.matmul(&w.t()?.contiguous()?)?)
    }

    /// Mean causal cross-entropy over target slots of a batch of sequences.
    /// Only tokens after `<BOS>` (including `<EOS>`) are targets.
    pub fn causal_loss(&self, batch: &[(TokenSequence, Vec<Vec<f32>>)]) -> Result<Tensor> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let max_t = batch.iter().map(|(s, _)| s.len()).max().unwrap();
        let d = self.cfg.d_model;
        let dev = self.device();
        let mut embedded = Vec::with_capacity(batch.len());
        let mut slots: Vec<u32> = Vec::new();
        let mut targets: Vec<u32> = Vec::new();
        for (bi, (seq, text)) in batch.iter().enumerate() {
            let x = self.embed_sequence(seq, text)?; // (T, d)
            let t = seq.len();
            let padded = if t < max_t {
                Tensor::cat(&[x, Tensor::zeros((max_t - t, d), DType::F32, dev)?], 0)?
            } else {
                x
            };
            embedded.push(padded);
            // slot t_text+1 is <BOS>; predictions start there
            let bos_slot = seq.text_len + 1;
            for i in bos_slot..t - 1 {
                slots.push((bi * max_t + i) as u32);
                // ids vector excludes text slots: id index for slot i
                let id_idx = i - seq.text_len;
                // slot i holds ids[id_idx]; the target is the next id
                targets.push(seq.ids[id_idx + 1]);
            }
        }
        let x = Tensor::stack(&embedded, 0)?;
        let hidden = self.forward_hidden(&x)?;
        let logits = self.logits_at(&hidden, &slots)?;
        let target_t = Tensor::from_vec(targets, slots.len(), dev)?;
        Ok(candle_nn::loss::cross_entropy(&logits, &target_t)?)
    }

    /// Next-token logits after a (single) embedded prefix.
    fn next_logits(&self, x: &Tensor) -> Result<Vec<f32>> {
        let (t, _) = x.dims2()?;
        let hidden = self.forward_hidden(&x.unsqueeze(0)?)?;
        let logits = self.logits_at(&hidden, &[(t - 1) as u32])?;
        Ok(logits.squeeze(0)?.to_vec1()?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.store.save(&dir.join("art.safetensors"))?;
        std::fs::write(dir.join("art_config.json"), serde_json::to_string_pretty(&self.cfg)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("art_config.json");
        if !cfg_path.exists() {
            return Err(Error::MissingArtifact(cfg_path));
        }
        let cfg: ArtConfig = serde_json::from_str(&std::fs::read_to_string(cfg_path)?)?;
        let mut model = ArtModel::new(cfg, 0)?;
        model.store.load(&dir.join("art.safetensors"))?;
        Ok(model)
    }
}

fn causal_mask(t: usize, dev: &Device) -> Result<Tensor> {
    let mut data = vec![0f32; t * t];
    for i in 0..t {
        for j in i + 1..t {
            data[i * t + j] = f32::NEG_INFINITY;
        }
    }
    Ok(Tensor::from_vec(data, (t, t), dev)?)
}

/// Token class legal for the next sampled slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextSlot {
    /// After `<BOS>` or a code token: a position id or `<EOS>`.
    PositionOrEos,
    /// After a position token: a code id only.
    Code,
}

/// Masks ids outside the legal class for the next slot to `-inf`.
pub fn constrain_logits(logits: &mut [f32], vocab: &Vocabulary, next: NextSlot) {
    let n_codes = vocab.n_codes as usize;
    let pos_end = n_codes + Vocabulary::N_POSITIONS as usize;
    for (id, logit) in logits.iter_mut().enumerate() {
        let legal = match next {
            NextSlot::PositionOrEos => (n_codes..pos_end).contains(&id) || id == vocab.eos() as usize,
            NextSlot::Code => id < n_codes,
        };
        if !legal {
            *logit = f32::NEG_INFINITY;
        }
    }
}

/// Nucleus sampling: keeps the smallest prefix of the sorted distribution
/// with cumulative probability >= `top_p` and renormalizes. `top_p <= 0`
/// degenerates to greedy argmax.
pub fn sample_top_p(logits: &[f32], top_p: f64, temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut probs: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.is_finite())
        .map(|(i, &l)| (i, (((l - max) as f64) / temperature).exp()))
        .collect();
    let z: f64 = probs.iter().map(|(_, p)| p).sum();
    for p in probs.iter_mut() {
        p.1 /= z;
    }
    probs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    if top_p <= 0.0 {
        return probs[0].0;
    }
    let mut kept = 0;
    let mut acc = 0.0;
    for (i, (_, p)) in probs.iter().enumerate() {
        acc += p;
        kept = i + 1;
        if acc >= top_p {
            break;
        }
    }
    let kept_probs = &probs[..kept];
    let z: f64 = kept_probs.iter().map(|(_, p)| p).sum();
    let mut draw = rng.gen_range(0.0..1.0) * z;
    for (i, p) in kept_probs {
        draw -= p;
        if draw <= 0.0 {
            return *i;
        }
    }
    kept_probs.last().unwrap().0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateParams {
    pub top_p: f64,
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams { top_p: 0.9, temperature: 1.0, max_len: CONTEXT_LEN, seed: 0 }
    }
}

/// Autoregressive generation: seeds the sequence with `<SOS>`, the prompt's
/// text embeddings, `<BOS>` and the context pairs verbatim, then samples
/// until `<EOS>` or the length budget. When the budget cannot fit another
/// full pair, `<EOS>` is emitted so outputs always parse strictly.
pub fn generate(
    model: &ArtModel,
    text_encoder: &dyn TextEncoderAdapter,
    prompt: &str,
    context: &[TokenPair],
    params: &GenerateParams,
) -> Result<TokenSequence> {
    let vocab = &model.cfg.vocab;
    let text_embs = text_encoder.encode(prompt);
    let text_len = text_embs.len();
    let max_len = params.max_len.min(model.cfg.context_len);
    // prefix ids: <SOS> <BOS> pairs...
    let mut ids = vec![vocab.sos(), vocab.bos()];
    for pair in context {
        if pair.code >= vocab.n_codes {
            return Err(Error::Sequence(format!("context code {} out of range", pair.code)));
        }
        ids.push(vocab.position_token(pair.anchor));
        ids.push(pair.code);
    }
    if text_len + ids.len() + 1 > max_len {
        return Err(Error::Sequence("context does not fit the length budget".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut next = NextSlot::PositionOrEos;
    loop {
        let total_len = text_len + ids.len();
        // stop with <EOS> while it is still legal to do so: a further pair
        // needs room for position, code and the final <EOS>
        if next == NextSlot::PositionOrEos && total_len + 3 > max_len {
            ids.push(vocab.eos());
            break;
        }
        let seq = TokenSequence { ids: ids.clone(), text_len };
        let x = model.embed_sequence(&seq, &text_embs)?;
        let mut logits = model.next_logits(&x)?;
        if model.cfg.grammar_mask {
            constrain_logits(&mut logits, vocab, next);
        }
        let id = sample_top_p(&logits, params.top_p, params.temperature, &mut rng) as u32;
        ids.push(id);
        match vocab.classify(id)? {
            TokenKind::Eos => break,
            TokenKind::Position => next = NextSlot::Code,
            TokenKind::Code => next = NextSlot::PositionOrEos,
            other => {
                return Err(Error::Sequence(format!("sampled illegal token kind {other:?}")));
            }
        }
    }
    Ok(TokenSequence { ids, text_len })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtTrainParams {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub early_stop_loss: Option<f64>,
    pub log_every: usize,
}

impl Default for ArtTrainParams {
    fn default() -> Self {
        ArtTrainParams { steps: 2000, batch_size: 8, lr: 6e-4, seed: 0, early_stop_loss: None, log_every: 25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtTrainReport {
    pub steps_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains the causal LM on tokenized samples. Sequences are built with
/// [`build_sequence`]; prompts are embedded through the adapter.
pub fn train_art(
    samples: &[TokenizedSample],
    text_encoder: &dyn TextEncoderAdapter,
    cfg: ArtConfig,
    params: &ArtTrainParams,
    out_dir: Option<&Path>,
) -> Result<(ArtModel, ArtTrainReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    let model = ArtModel::new(cfg, params.seed)?;
    let vocab = model.cfg.vocab.clone();
    let mut prepared: Vec<(TokenSequence, Vec<Vec<f32>>)> = Vec::with_capacity(samples.len());
    for s in samples {
        let text = text_encoder.encode(&s.prompt);
        let seq = build_sequence(&vocab, text.len(), &s.token_pairs()?)?;
        if seq.len() > model.cfg.context_len {
            return Err(Error::Sequence(format!("sample {} exceeds the context length", s.source_id)));
        }
        prepared.push((seq, text));
    }
    let mut opt = candle_nn::AdamW::new_lr(model.all_vars(), params.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6172_7421);
    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(std::io::BufWriter::new(std::fs::File::create(dir.join("art_metrics.jsonl"))?))
        }
        None => None,
    };
    let mut initial_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    let mut steps_run = 0;
    for step in 1..=params.steps {
        let bsz = params.batch_size.min(prepared.len());
        let batch: Vec<(TokenSequence, Vec<Vec<f32>>)> = (0..bsz)
            .map(|_| prepared[rng.gen_range(0..prepared.len())].clone())
            .collect();
        let loss = model.causal_loss(&batch)?;
        let loss_val = loss.to_scalar::<f32>()? as f64;
        if step == 1 {
            initial_loss = loss_val;
        }
        opt.backward_step(&loss)?;
        final_loss = loss_val;
        steps_run = step;
        if let Some(log) = log.as_mut() {
            if step % params.log_every == 0 || step == 1 {
                serde_json::to_writer(&mut *log, &serde_json::json!({"step": step, "loss": loss_val}))?;
                log.write_all(b"\n")?;
            }
        }
        if params.early_stop_loss.map(|t| loss_val < t).unwrap_or(false) {
            break;
        }
    }
    if let Some(mut log) = log {
        log.flush()?;
    }
    if let Some(dir) = out_dir {
        model.save(dir)?;
    }
    Ok((model, ArtTrainReport { steps_run, initial_loss, final_loss }))
}
