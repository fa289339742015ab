//! Command-line front end for the raster-supervised vector graphics
//! pipeline: corpus preparation, the two training stages, sampling and
//! evaluation. Exit codes: 0 success, 2 usage error, 3 runtime failure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use strokegen::art::{self, ArtModel, GenerateParams, HashTextEncoder, TextEncoderAdapter};
use strokegen::codec::{filter_by_length, parse_sequence, TokenPair, TokenizedSample};
use strokegen::config::PipelineConfig;
use strokegen::dataprep::{
    self, build_prompt, center_patch, extract_contours, read_corpus, split_strokes, write_corpus,
    Dataset, PatchRecord, PromptMeta, RasterPatchData, SampleRecord,
};
use strokegen::eval::{self, HashProjectionEmbedder};
use strokegen::fsq::FsqCode;
use strokegen::postproc::{self, PostprocConfig, PostprocMode};
use strokegen::raster::{render_path, RasterPatch};
use strokegen::svg::{document_to_svg, parse_svg, VectorDocument};
use strokegen::vsq::{self, VsqModel};
use strokegen::{Error, Result};

#[derive(Parser)]
#[command(name = "strokegen", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Pipeline configuration TOML; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dot-path configuration overrides, e.g. `--set vsq.alpha=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        PipelineConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a training corpus of anchored stroke patches.
    Preprocess {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
        /// Source dataset kind.
        #[arg(long)]
        dataset: Option<Dataset>,
        /// Directory of PNG images (non-synthetic datasets).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Number of samples to synthesize.
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum stroke arc length as a fraction of the canvas.
        #[arg(long)]
        max_len_fraction: Option<f64>,
        /// Tiles per side when decomposing full images.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Train the quantized stroke autoencoder on a corpus.
    TrainVsq {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        early_stop_mse: Option<f64>,
    },
    /// Encode a corpus into position/code token records.
    Tokenize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        corpus: PathBuf,
        /// Directory holding the trained autoencoder checkpoint.
        #[arg(long)]
        vsq: PathBuf,
        /// Output JSONL file of tokenized samples.
        #[arg(long)]
        out: PathBuf,
        /// Drop samples with fewer code tokens than this.
        #[arg(long, default_value_t = 10)]
        min_code_tokens: usize,
    },
    /// Train the autoregressive token model.
    TrainArt {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Tokenized corpus (JSONL).
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        early_stop_loss: Option<f64>,
    },
    /// Sample SVG documents from a text prompt.
    Generate {
        #[command(flatten)]
        gen: GenerateArgs,
    },
    /// Complete a partial SVG document under a text prompt.
    Complete {
        #[command(flatten)]
        gen: GenerateArgs,
        /// Existing strokes to continue from.
        #[arg(long)]
        context_svg: PathBuf,
    },
    /// Post-process an SVG document (path clipping or interpolation).
    Postproc {
        /// pc = clip endpoints together, pi = insert connectors, none = copy.
        #[arg(long, value_enum, default_value = "pc")]
        mode: CliPostprocMode,
        /// Connection threshold in normalized canvas units.
        #[arg(long, default_value_t = 8.0 / 256.0)]
        max_dist: f64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Compare a generated image set against a reference set.
    Evaluate {
        /// Directory of reference PNGs.
        #[arg(long)]
        real: PathBuf,
        /// Directory of generated PNGs.
        #[arg(long)]
        generated: PathBuf,
        /// Optional JSON report path (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Codebook usage statistics over a tokenized corpus.
    CodebookStats {
        /// Tokenized corpus (JSONL).
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long, default_value_t = 4375)]
        codebook_size: u32,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Directory holding the trained token-model checkpoint.
    #[arg(long)]
    art: PathBuf,
    /// Directory holding the trained autoencoder checkpoint (decodes codes
    /// back to geometry).
    #[arg(long)]
    vsq: PathBuf,
    #[arg(long)]
    prompt: String,
    /// Existing strokes to condition on.
    #[arg(long)]
    context_svg: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    n_samples: usize,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample from raw logits without the grammar constraint.
    #[arg(long)]
    no_grammar_mask: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CliPostprocMode {
    Pc,
    Pi,
    None,
}

impl From<CliPostprocMode> for PostprocMode {
    fn from(m: CliPostprocMode) -> Self {
        match m {
            CliPostprocMode::Pc => PostprocMode::Pc,
            CliPostprocMode::Pi => PostprocMode::Pi,
            CliPostprocMode::None => PostprocMode::None,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(3);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { cfg, out, dataset, input, n_samples, seed, max_len_fraction, grid } => {
            let mut pipeline = cfg.load()?;
            if let Some(d) = dataset {
                pipeline.dataprep.dataset = d;
            }
            if let Some(n) = n_samples {
                pipeline.dataprep.n_samples = n;
            }
            if let Some(s) = seed {
                pipeline.dataprep.seed = s;
            }
            if let Some(f) = max_len_fraction {
                pipeline.dataprep.max_len_fraction = f;
            }
            if let Some(g) = grid {
                pipeline.dataprep.grid = g;
            }
            pipeline.validate()?;
            cmd_preprocess(&pipeline, input.as_deref(), &out)
        }
        Command::TrainVsq { cfg, corpus, out, steps, lr, seed, early_stop_mse } => {
            let mut pipeline = cfg.load()?;
            if let Some(v) = steps {
                pipeline.vsq_train.steps = v;
            }
            if let Some(v) = lr {
                pipeline.vsq_train.lr = v;
            }
            if let Some(v) = seed {
                pipeline.vsq_train.seed = v;
            }
            if early_stop_mse.is_some() {
                pipeline.vsq_train.early_stop_mse = early_stop_mse;
            }
            cmd_train_vsq(&pipeline, &corpus, &out)
        }
        Command::Tokenize { cfg, corpus, vsq, out, min_code_tokens } => {
            let pipeline = cfg.load()?;
            cmd_tokenize(&pipeline, &corpus, &vsq, &out, min_code_tokens)
        }
        Command::TrainArt { cfg, tokens, out, steps, lr, seed, batch_size, early_stop_loss } => {
            let mut pipeline = cfg.load()?;
            if let Some(v) = steps {
                pipeline.art_train.steps = v;
            }
            if let Some(v) = lr {
                pipeline.art_train.lr = v;
            }
            if let Some(v) = seed {
                pipeline.art_train.seed = v;
            }
            if let Some(v) = batch_size {
                pipeline.art_train.batch_size = v;
            }
            if early_stop_loss.is_some() {
                pipeline.art_train.early_stop_loss = early_stop_loss;
            }
            cmd_train_art(&pipeline, &tokens, &out)
        }
        Command::Generate { gen } => cmd_generate(gen, None),
        Command::Complete { gen, context_svg } => cmd_generate(gen, Some(context_svg)),
        Command::Postproc { mode, max_dist, input, output } => {
            let doc = parse_svg(&std::fs::read_to_string(&input)?)?;
            let cfg = PostprocConfig { mode: mode.into(), max_dist };
            let processed = postproc::apply(&doc, &cfg)?;
            std::fs::write(&output, document_to_svg(&processed))?;
            println!("{}", serde_json::json!({"input": input, "output": output, "strokes": processed.strokes.len()}));
            Ok(())
        }
        Command::Evaluate { real, generated, out } => cmd_evaluate(&real, &generated, out.as_deref()),
        Command::CodebookStats { tokens, codebook_size } => cmd_codebook_stats(&tokens, codebook_size),
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_preprocess(cfg: &PipelineConfig, input: Option<&Path>, out: &Path) -> Result<()> {
    let dp = &cfg.dataprep;
    let records = match dp.dataset {
        Dataset::Synthetic => {
            let mut synth = dp.synthetic;
            synth.split_budget = dp.max_len_fraction;
            synth.render = cfg.render;
            dataprep::generate_synthetic_corpus(dp.n_samples, dp.seed, &synth)?
        }
        _ => {
            let input = input.ok_or_else(|| Error::invalid("non-synthetic datasets need --input"))?;
            preprocess_images(cfg, input)?
        }
    };
    write_corpus(out, &records)?;
    cfg.write_manifest(out)?;
    let n_patches: usize = records.iter().map(|r| r.patches.len()).sum();
    println!("{}", serde_json::json!({"samples": records.len(), "patches": n_patches, "out": out}));
    Ok(())
}

/// Vectorizes raster images: tile, trace contours, split to bounded-length
/// strokes, center each stroke on its own patch. Prompt metadata comes from
/// the file stem (mnist: class digit; fonts: `<glyph>_<style>`).
fn preprocess_images(cfg: &PipelineConfig, input: &Path) -> Result<Vec<SampleRecord>> {
    let dp = &cfg.dataprep;
    let mut records = Vec::new();
    for file in png_files(input)? {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("sample").to_string();
        let img = RasterPatch::load_png(&file)?;
        let tiles = dataprep::tile_grid(&img, dp.grid, dp.grid, &stem)?;
        let mut patches: Vec<PatchRecord> = Vec::new();
        for tile in &tiles {
            let pixels = tile.patch.pixels.as_ref().expect("tile carries pixels");
            for contour in extract_contours(pixels) {
                if contour.len() < 2 {
                    continue;
                }
                for piece in split_strokes(&contour, dp.max_len_fraction)? {
                    if let Some(centered) = center_patch(&piece, dp.synthetic.stroke_width, &cfg.render)? {
                        let idx = patches.len();
                        patches.push(PatchRecord {
                            patch: RasterPatchData { pixels: Some(centered.patch), file: format!("{stem}_{idx}.png") },
                            anchor: centered.anchor,
                            source_id: stem.clone(),
                            geometry: Some(centered.path),
                        });
                    }
                }
            }
        }
        let meta = prompt_meta_from_stem(dp.dataset, &stem);
        let prompt = build_prompt(dp.dataset, &meta)?;
        records.push(SampleRecord {
            source_id: stem,
            prompt,
            class_label: meta.class_label.unwrap_or_default(),
            patches,
        });
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("no PNG images found under {}", input.display())));
    }
    Ok(records)
}

fn prompt_meta_from_stem(dataset: Dataset, stem: &str) -> PromptMeta {
    match dataset {
        Dataset::Fonts => {
            let mut parts = stem.splitn(2, '_');
            let glyph = parts.next().and_then(|s| s.chars().next());
            let style = parts.next().unwrap_or("regular").to_string();
            PromptMeta { class_label: glyph.map(String::from), glyph, style: Some(style) }
        }
        _ => {
            // class label up to a trailing index suffix, e.g. "7_0013" -> "7"
            let class = stem.split('_').next().unwrap_or(stem).to_string();
            PromptMeta { class_label: Some(class), ..Default::default() }
        }
    }
}

fn corpus_patches(corpus: &Path) -> Result<(Vec<SampleRecord>, Vec<RasterPatch>)> {
    let records = read_corpus(corpus)?;
    let patches: Vec<RasterPatch> = records
        .iter()
        .flat_map(|r| r.patches.iter())
        .filter_map(|p| p.patch.pixels.clone())
        .collect();
    if patches.is_empty() {
        return Err(Error::invalid("corpus contains no patches"));
    }
    Ok((records, patches))
}

fn cmd_train_vsq(cfg: &PipelineConfig, corpus: &Path, out: &Path) -> Result<()> {
    let (_, patches) = corpus_patches(corpus)?;
    let (_, report) = vsq::train_vsq(&patches, cfg.vsq.clone(), &cfg.vsq_train, Some(out))?;
    cfg.write_manifest(out)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_tokenize(cfg: &PipelineConfig, corpus: &Path, vsq_dir: &Path, out: &Path, min_code_tokens: usize) -> Result<()> {
    let model = VsqModel::load(vsq_dir)?;
    if model.cfg.xi != 1 {
        return Err(Error::invalid(
            "tokenize expects one code per patch (vsq.xi = 1); multi-code patches have no single-token encoding",
        ));
    }
    let records = read_corpus(corpus)?;
    let mut samples = Vec::with_capacity(records.len());
    for rec in &records {
        let mut pairs = Vec::with_capacity(rec.patches.len());
        for p in &rec.patches {
            let pixels = p
                .patch
                .pixels
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("patch {} has no pixels", p.patch.file)))?;
            let codes = model.encode_patch(pixels)?;
            pairs.push([p.anchor.x, p.anchor.y, codes[0].index]);
        }
        samples.push(TokenizedSample { source_id: rec.source_id.clone(), prompt: rec.prompt.clone(), pairs });
    }
    let text_encoder = HashTextEncoder::new(cfg.art.d_text);
    let (kept, report) = filter_by_length(samples, |s| text_encoder.encode(&s.prompt).len(), 1, min_code_tokens);
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    for s in &kept {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn read_tokenized(path: &Path) -> Result<Vec<TokenizedSample>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut samples = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            samples.push(serde_json::from_str(&line)?);
        }
    }
    Ok(samples)
}

fn cmd_train_art(cfg: &PipelineConfig, tokens: &Path, out: &Path) -> Result<()> {
    let samples = read_tokenized(tokens)?;
    let text_encoder = HashTextEncoder::new(cfg.art.d_text);
    let (_, report) = art::train_art(&samples, &text_encoder, cfg.art.clone(), &cfg.art_train, Some(out))?;
    cfg.write_manifest(out)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

/// Encodes the strokes of an existing document into context token pairs by
/// rendering each stroke patch and running it through the autoencoder.
fn encode_context(doc: &VectorDocument, model: &VsqModel, cfg: &PipelineConfig) -> Result<Vec<TokenPair>> {
    let mut pairs = Vec::with_capacity(doc.strokes.len());
    for (path, anchor) in &doc.strokes {
        let patch = render_path(path, &cfg.render)?;
        let codes = model.encode_patch(&patch)?;
        pairs.push(TokenPair { anchor: *anchor, code: codes[0].index });
    }
    Ok(pairs)
}

fn cmd_generate(args: GenerateArgs, required_context: Option<PathBuf>) -> Result<()> {
    let pipeline = args.cfg.load()?;
    let mut art_model = ArtModel::load(&args.art)?;
    art_model.cfg.grammar_mask = !args.no_grammar_mask;
    let vsq_model = VsqModel::load(&args.vsq)?;
    if vsq_model.cfg.xi != 1 {
        return Err(Error::invalid("generation expects a vsq.xi = 1 autoencoder"));
    }
    let context_path = required_context.or(args.context_svg);
    let context = match &context_path {
        Some(p) => {
            let doc = parse_svg(&std::fs::read_to_string(p)?)?;
            encode_context(&doc, &vsq_model, &pipeline)?
        }
        None => Vec::new(),
    };
    let params = GenerateParams {
        top_p: args.top_p.unwrap_or(pipeline.generate.top_p),
        temperature: args.temperature.unwrap_or(pipeline.generate.temperature),
        max_len: art_model.cfg.context_len,
        seed: args.seed.unwrap_or(pipeline.generate.seed),
    };
    let text_encoder = HashTextEncoder::new(art_model.cfg.d_text);
    std::fs::create_dir_all(&args.out)?;
    let vocab = art_model.cfg.vocab.clone();
    let mut outputs = Vec::new();
    for i in 0..args.n_samples {
        let sample_params = GenerateParams { seed: params.seed.wrapping_add(i as u64), ..params.clone() };
        let seq = art::generate(&art_model, &text_encoder, &args.prompt, &context, &sample_params)?;
        let pairs = parse_sequence(&vocab, &seq, false)?;
        let mut doc = VectorDocument::new(256);
        for pair in &pairs {
            let code = FsqCode::from_index(pair.code, &vsq_model.cfg.fsq)?;
            let path = vsq_model.decode_codes(&[code])?;
            doc.strokes.push((path, pair.anchor));
        }
        let file = args.out.join(format!("sample_{i:03}.svg"));
        std::fs::write(&file, document_to_svg(&doc))?;
        outputs.push(serde_json::json!({"file": file, "strokes": pairs.len()}));
    }
    println!("{}", serde_json::json!({"prompt": args.prompt, "samples": outputs}));
    Ok(())
}

fn cmd_evaluate(real: &Path, generated: &Path, out: Option<&Path>) -> Result<()> {
    let load_set = |dir: &Path| -> Result<Vec<(String, RasterPatch)>> {
        png_files(dir)?
            .into_iter()
            .map(|p| {
                let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                Ok((name, RasterPatch::load_png(&p)?))
            })
            .collect()
    };
    let real_set = load_set(real)?;
    let gen_set = load_set(generated)?;
    if real_set.is_empty() || gen_set.is_empty() {
        return Err(Error::invalid("both image sets must be non-empty"));
    }
    // pixel MSE over images sharing a file name
    let mut mse_pairs = Vec::new();
    for (name, img) in &gen_set {
        if let Some((_, reference)) = real_set.iter().find(|(n, _)| n == name) {
            mse_pairs.push((reference.clone(), img.clone()));
        }
    }
    let mean_mse = if mse_pairs.is_empty() { None } else { Some(eval::mean_mse(&mse_pairs)?) };
    let embedder = HashProjectionEmbedder::default();
    let embed_all = |set: &[(String, RasterPatch)]| -> Result<Vec<Vec<f64>>> {
        set.iter().map(|(_, img)| eval::EmbeddingAdapter::embed_image(&embedder, img)).collect()
    };
    let fid = eval::fid(&embed_all(&real_set)?, &embed_all(&gen_set)?)?;
    // prompts from file stems: "capital-a" -> "capital a"
    let prompt_pairs: Vec<(String, RasterPatch)> = gen_set
        .iter()
        .map(|(name, img)| (name.replace(['-', '_'], " "), img.clone()))
        .collect();
    let clip = eval::clip_score(&embedder, &prompt_pairs)?;
    let report = serde_json::json!({
        "n_real": real_set.len(),
        "n_generated": gen_set.len(),
        "paired_mse": mean_mse,
        "fid": fid,
        "clip_score": clip,
    });
    let text = serde_json::to_string_pretty(&report)?;
    match out {
        Some(path) => std::fs::write(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_codebook_stats(tokens: &Path, codebook_size: u32) -> Result<()> {
    let samples = read_tokenized(tokens)?;
    let all_codes: Vec<u32> = samples.iter().flat_map(|s| s.pairs.iter().map(|p| p[2])).collect();
    let stats = eval::codebook_usage(all_codes.iter().copied(), codebook_size)?;
    let mut classed: std::collections::HashMap<String, Vec<u32>> = std::collections::HashMap::new();
    for s in &samples {
        classed.entry(s.prompt.clone()).or_default().extend(s.pairs.iter().map(|p| p[2]));
    }
    let by_class = eval::codebook_usage_by_class(&classed, codebook_size)?;
    let per_class: serde_json::Map<String, serde_json::Value> = by_class
        .into_iter()
        .map(|(class, s)| {
            (
                class,
                serde_json::json!({
                    "total_tokens": s.total_tokens,
                    "used_codes": s.used_codes,
                    "usage_fraction": s.usage_fraction,
                }),
            )
        })
        .collect();
    let report = serde_json::json!({
        "codebook_size": stats.codebook_size,
        "total_tokens": stats.total_tokens,
        "used_codes": stats.used_codes,
        "usage_fraction": stats.usage_fraction,
        "top_16_share": stats.top_share(16),
        "per_class": per_class,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
