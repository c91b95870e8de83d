//! `leafcat` command line: corpus generation, training, prediction and
//! evaluation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use leafcat::classifier::{load_model, save_model, train, FeatureExtractorConfig, TrainConfig};
use leafcat::corpus::{
    compute_stats, format_stats_table, generate_annotations, load_annotations, render_page, save_annotations, Annotation,
    SyntheticConfig,
};
use leafcat::evaluation::{curves_csv, export_curves, format_summary_table, metrics_at, threshold_sweep, Metrics};
use leafcat::masking::RasterImage;
use leafcat::ocr::PostprocessConfig;
use leafcat::pipeline::{
    eval_samples, list_pages, score_pages, training_samples, OcrKind, Pipeline, PipelineConfig, PipelineError, PromotionResult,
};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Exit code for malformed command lines.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for failures while running a command.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "leafcat", version, about = "Promotion categorization for retail leaflets")]
struct Cli {
    /// Pipeline settings (TOML). Paths inside are relative to the file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus: one PNG per page plus annotations.json.
    Generate(GenerateArgs),
    /// Train a classifier on the annotated region texts.
    Train(TrainArgs),
    /// Run the pipeline on a page or a directory of pages; prints JSON lines.
    Predict(PredictArgs),
    /// Print precision, recall and accuracy.
    Evaluate(EvaluateArgs),
    /// Print per-threshold metrics as CSV.
    Sweep(SweepArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    images: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Seed for the category word lists. Corpora that share it share
    /// vocabularies, so a model trained on one applies to the other.
    #[arg(long, default_value_t = 7)]
    vocabulary_seed: u64,
    #[arg(long, default_value_t = 20)]
    categories: usize,
    #[arg(long, default_value_t = 1.2)]
    zipf: f64,
    #[arg(long, default_value_t = 0.3)]
    multi_label_prob: f64,
    #[arg(long, default_value_t = 0.5)]
    distractor_density: f64,
    #[arg(long, default_value_t = 1)]
    languages: usize,
    #[arg(long, default_value_t = 1)]
    retailers: usize,
    /// Skip rendering; write annotations.json only.
    #[arg(long)]
    annotations_only: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    annotations: PathBuf,
    /// Output model path; defaults to `model` from the config.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    lr_update_rate: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    ngram: usize,
    /// Hash buckets for n-grams.
    #[arg(long, default_value_t = 1 << 21)]
    buckets: usize,
    #[arg(long)]
    no_word_tokens: bool,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model file; overrides `model` from the config.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Worker threads; overrides `jobs` from the config.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// A PNG page or a directory of PNG pages.
    input: PathBuf,
    #[command(flatten)]
    common: ModelArgs,
    /// Ground truth for the mock OCR provider when the config names none.
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Unmasked-paragraph baseline instead of the full pipeline.
    #[arg(long)]
    baseline: bool,
    /// Write JSON lines here instead of stdout.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    annotations: PathBuf,
    #[command(flatten)]
    common: ModelArgs,
    /// Run pipeline and baseline on these page images and compare them.
    #[arg(long, value_name = "DIR", conflicts_with = "predictions")]
    images: Option<PathBuf>,
    /// Score previously written JSON-lines predictions.
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// Decision threshold; defaults to `classify_threshold` from the config.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_name = "FILE")]
    annotations: PathBuf,
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    start: f64,
    #[arg(long, default_value_t = 1.0)]
    end: f64,
    #[arg(long, default_value_t = leafcat::evaluation::DEFAULT_SWEEP_STEP)]
    step: f64,
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Annotation files; one table row each.
    #[arg(required = true, value_name = "FILE")]
    annotations: Vec<PathBuf>,
    /// Row names, in file order; default to the paths as given.
    #[arg(long = "name")]
    names: Vec<String>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            // library errors already include their causes in the message
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), BoxError> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let mut cfg = PipelineConfig::default();
            cfg.apply_env();
            cfg
        }
    };
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a, &config),
        Command::Predict(a) => predict(a, config),
        Command::Evaluate(a) => evaluate(a, config),
        Command::Sweep(a) => sweep(a, &config),
        Command::Stats(a) => stats(a),
    }
}

fn write_stdout(text: &str) -> Result<(), BoxError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), BoxError> {
    let cfg = SyntheticConfig {
        seed: a.seed,
        vocabulary_seed: a.vocabulary_seed,
        images: a.images,
        categories: a.categories,
        zipf_exponent: a.zipf,
        multi_label_prob: a.multi_label_prob,
        distractor_density: a.distractor_density,
        languages: a.languages,
        retailers: a.retailers,
        ..SyntheticConfig::default()
    };
    let anns = generate_annotations(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| format!("cannot create {}: {e}", a.out.display()))?;
    if !a.annotations_only {
        anns.par_iter().try_for_each(|ann| render_page(ann).save_png(&a.out.join(format!("{}.png", ann.image_id))))?;
    }
    let path = a.out.join("annotations.json");
    save_annotations(&anns, &path)?;
    log::info!("wrote {} pages to {}", anns.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs, config: &PipelineConfig) -> Result<(), BoxError> {
    let out = a.model.or_else(|| config.model.clone()).ok_or("no output model: pass --model or set `model` in the config")?;
    let anns = load_annotations(&a.annotations)?;
    let samples = training_samples(&anns, &PostprocessConfig::default());
    let tc = TrainConfig { lr: a.lr, lr_update_rate: a.lr_update_rate, epochs: a.epochs, dim: a.dim, seed: a.seed };
    let fc = FeatureExtractorConfig { ngram_len: a.ngram, bucket_count: a.buckets, include_word_tokens: !a.no_word_tokens };
    let model = train(&samples, &tc, &fc)?;
    save_model(&model, &out)?;
    log::info!("trained on {} samples, saved {}", samples.len(), out.display());
    Ok(())
}

/// Pipeline for prediction or evaluation; the mock OCR provider falls back
/// to `annotations` when the config names no ground-truth file.
fn build_pipeline(mut config: PipelineConfig, common: &ModelArgs, annotations: Option<&Path>) -> Result<Pipeline, PipelineError> {
    if let Some(m) = &common.model {
        config.model = Some(m.clone());
    }
    if let Some(j) = common.jobs {
        config.jobs = j;
    }
    if config.ocr == OcrKind::Mock && config.ocr_annotations.is_none() {
        config.ocr_annotations = annotations.map(Path::to_path_buf);
    }
    Pipeline::from_config(config)
}

fn predict(a: PredictArgs, mut config: PipelineConfig) -> Result<(), BoxError> {
    if a.baseline {
        config.baseline_mode = true;
    }
    let pipeline = build_pipeline(config, &a.common, a.annotations.as_deref())?;
    let pages = if a.input.is_dir() {
        list_pages(&a.input).map_err(|e| format!("cannot list {}: {e}", a.input.display()))?
    } else {
        let id = a.input.file_stem().and_then(|s| s.to_str()).ok_or_else(|| format!("bad page path {}", a.input.display()))?;
        vec![(id.to_string(), a.input.clone())]
    };
    let mut text = String::new();
    for r in pipeline.run_files(&pages) {
        for res in r? {
            text.push_str(&res.to_json_line());
            text.push('\n');
        }
    }
    match &a.output {
        Some(p) => fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display()))?,
        None => write_stdout(&text)?,
    }
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<PromotionResult>, BoxError> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{} line {}: {e}", path.display(), i + 1).into()))
        .collect()
}

fn score_grouped(anns: &[Annotation], results: &[Vec<PromotionResult>]) -> Result<Metrics, BoxError> {
    let pages: Vec<(&[PromotionResult], &Annotation)> = results.iter().map(Vec::as_slice).zip(anns).collect();
    Ok(score_pages(&pages)?)
}

fn evaluate(a: EvaluateArgs, config: PipelineConfig) -> Result<(), BoxError> {
    let anns = load_annotations(&a.annotations)?;
    let threshold = a.threshold.unwrap_or(config.classify_threshold);
    let table = if let Some(pred_path) = &a.predictions {
        let preds = read_predictions(pred_path)?;
        let grouped: Vec<Vec<PromotionResult>> =
            anns.iter().map(|ann| preds.iter().filter(|p| p.image_id == ann.image_id).cloned().collect()).collect();
        format_summary_table(&[("Predictions", score_grouped(&anns, &grouped)?)])
    } else if let Some(dir) = &a.images {
        let mut config = config;
        config.classify_threshold = threshold;
        let pipeline = build_pipeline(config, &a.common, Some(&a.annotations))?;
        let pages: Vec<(String, PathBuf)> =
            anns.iter().map(|ann| (ann.image_id.clone(), dir.join(format!("{}.png", ann.image_id)))).collect();
        let run = |baseline: bool| -> Result<Vec<Vec<PromotionResult>>, BoxError> {
            pages
                .par_iter()
                .map(|(id, path)| {
                    let img = RasterImage::load_png(path).map_err(|e| format!("image {id}: {e}"))?;
                    let r = if baseline { pipeline.run_baseline(&img, id) } else { pipeline.run_pipeline(&img, id) };
                    r.map_err(BoxError::from)
                })
                .collect()
        };
        let jobs = pipeline.config.jobs;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        let (full, base) = pool.install(|| -> Result<_, BoxError> { Ok((run(false)?, run(true)?)) })?;
        format_summary_table(&[
            ("Pipeline (detector + masking + OCR + classifier)", score_grouped(&anns, &full)?),
            ("Baseline (OCR on the wild + classifier)", score_grouped(&anns, &base)?),
        ])
    } else {
        let model_path = a.common.model.or(config.model).ok_or("no model: pass --model or set `model` in the config")?;
        let model = load_model(&model_path)?;
        let samples = eval_samples(&model, &training_samples(&anns, &PostprocessConfig::default()))?;
        format_summary_table(&[("Classifier (annotated regions)", metrics_at(&samples, threshold)?)])
    };
    write_stdout(&table)
}

fn sweep(a: SweepArgs, config: &PipelineConfig) -> Result<(), BoxError> {
    let model_path = a.model.or_else(|| config.model.clone()).ok_or("no model: pass --model or set `model` in the config")?;
    let model = load_model(&model_path)?;
    let anns = load_annotations(&a.annotations)?;
    let samples = eval_samples(&model, &training_samples(&anns, &PostprocessConfig::default()))?;
    let report = threshold_sweep(&samples, a.start, a.end, a.step)?;
    match &a.output {
        Some(p) => export_curves(&report, p)?,
        None => write_stdout(&curves_csv(&report))?,
    }
    eprintln!("best threshold {:.2} (accuracy {:.4})", report.best_threshold, report.best.accuracy);
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), BoxError> {
    if !a.names.is_empty() && a.names.len() != a.annotations.len() {
        return Err(format!("{} names for {} files", a.names.len(), a.annotations.len()).into());
    }
    let mut rows = Vec::new();
    for (i, path) in a.annotations.iter().enumerate() {
        let name = match a.names.get(i) {
            Some(n) => n.clone(),
            None => path.display().to_string(),
        };
        rows.push((name, compute_stats(&load_annotations(path)?)?));
    }
    let refs: Vec<(&str, &_)> = rows.iter().map(|(n, s)| (n.as_str(), s)).collect();
    write_stdout(&format_stats_table(&refs))
}
