//! End-to-end page processing: detect → mask → OCR → clean → classify, and
//! the unmasked-paragraph baseline.

mod config;
mod scoring;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{decode_labels, load_model, ClassifierError, ClassifierModel};
use crate::corpus::{Annotation, CategoryId};
use crate::detector::{detect_regions, DetectionConfig, ProposalProvider};
use crate::evaluation::EvalSample;
use crate::geometry::BBox;
use crate::masking::{apply_mask, RasterImage};
use crate::ocr::{cluster_paragraphs, group_words, postprocess, MockOcr, OcrProvider, PostprocessConfig, RemoteOcr};

pub use config::{DetectorKind, OcrKind, PipelineConfig, OCR_API_KEY_ENV};
pub use scoring::{match_results, score_pages, MATCH_IOU};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    LoadImage,
    Detect,
    Ocr,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::LoadImage => "image loading",
            Stage::Detect => "detection",
            Stage::Ocr => "OCR",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {origin}: {message}")]
    Config { origin: String, message: String },
    #[error("model: {0}")]
    Model(#[from] ClassifierError),
    #[error("{stage} failed for image {image_id}: {source}")]
    Stage {
        stage: Stage,
        image_id: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl PipelineError {
    fn stage(stage: Stage, image_id: &str, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        PipelineError::Stage { stage, image_id: image_id.to_string(), source: Box::new(source) }
    }
}

/// One promotion found on a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionResult {
    pub image_id: String,
    /// Detected region, or the OCR paragraph box in baseline mode.
    #[serde(rename = "box")]
    pub region: Option<BBox>,
    pub text: String,
    /// Probability per category id.
    pub probabilities: BTreeMap<CategoryId, f64>,
    /// Decoded categories, ascending.
    pub categories: Vec<CategoryId>,
}

impl PromotionResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

/// A configured pipeline with its providers and model loaded.
pub struct Pipeline {
    pub config: PipelineConfig,
    detector: Box<dyn ProposalProvider>,
    ocr: Box<dyn OcrProvider>,
    model: ClassifierModel,
    post: PostprocessConfig,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        detector: Box<dyn ProposalProvider>,
        ocr: Box<dyn OcrProvider>,
        model: ClassifierModel,
        post: PostprocessConfig,
    ) -> Self {
        Pipeline { config, detector, ocr, model, post }
    }

    /// Builds providers and loads the model and dictionary named in `config`.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        let cfg_err = |message: String| PipelineError::Config { origin: "pipeline".into(), message };
        config.validate().map_err(cfg_err)?;
        let model_path = config.model.clone().ok_or_else(|| cfg_err("no model path configured".into()))?;
        let model = load_model(&model_path)?;
        let ocr: Box<dyn OcrProvider> = match config.ocr {
            OcrKind::Mock => {
                let path =
                    config.ocr_annotations.clone().ok_or_else(|| cfg_err("ocr = \"mock\" needs ocr_annotations".into()))?;
                let mut m = MockOcr::from_file(path);
                m.paragraph_gap_factor = config.paragraph_gap_factor;
                Box::new(m)
            }
            OcrKind::Remote => Box::new(RemoteOcr::new(config.remote_ocr()).map_err(|e| cfg_err(e.to_string()))?),
        };
        let mut post = PostprocessConfig {
            max_edit_distance: config.max_edit_distance,
            min_token_len_for_correction: config.min_token_len_for_correction,
            ..PostprocessConfig::default()
        };
        if let Some(d) = &config.dictionary {
            post.dictionary =
                PostprocessConfig::load_dictionary(d).map_err(|e| cfg_err(format!("dictionary {}: {e}", d.display())))?;
        }
        let detector = config.proposal_source().build();
        Ok(Pipeline { config, detector, ocr, model, post })
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    fn detection(&self) -> DetectionConfig {
        self.config.detection()
    }

    fn classify(&self, image_id: &str, region: Option<BBox>, raw_text: &str, threshold: f64) -> PromotionResult {
        let text = postprocess(raw_text, &self.post);
        let probs = self.model.predict_probs(&text);
        let mut categories = self.model.categories(&decode_labels(&probs, threshold));
        categories.sort_unstable();
        PromotionResult {
            image_id: image_id.to_string(),
            region,
            text,
            probabilities: self.model.labels().iter().copied().zip(probs).collect(),
            categories,
        }
    }

    /// Full pipeline: one result per detected region, in reading order.
    pub fn run_pipeline(&self, image: &RasterImage, image_id: &str) -> Result<Vec<PromotionResult>, PipelineError> {
        let mut regions = detect_regions(image, image_id, self.detector.as_ref(), &self.detection())
            .map_err(|e| PipelineError::stage(Stage::Detect, image_id, e))?;
        if regions.is_empty() {
            return Ok(Vec::new());
        }
        regions.sort_by(|a, b| a.y_min.total_cmp(&b.y_min).then(a.x_min.total_cmp(&b.x_min)));
        let masked = apply_mask(image, &regions);
        let page = self.ocr.recognize_page(&masked, image_id).map_err(|e| PipelineError::stage(Stage::Ocr, image_id, e))?;
        let texts = group_words(&page.words, &regions);
        Ok(regions
            .iter()
            .zip(texts)
            .map(|(r, t)| self.classify(image_id, Some(*r), &t, self.config.classify_threshold))
            .collect())
    }

    /// Baseline: every OCR paragraph of the unmasked page is a candidate;
    /// candidates with all probabilities below the baseline threshold are
    /// dropped and the rest decoded at that threshold.
    pub fn run_baseline(&self, image: &RasterImage, image_id: &str) -> Result<Vec<PromotionResult>, PipelineError> {
        let mut page = self.ocr.recognize_page(image, image_id).map_err(|e| PipelineError::stage(Stage::Ocr, image_id, e))?;
        if page.paragraphs.is_empty() {
            page.paragraphs = cluster_paragraphs(&page.words, self.config.paragraph_gap_factor);
        }
        let thr = self.config.baseline_threshold;
        Ok(page
            .paragraph_texts()
            .iter()
            .zip(&page.paragraphs)
            .map(|(t, p)| self.classify(image_id, Some(p.bbox), t, thr))
            .filter(|r| r.probabilities.values().any(|&p| p >= thr))
            .collect())
    }

    /// Pipeline or baseline, as configured.
    pub fn run(&self, image: &RasterImage, image_id: &str) -> Result<Vec<PromotionResult>, PipelineError> {
        if self.config.baseline_mode {
            self.run_baseline(image, image_id)
        } else {
            self.run_pipeline(image, image_id)
        }
    }

    /// Runs every page on up to `config.jobs` threads; results keep input
    /// order.
    pub fn run_files(&self, pages: &[(String, PathBuf)]) -> Vec<Result<Vec<PromotionResult>, PipelineError>> {
        let work = || {
            pages
                .par_iter()
                .map(|(id, path)| {
                    let image = RasterImage::load_png(path).map_err(|e| PipelineError::stage(Stage::LoadImage, id, e))?;
                    self.run(&image, id)
                })
                .collect()
        };
        match rayon::ThreadPoolBuilder::new().num_threads(self.config.jobs).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        }
    }
}

/// PNG pages in `dir`, sorted by file name, with the file stem as image id.
pub fn list_pages(dir: &Path) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut pages: Vec<(String, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
        .collect();
    pages.sort();
    Ok(pages)
}

/// `(text, categories)` training pairs from annotated regions, cleaned the
/// same way as OCR output.
pub fn training_samples(annotations: &[Annotation], post: &PostprocessConfig) -> Vec<(String, Vec<CategoryId>)> {
    annotations.iter().flat_map(|a| &a.regions).map(|r| (postprocess(&r.text, post), r.categories.clone())).collect()
}

/// Model probabilities for labelled texts, ready for metric computation.
/// Fails if a truth category is not among the model's labels.
pub fn eval_samples(model: &ClassifierModel, samples: &[(String, Vec<CategoryId>)]) -> Result<Vec<EvalSample>, ClassifierError> {
    samples
        .par_iter()
        .enumerate()
        .map(|(index, (text, cats))| {
            let truth = cats
                .iter()
                .map(|&category| model.label_index(category).ok_or(ClassifierError::UnknownLabel { index, category }))
                .collect::<Result<_, _>>()?;
            Ok(EvalSample { probs: model.predict_probs(text), truth })
        })
        .collect()
}
