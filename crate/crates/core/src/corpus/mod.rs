//! Ground-truth annotation schema, dataset statistics and the seeded
//! synthetic leaflet generator.
//!
//! One JSON document format is shared by the file-backed proposal source,
//! the mock OCR provider and evaluation:
//!
//! ```json
//! {
//!   "version": 1,
//!   "annotations": [{
//!     "image_id": "page-0000",
//!     "width": 768, "height": 1024,
//!     "language": "l0", "retailer": "r0",
//!     "regions": [{
//!       "box": {"x_min": 20, "y_min": 30, "x_max": 210, "y_max": 90},
//!       "text": "fresh milk 1l",
//!       "categories": [3, 7],
//!       "words": [{"text": "fresh", "box": {...}}, ...]
//!     }],
//!     "distractors": [{"box": {...}, "text": "2,99€", "words": [...]}]
//!   }]
//! }
//! ```

mod glyphs;
mod stats;
mod synth;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

pub use glyphs::{draw_word, layout_words, render_text_block, text_block_size, GlyphStyle, INK};
pub use stats::{compute_stats, format_stats_table, CorpusStats};
pub use synth::{generate_annotations, generate_synthetic, render_page, SyntheticConfig, NOISE_TOKENS};

pub type CategoryId = u32;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: parse error at `{record}` (line {line}, column {column}): {message}")]
    Parse { origin: String, record: String, line: usize, column: usize, message: String },
    #[error("{origin}: schema violation at `{record}`: {message}")]
    Schema { origin: String, record: String, message: String },
    #[error("unsupported annotation schema version {found} (this build reads version {SCHEMA_VERSION})")]
    Version { found: u32 },
    #[error("corpus is empty")]
    Empty,
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("page {width}x{height} too small for {requested} promotion blocks (room for {capacity})")]
    PageTooSmall { width: u32, height: u32, requested: usize, capacity: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// One promotion description with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub text: String,
    /// Category ids, primary category first, no duplicates.
    pub categories: Vec<CategoryId>,
    #[serde(default)]
    pub words: Vec<Word>,
}

/// Non-description text on the page (prices, slogans).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub text: String,
    #[serde(default)]
    pub words: Vec<Word>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub language: String,
    #[serde(default)]
    pub retailer: String,
    pub regions: Vec<Region>,
    #[serde(default)]
    pub distractors: Vec<Distractor>,
}

impl Annotation {
    /// All words on the page, description words first.
    pub fn all_words(&self) -> impl Iterator<Item = &Word> {
        self.regions.iter().flat_map(|r| &r.words).chain(self.distractors.iter().flat_map(|d| &d.words))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationFile {
    version: u32,
    annotations: Vec<Annotation>,
}

/// Annotations plus the unknown fields that were skipped while reading.
#[derive(Debug, Clone)]
pub struct LoadedAnnotations {
    pub annotations: Vec<Annotation>,
    pub ignored_fields: Vec<String>,
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>, CorpusError> {
    let loaded = load_annotations_reporting(path)?;
    Ok(loaded.annotations)
}

/// Like [`load_annotations`] but also returns the paths of ignored fields.
pub fn load_annotations_reporting(path: &Path) -> Result<LoadedAnnotations, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn parse_annotations(text: &str, origin: &str) -> Result<LoadedAnnotations, CorpusError> {
    let mut ignored = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let mut record_ignored = |p: serde_ignored::Path<'_>| ignored.push(p.to_string());
    let tracked = serde_ignored::Deserializer::new(&mut de, &mut record_ignored);
    let file: AnnotationFile =
        serde_path_to_error::deserialize(tracked).map_err(|e: serde_path_to_error::Error<serde_json::Error>| {
            let record = e.path().to_string();
            let inner = e.into_inner();
            CorpusError::Parse {
                origin: origin.to_string(),
                record,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
    de.end().map_err(|e| CorpusError::Parse {
        origin: origin.to_string(),
        record: ".".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.version != SCHEMA_VERSION {
        return Err(CorpusError::Version { found: file.version });
    }
    for field in &ignored {
        log::warn!("{origin}: ignoring unknown field `{field}`");
    }
    validate_annotations(&file.annotations, origin)?;
    Ok(LoadedAnnotations { annotations: file.annotations, ignored_fields: ignored })
}

pub fn save_annotations(annotations: &[Annotation], path: &Path) -> Result<(), CorpusError> {
    let text = annotations_to_json(annotations);
    fs::write(path, text).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

pub fn annotations_to_json(annotations: &[Annotation]) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        version: u32,
        annotations: &'a [Annotation],
    }
    let mut s = serde_json::to_string_pretty(&Out { version: SCHEMA_VERSION, annotations }).expect("annotations serialize");
    s.push('\n');
    s
}

/// Checks the invariants serde cannot express.
pub fn validate_annotations(annotations: &[Annotation], origin: &str) -> Result<(), CorpusError> {
    let fail =
        |record: String, message: &str| CorpusError::Schema { origin: origin.to_string(), record, message: message.to_string() };
    let mut ids = HashSet::new();
    for (i, a) in annotations.iter().enumerate() {
        let at = format!("annotations[{i}]");
        if a.image_id.is_empty() {
            return Err(fail(format!("{at}.image_id"), "image id must be non-empty"));
        }
        if !ids.insert(a.image_id.as_str()) {
            return Err(fail(format!("{at}.image_id"), "duplicate image id"));
        }
        if a.width == 0 || a.height == 0 {
            return Err(fail(at, "page size must be positive"));
        }
        let page = BBox::from_coords(0.0, 0.0, a.width as f64, a.height as f64);
        for (j, r) in a.regions.iter().enumerate() {
            let at = format!("{at}.regions[{j}]");
            if r.categories.is_empty() {
                return Err(fail(format!("{at}.categories"), "category set must be non-empty"));
            }
            let mut seen = HashSet::new();
            if !r.categories.iter().all(|c| seen.insert(*c)) {
                return Err(fail(format!("{at}.categories"), "duplicate category id"));
            }
            if !page.contains_box(&r.bbox) {
                return Err(fail(format!("{at}.box"), "region box outside page"));
            }
            for (k, w) in r.words.iter().enumerate() {
                if w.text.is_empty() {
                    return Err(fail(format!("{at}.words[{k}].text"), "word text must be non-empty"));
                }
                if !r.bbox.contains_box(&w.bbox) {
                    return Err(fail(format!("{at}.words[{k}].box"), "word box outside its region"));
                }
            }
        }
        for (j, d) in a.distractors.iter().enumerate() {
            let at = format!("{at}.distractors[{j}]");
            if !page.contains_box(&d.bbox) {
                return Err(fail(format!("{at}.box"), "distractor box outside page"));
            }
            for (k, w) in d.words.iter().enumerate() {
                if w.text.is_empty() || !d.bbox.contains_box(&w.bbox) {
                    return Err(fail(format!("{at}.words[{k}]"), "empty word or word box outside its block"));
                }
            }
        }
    }
    Ok(())
}
