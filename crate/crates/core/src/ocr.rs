//! OCR behind a provider seam, word-to-region grouping and text cleanup.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_annotations, Annotation, CorpusError};
use crate::geometry::BBox;
use crate::masking::RasterImage;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("mock OCR ground truth: {0}")]
    GroundTruth(#[from] CorpusError),
    #[error("mock OCR has no ground truth for image {image_id}")]
    UnknownImage { image_id: String },
    #[error("remote OCR at {endpoint}: transport failure: {message}")]
    Transport { endpoint: String, message: String },
    #[error("remote OCR at {endpoint}: rejected credentials (HTTP {status})")]
    Auth { endpoint: String, status: u16 },
    #[error("remote OCR at {endpoint}: quota exceeded (HTTP 429)")]
    Quota { endpoint: String },
    #[error("remote OCR at {endpoint}: HTTP {status}: {body}")]
    Status { endpoint: String, status: u16, body: String },
    #[error("remote OCR at {endpoint}: unreadable response: {message}")]
    Parse { endpoint: String, message: String },
    #[error("OCR image encoding: {0}")]
    Encode(String),
    #[error("invalid OCR config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrWord {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

/// A paragraph as segmented by the provider; `words` index into
/// [`OcrPage::words`].
#[derive(Debug, Clone, PartialEq)]
pub struct OcrParagraph {
    pub bbox: BBox,
    pub words: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OcrPage {
    pub words: Vec<OcrWord>,
    pub paragraphs: Vec<OcrParagraph>,
}

impl OcrPage {
    /// Text of each paragraph in reading order.
    pub fn paragraph_texts(&self) -> Vec<String> {
        self.paragraphs
            .iter()
            .map(|p| {
                let words: Vec<OcrWord> = p.words.iter().map(|&i| self.words[i].clone()).collect();
                join_lines(&words)
            })
            .collect()
    }
}

pub trait OcrProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn recognize_page(&self, image: &RasterImage, image_id: &str) -> Result<OcrPage, OcrError>;
}

/// Words found on `image`, with locations.
pub fn recognize(image: &RasterImage, image_id: &str, provider: &dyn OcrProvider) -> Result<Vec<OcrWord>, OcrError> {
    provider.recognize_page(image, image_id).map(|p| p.words)
}

// ---------------------------------------------------------------- mock

/// Replays ground-truth words from an annotation file. A word is returned
/// iff the pixel under its box center is not pure black, so masking hides
/// words exactly as it would from a real engine.
///
/// Paragraphs are single-linkage clusters of the returned words: two words
/// join when both their horizontal and vertical gaps are at most
/// `paragraph_gap_factor` times the median word height.
pub struct MockOcr {
    source: MockSource,
    pub paragraph_gap_factor: f64,
}

enum MockSource {
    File { path: PathBuf, cache: RwLock<Option<Arc<HashMap<String, Annotation>>>> },
    Memory(HashMap<String, Annotation>),
}

impl MockOcr {
    pub const DEFAULT_PARAGRAPH_GAP_FACTOR: f64 = 2.0;

    pub fn from_file(path: impl Into<PathBuf>) -> Self {
        MockOcr {
            source: MockSource::File { path: path.into(), cache: RwLock::new(None) },
            paragraph_gap_factor: Self::DEFAULT_PARAGRAPH_GAP_FACTOR,
        }
    }

    pub fn from_annotations(annotations: &[Annotation]) -> Self {
        MockOcr {
            source: MockSource::Memory(annotations.iter().map(|a| (a.image_id.clone(), a.clone())).collect()),
            paragraph_gap_factor: Self::DEFAULT_PARAGRAPH_GAP_FACTOR,
        }
    }

    fn with_annotation<T>(&self, image_id: &str, f: impl FnOnce(&Annotation) -> T) -> Result<T, OcrError> {
        let unknown = || OcrError::UnknownImage { image_id: image_id.to_string() };
        match &self.source {
            MockSource::Memory(m) => m.get(image_id).map(f).ok_or_else(unknown),
            MockSource::File { path, cache } => {
                let cached = cache.read().expect("cache lock").clone();
                let table = match cached {
                    Some(t) => t,
                    None => {
                        let mut slot = cache.write().expect("cache lock");
                        match slot.as_ref() {
                            Some(t) => Arc::clone(t),
                            None => {
                                let t: HashMap<String, Annotation> =
                                    load_annotations(path)?.into_iter().map(|a| (a.image_id.clone(), a)).collect();
                                let t = Arc::new(t);
                                *slot = Some(Arc::clone(&t));
                                t
                            }
                        }
                    }
                };
                table.get(image_id).map(f).ok_or_else(unknown)
            }
        }
    }
}

fn center_pixel_visible(image: &RasterImage, b: &BBox) -> bool {
    let (cx, cy) = b.center();
    if cx < 0.0 || cy < 0.0 {
        return false;
    }
    let (x, y) = (cx.floor() as u32, cy.floor() as u32);
    x < image.width() && y < image.height() && !image.is_black(x, y)
}

impl OcrProvider for MockOcr {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn recognize_page(&self, image: &RasterImage, image_id: &str) -> Result<OcrPage, OcrError> {
        let words: Vec<OcrWord> = self.with_annotation(image_id, |a| {
            a.all_words()
                .filter(|w| center_pixel_visible(image, &w.bbox))
                .map(|w| OcrWord { text: w.text.clone(), bbox: w.bbox, confidence: 1.0 })
                .collect()
        })?;
        let paragraphs = cluster_paragraphs(&words, self.paragraph_gap_factor);
        Ok(OcrPage { words, paragraphs })
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn axis_gap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (b0 - a1).max(a0 - b1).max(0.0)
}

/// Single-linkage word clusters, ordered top-to-bottom then left-to-right.
pub fn cluster_paragraphs(words: &[OcrWord], gap_factor: f64) -> Vec<OcrParagraph> {
    let n = words.len();
    if n == 0 {
        return Vec::new();
    }
    let tol = gap_factor * median(words.iter().map(|w| w.bbox.height()).collect());
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&words[i].bbox, &words[j].bbox);
            if axis_gap(a.x_min, a.x_max, b.x_min, b.x_max) <= tol && axis_gap(a.y_min, a.y_max, b.y_min, b.y_max) <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let g = *slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let mut paras: Vec<OcrParagraph> = groups
        .into_iter()
        .map(|idx| {
            let bbox = idx[1..].iter().fold(words[idx[0]].bbox, |acc, &i| acc.union(&words[i].bbox));
            OcrParagraph { bbox: bbox.with_score(1.0), words: idx }
        })
        .collect();
    paras.sort_by(|a, b| a.bbox.y_min.total_cmp(&b.bbox.y_min).then(a.bbox.x_min.total_cmp(&b.bbox.x_min)));
    paras
}

// -------------------------------------------------------------- remote

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOcrConfig {
    pub endpoint: String,
    /// Sent as a bearer token when present.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for RemoteOcrConfig {
    fn default() -> Self {
        RemoteOcrConfig { endpoint: String::new(), api_key: None, timeout: Duration::from_secs(30), max_in_flight: 4 }
    }
}

/// HTTP client for a document-OCR service. The page is POSTed as PNG and
/// the reply is read in the common `fullTextAnnotation` layout
/// (pages / blocks / paragraphs / words / symbols with `boundingBox.vertices`).
pub struct RemoteOcr {
    cfg: RemoteOcrConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
}

impl RemoteOcr {
    pub fn new(cfg: RemoteOcrConfig) -> Result<Self, OcrError> {
        if cfg.endpoint.is_empty() {
            return Err(OcrError::Config("remote OCR needs an endpoint".into()));
        }
        if cfg.max_in_flight == 0 {
            return Err(OcrError::Config("max_in_flight must be at least 1".into()));
        }
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(cfg.timeout)).http_status_as_error(false).build().into();
        Ok(RemoteOcr { cfg, agent, in_flight: Mutex::new(0), slot_free: Condvar::new() })
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().expect("semaphore lock");
        while *n >= self.cfg.max_in_flight {
            n = self.slot_free.wait(n).expect("semaphore lock");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("semaphore lock") -= 1;
        self.slot_free.notify_one();
    }

    fn call(&self, png: &[u8]) -> Result<String, OcrError> {
        let endpoint = self.cfg.endpoint.clone();
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "image/png");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(png).map_err(|e| OcrError::Transport { endpoint: endpoint.clone(), message: e.to_string() })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| OcrError::Transport { endpoint: endpoint.clone(), message: e.to_string() })?;
        match status {
            200..=299 => Ok(body),
            401 | 403 => Err(OcrError::Auth { endpoint, status }),
            429 => Err(OcrError::Quota { endpoint }),
            _ => Err(OcrError::Status { endpoint, status, body: body.chars().take(200).collect() }),
        }
    }
}

impl OcrProvider for RemoteOcr {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn recognize_page(&self, image: &RasterImage, _image_id: &str) -> Result<OcrPage, OcrError> {
        let png = image.to_png_bytes().map_err(|e| OcrError::Encode(e.to_string()))?;
        self.acquire();
        let result = self.call(&png);
        self.release();
        parse_full_text_annotation(&result?).map_err(|message| OcrError::Parse { endpoint: self.cfg.endpoint.clone(), message })
    }
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase")]
struct WireReply {
    #[serde(default)]
    responses: Vec<WireReply>,
    full_text_annotation: Option<WireAnnotation>,
}

#[derive(Deserialize)]
struct WireAnnotation {
    #[serde(default)]
    pages: Vec<WirePage>,
}

#[derive(Deserialize)]
struct WirePage {
    #[serde(default)]
    blocks: Vec<WireBlock>,
}

#[derive(Deserialize)]
struct WireBlock {
    #[serde(default)]
    paragraphs: Vec<WireParagraph>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct WireParagraph {
    bounding_box: Option<WirePoly>,
    #[serde(default)]
    words: Vec<WireWord>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct WireWord {
    bounding_box: WirePoly,
    #[serde(default)]
    symbols: Vec<WireSymbol>,
    confidence: Option<f64>,
}

#[derive(Deserialize)]
struct WireSymbol {
    text: String,
}

#[derive(Deserialize)]
struct WirePoly {
    vertices: Vec<WireVertex>,
}

/// Zero coordinates may be omitted on the wire.
#[derive(Deserialize)]
struct WireVertex {
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
}

impl WirePoly {
    fn to_bbox(&self) -> Option<BBox> {
        let xs = self.vertices.iter().map(|v| v.x);
        let ys = self.vertices.iter().map(|v| v.y);
        let x0 = xs.clone().fold(f64::INFINITY, f64::min).max(0.0);
        let x1 = xs.fold(f64::NEG_INFINITY, f64::max);
        let y0 = ys.clone().fold(f64::INFINITY, f64::min).max(0.0);
        let y1 = ys.fold(f64::NEG_INFINITY, f64::max);
        BBox::new(x0, y0, x1, y1, 1.0).ok()
    }
}

/// Reads a `fullTextAnnotation` reply, either bare or wrapped in
/// `responses[0]`. Words with degenerate boxes or no symbols are skipped.
pub fn parse_full_text_annotation(body: &str) -> Result<OcrPage, String> {
    let reply: WireReply = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let annotation = match reply.full_text_annotation {
        Some(a) => Some(a),
        None => reply.responses.into_iter().next().and_then(|r| r.full_text_annotation),
    };
    let mut page = OcrPage::default();
    let Some(annotation) = annotation else {
        return Ok(page);
    };
    for p in annotation.pages.iter().flat_map(|p| &p.blocks).flat_map(|b| &b.paragraphs) {
        let mut idx = Vec::new();
        for w in &p.words {
            let text: String = w.symbols.iter().map(|s| s.text.as_str()).collect();
            let Some(bbox) = w.bounding_box.to_bbox() else { continue };
            if text.trim().is_empty() {
                continue;
            }
            idx.push(page.words.len());
            page.words.push(OcrWord { text, bbox, confidence: w.confidence.unwrap_or(1.0).clamp(0.0, 1.0) });
        }
        if idx.is_empty() {
            continue;
        }
        let bbox = p
            .bounding_box
            .as_ref()
            .and_then(WirePoly::to_bbox)
            .unwrap_or_else(|| idx[1..].iter().fold(page.words[idx[0]].bbox, |acc, &i| acc.union(&page.words[i].bbox)));
        page.paragraphs.push(OcrParagraph { bbox, words: idx });
    }
    Ok(page)
}

// ------------------------------------------------------------- grouping

/// Reading-order text: words clustered into lines by y-center (tolerance
/// half the median word height), lines top to bottom, words left to right.
fn join_lines(words: &[OcrWord]) -> String {
    if words.is_empty() {
        return String::new();
    }
    let tol = 0.5 * median(words.iter().map(|w| w.bbox.height()).collect());
    let mut order: Vec<&OcrWord> = words.iter().collect();
    order.sort_by(|a, b| a.bbox.center().1.total_cmp(&b.bbox.center().1).then(a.bbox.x_min.total_cmp(&b.bbox.x_min)));
    let mut lines: Vec<(f64, Vec<&OcrWord>)> = Vec::new();
    for w in order {
        let cy = w.bbox.center().1;
        match lines.last_mut() {
            Some((mean, line)) if (cy - *mean).abs() <= tol => {
                line.push(w);
                *mean += (cy - *mean) / line.len() as f64;
            }
            _ => lines.push((cy, vec![w])),
        }
    }
    let mut tokens = Vec::new();
    for (_, mut line) in lines {
        line.sort_by(|a, b| a.bbox.x_min.total_cmp(&b.bbox.x_min));
        tokens.extend(line.iter().flat_map(|w| w.text.split_whitespace()));
    }
    tokens.join(" ")
}

/// Text per region, aligned with `regions`. Each word goes to the first
/// region containing its box center; words outside every region are dropped.
pub fn group_words(words: &[OcrWord], regions: &[BBox]) -> Vec<String> {
    let mut members: Vec<Vec<OcrWord>> = vec![Vec::new(); regions.len()];
    for w in words {
        let (cx, cy) = w.bbox.center();
        if let Some(i) = regions.iter().position(|r| r.contains_point(cx, cy)) {
            members[i].push(w.clone());
        }
    }
    members.iter().map(|m| join_lines(m)).collect()
}

// --------------------------------------------------------- postprocess

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocessConfig {
    /// Lowercase words known to be correctly spelled.
    pub dictionary: BTreeSet<String>,
    pub max_edit_distance: usize,
    pub min_token_len_for_correction: usize,
    /// Non-alphanumeric characters kept besides spaces.
    pub allowed_symbols: String,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            dictionary: BTreeSet::new(),
            max_edit_distance: 1,
            min_token_len_for_correction: 4,
            allowed_symbols: "%€$.,-".into(),
        }
    }
}

impl PostprocessConfig {
    /// One word per line; blank lines and `#` comments are skipped.
    pub fn load_dictionary(path: &Path) -> std::io::Result<BTreeSet<String>> {
        Ok(std::fs::read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect())
    }
}

fn allowed(c: char, cfg: &PostprocessConfig) -> bool {
    c.is_alphabetic() || c.is_ascii_digit() || cfg.allowed_symbols.contains(c)
}

fn correct(token: &str, cfg: &PostprocessConfig) -> Option<String> {
    let len = token.chars().count();
    let letters = token.chars().filter(|c| c.is_alphabetic()).count();
    if len < cfg.min_token_len_for_correction || 2 * letters < len || cfg.dictionary.contains(token) {
        return None;
    }
    let mut found = None;
    for word in &cfg.dictionary {
        if strsim::levenshtein(token, word) <= cfg.max_edit_distance {
            if found.is_some() {
                return None;
            }
            found = Some(word);
        }
    }
    found.cloned()
}

/// Lowercases, drops characters outside the allowed classes, collapses
/// whitespace and applies unambiguous dictionary corrections.
pub fn postprocess(text: &str, cfg: &PostprocessConfig) -> String {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_whitespace() {
            cleaned.push(' ');
        } else {
            cleaned.extend(c.to_lowercase().filter(|&l| allowed(l, cfg)));
        }
    }
    cleaned.split_whitespace().map(|t| correct(t, cfg).unwrap_or_else(|| t.to_string())).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn word(text: &str, x: f64, y: f64) -> OcrWord {
        OcrWord { text: text.into(), bbox: BBox::from_coords(x, y, x + 40.0, y + 14.0), confidence: 1.0 }
    }

    #[test]
    fn same_line_left_to_right() {
        let region = BBox::from_coords(0.0, 0.0, 200.0, 50.0);
        let words = [word("MILK", 60.0, 10.0), word("FRESH", 10.0, 11.0)];
        assert_eq!(group_words(&words, &[region]), vec!["FRESH MILK".to_string()]);
    }

    #[test]
    fn outside_words_are_dropped_and_lines_stack() {
        let region = BBox::from_coords(0.0, 0.0, 200.0, 80.0);
        let words = [word("two", 10.0, 40.0), word("far", 500.0, 10.0), word("one", 100.0, 10.0)];
        assert_eq!(group_words(&words, &[region]), vec!["one two".to_string()]);
    }

    #[test]
    fn first_containing_region_wins() {
        let a = BBox::from_coords(0.0, 0.0, 100.0, 100.0);
        let b = BBox::from_coords(0.0, 0.0, 200.0, 100.0);
        let out = group_words(&[word("x", 10.0, 10.0)], &[a, b]);
        assert_eq!(out, vec!["x".to_string(), String::new()]);
    }

    #[test]
    fn postprocess_examples() {
        let cfg = PostprocessConfig::default();
        assert_eq!(postprocess("MILK", &cfg), "milk");
        assert_eq!(postprocess("", &cfg), "");
        let cfg = PostprocessConfig { dictionary: ["chocolate".to_string()].into(), ..PostprocessConfig::default() };
        assert_eq!(postprocess("CH0COLATE @@ 2x100g", &cfg), "chocolate 2x100g");
        assert_eq!(postprocess("  Crème\tBRÛLÉE  -30% €2,99 ", &cfg), "crème brûlée -30% €2,99");
    }

    #[test]
    fn ambiguous_correction_is_left_alone() {
        let dict: BTreeSet<String> = ["pears", "peers"].iter().map(|s| s.to_string()).collect();
        let cfg = PostprocessConfig { dictionary: dict, ..PostprocessConfig::default() };
        assert_eq!(postprocess("pexrs", &cfg), "pexrs");
        assert_eq!(postprocess("pearz", &cfg), "pears");
        // too short to touch
        assert_eq!(
            postprocess("pea", &PostprocessConfig { dictionary: ["pear".into()].into(), ..PostprocessConfig::default() }),
            "pea"
        );
    }

    #[test]
    fn mock_respects_mask() {
        use crate::corpus::{Region, Word};
        let words: Vec<Word> = (0..5)
            .map(|i| Word {
                text: format!("w{i}"),
                bbox: BBox::from_coords(10.0 + 30.0 * i as f64, 10.0, 30.0 + 30.0 * i as f64, 24.0),
            })
            .collect();
        let a = Annotation {
            image_id: "p".into(),
            width: 200,
            height: 40,
            language: String::new(),
            retailer: String::new(),
            regions: vec![Region {
                bbox: BBox::from_coords(5.0, 5.0, 170.0, 30.0),
                text: String::new(),
                categories: vec![0],
                words,
            }],
            distractors: vec![],
        };
        let ocr = MockOcr::from_annotations(std::slice::from_ref(&a));
        let white = RasterImage::filled(200, 40, [255, 255, 255]).unwrap();
        assert_eq!(recognize(&white, "p", &ocr).unwrap().len(), 5);
        let black = RasterImage::filled(200, 40, [0, 0, 0]).unwrap();
        assert!(recognize(&black, "p", &ocr).unwrap().is_empty());
        let masked = crate::masking::apply_mask(&white, &[BBox::from_coords(0.0, 0.0, 80.0, 40.0)]);
        let got: Vec<String> = recognize(&masked, "p", &ocr).unwrap().into_iter().map(|w| w.text).collect();
        assert_eq!(got, vec!["w0", "w1"]);
        assert!(matches!(recognize(&white, "q", &ocr), Err(OcrError::UnknownImage { .. })));
        assert!(matches!(MockOcr::from_file("/nonexistent/gt.json").recognize_page(&white, "p"), Err(OcrError::GroundTruth(_))));
    }

    #[test]
    fn paragraphs_split_on_large_gaps() {
        let words = [word("a", 0.0, 0.0), word("b", 50.0, 0.0), word("c", 0.0, 30.0), word("d", 300.0, 0.0)];
        let paras = cluster_paragraphs(&words, 2.0);
        assert_eq!(paras.len(), 2);
        assert_eq!(paras[0].words, vec![0, 1, 2]);
        assert_eq!(paras[1].words, vec![3]);
        let page = OcrPage { words: words.to_vec(), paragraphs: paras };
        assert_eq!(page.paragraph_texts(), vec!["a b c", "d"]);
    }

    #[test]
    fn parse_vision_reply() {
        let body = r#"{"responses":[{"fullTextAnnotation":{"pages":[{"blocks":[{"paragraphs":[
            {"boundingBox":{"vertices":[{},{"x":100},{"x":100,"y":20},{"y":20}]},
             "words":[{"boundingBox":{"vertices":[{"x":2,"y":2},{"x":40,"y":2},{"x":40,"y":18},{"x":2,"y":18}]},
                       "confidence":0.97,"symbols":[{"text":"M"},{"text":"I"},{"text":"L"},{"text":"K"}]},
                      {"boundingBox":{"vertices":[{"x":50,"y":2},{"x":50,"y":2}]},"symbols":[{"text":"?"}]}]}]}]}]}}]}"#;
        let page = parse_full_text_annotation(body).unwrap();
        assert_eq!(page.words.len(), 1);
        assert_eq!(page.words[0].text, "MILK");
        assert_eq!(page.words[0].bbox, BBox::from_coords(2.0, 2.0, 40.0, 18.0));
        assert_eq!(page.paragraphs[0].bbox, BBox::from_coords(0.0, 0.0, 100.0, 20.0));
        assert_eq!(parse_full_text_annotation("{}").unwrap(), OcrPage::default());
        assert!(parse_full_text_annotation("[").is_err());
    }

    proptest! {
        #[test]
        fn postprocess_idempotent(text in "\\PC{0,40}", dict in prop::collection::btree_set("[a-zé]{3,8}", 0..6)) {
            let cfg = PostprocessConfig { dictionary: dict, ..PostprocessConfig::default() };
            let once = postprocess(&text, &cfg);
            prop_assert_eq!(postprocess(&once, &cfg), once.clone());
            prop_assert!(once.split_whitespace().count() <= text.split_whitespace().count());
        }

        #[test]
        fn grouped_text_is_clean(items in prop::collection::vec(("[a-z]{1,6}", 0.0..300.0f64, 0.0..300.0f64), 0..20)) {
            let words: Vec<OcrWord> = items.iter().map(|(t, x, y)| word(t, *x, *y)).collect();
            let regions = [BBox::from_coords(0.0, 0.0, 150.0, 150.0), BBox::from_coords(100.0, 100.0, 400.0, 400.0)];
            for s in group_words(&words, &regions) {
                prop_assert_eq!(s.trim(), s.as_str());
                prop_assert!(!s.contains("  "));
                let mut pool: Vec<char> = items.iter().flat_map(|(t, _, _)| t.chars()).collect();
                for c in s.chars().filter(|c| *c != ' ') {
                    let pos = pool.iter().position(|p| *p == c);
                    prop_assert!(pos.is_some());
                    pool.remove(pos.unwrap());
                }
            }
        }
    }
}
