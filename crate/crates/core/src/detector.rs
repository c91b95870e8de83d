//! Description-region proposals behind a provider seam, followed by the
//! confidence filter and NMS.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_annotations, CorpusError};
use crate::geometry::{nms, BBox};
use crate::masking::RasterImage;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("invalid detection config: {0}")]
    Config(String),
    #[error("{provider} provider: {message}")]
    Provider { provider: &'static str, message: String },
    #[error("file provider: {0}")]
    File(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Proposals scoring below this are dropped (inclusive keep).
    pub confidence_threshold: f64,
    pub nms_iou_threshold: f64,
    /// Longest image side handed to resize-aware providers.
    pub resize_target: u32,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig { confidence_threshold: 0.4, nms_iou_threshold: 0.5, resize_target: 1024 }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.confidence_threshold) {
            return Err(DetectionError::Config(format!("confidence_threshold {} outside [0, 1]", self.confidence_threshold)));
        }
        if !unit(self.nms_iou_threshold) {
            return Err(DetectionError::Config(format!("nms_iou_threshold {} outside [0, 1]", self.nms_iou_threshold)));
        }
        if self.resize_target == 0 {
            return Err(DetectionError::Config("resize_target must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform scaling between an original image and its resized copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeTransform {
    pub original: (u32, u32),
    pub resized: (u32, u32),
    /// resized / original
    pub scale: f64,
}

impl ResizeTransform {
    /// Scales so the longest side equals `target`.
    pub fn new(width: u32, height: u32, target: u32) -> Self {
        let scale = target as f64 / width.max(height) as f64;
        let dim = |v: u32| ((v as f64 * scale).round() as u32).max(1);
        ResizeTransform { original: (width, height), resized: (dim(width), dim(height)), scale }
    }

    pub fn is_identity(&self) -> bool {
        self.original == self.resized
    }

    pub fn to_resized(&self, b: &BBox) -> BBox {
        let s = self.scale;
        BBox { x_min: b.x_min * s, y_min: b.y_min * s, x_max: b.x_max * s, y_max: b.y_max * s, score: b.score }
    }

    /// Maps back and rounds to the original pixel grid, clipped to the
    /// image. `None` if nothing of the box is left.
    pub fn to_original(&self, b: &BBox) -> Option<BBox> {
        let s = self.scale;
        let m = BBox {
            x_min: (b.x_min / s).round(),
            y_min: (b.y_min / s).round(),
            x_max: (b.x_max / s).round(),
            y_max: (b.y_max / s).round(),
            score: b.score,
        };
        m.clip(self.original.0 as f64, self.original.1 as f64)
    }

    pub fn apply(&self, image: &RasterImage) -> RasterImage {
        if self.is_identity() {
            return image.clone();
        }
        let (w, h) = self.resized;
        let buf = image::imageops::resize(&image.to_image_buffer(), w, h, image::imageops::FilterType::Triangle);
        RasterImage::from_image_buffer(buf)
    }
}

/// Source of scored candidate boxes for one page.
pub trait ProposalProvider: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether `propose` expects the page resized to the configured target
    /// (boxes then come back in resized coordinates).
    fn wants_resized(&self) -> bool;

    fn propose(&self, image: &RasterImage, image_id: &str) -> Result<Vec<BBox>, DetectionError>;
}

/// Runs `provider`, maps boxes to original coordinates, keeps those with
/// score ≥ the confidence threshold and applies NMS. Output is sorted by
/// descending score.
pub fn detect_regions(
    image: &RasterImage,
    image_id: &str,
    provider: &dyn ProposalProvider,
    cfg: &DetectionConfig,
) -> Result<Vec<BBox>, DetectionError> {
    cfg.validate()?;
    let proposals = if provider.wants_resized() {
        let t = ResizeTransform::new(image.width(), image.height(), cfg.resize_target);
        let resized = t.apply(image);
        provider.propose(&resized, image_id)?.iter().filter_map(|b| t.to_original(b)).collect()
    } else {
        provider.propose(image, image_id)?
    };
    let kept: Vec<BBox> = proposals.into_iter().filter(|b| b.score >= cfg.confidence_threshold).collect();
    Ok(nms(&kept, cfg.nms_iou_threshold))
}

/// Declarative choice of provider, as found in a pipeline config.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionProposalSource {
    File {
        path: PathBuf,
    },
    Heuristic(HeuristicSettings),
    /// Shell command; receives the resized page as PNG on stdin and prints
    /// one JSON record per line (`{"box": {...}}`).
    External {
        command: String,
    },
}

impl RegionProposalSource {
    pub fn build(&self) -> Box<dyn ProposalProvider> {
        match self {
            RegionProposalSource::File { path } => Box::new(FileProposals::new(path)),
            RegionProposalSource::Heuristic(s) => Box::new(HeuristicDetector { settings: s.clone() }),
            RegionProposalSource::External { command } => Box::new(ExternalDetector { command: command.clone() }),
        }
    }
}

// ---------------------------------------------------------------- file

/// Boxes read from an annotation file (region boxes) or a JSON-lines file of
/// `{"image_id", "box"}` records (`.jsonl` / `.ndjson`). Coordinates are in
/// the original image frame. Parsed files are cached.
type ProposalIndex = HashMap<String, Vec<BBox>>;

pub struct FileProposals {
    path: PathBuf,
    cache: RwLock<Option<Arc<ProposalIndex>>>,
}

impl FileProposals {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileProposals { path: path.into(), cache: RwLock::new(None) }
    }

    fn table(&self) -> Result<Arc<HashMap<String, Vec<BBox>>>, DetectionError> {
        if let Some(t) = self.cache.read().expect("cache lock").as_ref() {
            return Ok(Arc::clone(t));
        }
        let mut slot = self.cache.write().expect("cache lock");
        if let Some(t) = slot.as_ref() {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(read_proposal_table(&self.path)?);
        *slot = Some(Arc::clone(&t));
        Ok(t)
    }

    pub fn boxes_for(&self, image_id: &str) -> Result<Vec<BBox>, DetectionError> {
        let table = self.table()?;
        match table.get(image_id) {
            Some(b) => Ok(b.clone()),
            None => {
                log::warn!("{}: no proposals for image {image_id}", self.path.display());
                Ok(Vec::new())
            }
        }
    }
}

impl ProposalProvider for FileProposals {
    fn name(&self) -> &'static str {
        "file"
    }

    fn wants_resized(&self) -> bool {
        false
    }

    fn propose(&self, _image: &RasterImage, image_id: &str) -> Result<Vec<BBox>, DetectionError> {
        self.boxes_for(image_id)
    }
}

#[derive(Deserialize)]
struct ProposalRecord {
    #[serde(default)]
    image_id: String,
    #[serde(rename = "box")]
    bbox: BBox,
}

fn is_json_lines(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "ndjson"))
}

fn read_proposal_table(path: &Path) -> Result<HashMap<String, Vec<BBox>>, DetectionError> {
    let mut table: HashMap<String, Vec<BBox>> = HashMap::new();
    if is_json_lines(path) {
        let text =
            std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        for rec in parse_records(&text, &path.display().to_string())? {
            table.entry(rec.image_id).or_default().push(rec.bbox);
        }
    } else {
        for a in load_annotations(path)? {
            table.entry(a.image_id).or_default().extend(a.regions.iter().map(|r| r.bbox));
        }
    }
    Ok(table)
}

fn parse_records(text: &str, origin: &str) -> Result<Vec<ProposalRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProposalRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            origin: origin.to_string(),
            record: format!("line {}", i + 1),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Boxes for `image_id` from a proposal or annotation file. Unknown ids
/// give an empty list (with a warning).
pub fn load_proposals(path: &Path, image_id: &str) -> Result<Vec<BBox>, DetectionError> {
    FileProposals::new(path).boxes_for(image_id)
}

// ----------------------------------------------------------- heuristic

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicSettings {
    /// Fixed luminance cut (dark = luminance ≤ cut); `None` uses Otsu.
    pub luminance_threshold: Option<u8>,
    /// Components merge when both gaps are ≤ this times the median
    /// component height.
    pub gap_factor: f64,
}

impl Default for HeuristicSettings {
    fn default() -> Self {
        HeuristicSettings { luminance_threshold: None, gap_factor: 0.6 }
    }
}

/// Non-learned text-block finder: binarize, label dark components, merge
/// nearby ones into blocks, score each block by ink density.
pub struct HeuristicDetector {
    pub settings: HeuristicSettings,
}

impl ProposalProvider for HeuristicDetector {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn wants_resized(&self) -> bool {
        true
    }

    fn propose(&self, image: &RasterImage, _image_id: &str) -> Result<Vec<BBox>, DetectionError> {
        Ok(heuristic_proposals(image, &self.settings))
    }
}

fn luminance_plane(image: &RasterImage) -> Vec<u8> {
    image
        .pixels()
        .chunks_exact(3)
        .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
        .collect()
}

/// Otsu's threshold: the cut `t` (dark = value ≤ t) maximizing the
/// between-class variance. `None` when all values are equal.
pub fn otsu_threshold(values: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in values {
        hist[v as usize] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0f64, 0f64);
    let mut best = (f64::NEG_INFINITY, 0u8);
    for (t, &count) in hist.iter().enumerate().take(255) {
        w0 += count as f64;
        sum0 += t as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Some(best.1)
}

/// Inclusive pixel bounds plus dark-pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Blob {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    pixels: u64,
}

impl Blob {
    fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    fn absorb(&mut self, o: &Blob) {
        self.x0 = self.x0.min(o.x0);
        self.y0 = self.y0.min(o.y0);
        self.x1 = self.x1.max(o.x1);
        self.y1 = self.y1.max(o.y1);
        self.pixels += o.pixels;
    }
}

/// 8-connected components of `dark`.
fn components(dark: &[bool], width: u32, height: u32) -> Vec<Blob> {
    let (w, h) = (width as usize, height as usize);
    let mut seen = vec![false; dark.len()];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..dark.len() {
        if !dark[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (sx, sy) = ((start % w) as u32, (start / w) as u32);
        let mut b = Blob { x0: sx, y0: sy, x1: sx, y1: sy, pixels: 0 };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            b.pixels += 1;
            b.x0 = b.x0.min(x as u32);
            b.x1 = b.x1.max(x as u32);
            b.y0 = b.y0.min(y as u32);
            b.y1 = b.y1.max(y as u32);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if dark[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        blobs.push(b);
    }
    blobs
}

fn gap(a0: u32, a1: u32, b0: u32, b1: u32) -> i64 {
    // empty pixels strictly between the two inclusive spans
    (b0 as i64 - a1 as i64 - 1).max(a0 as i64 - b1 as i64 - 1).max(0)
}

/// Merges blobs closer than `tol` on both axes until no pair qualifies.
fn merge_blobs(mut blobs: Vec<Blob>, tol: f64) -> Vec<Blob> {
    loop {
        blobs.sort_by_key(|b| (b.x0, b.y0, b.x1, b.y1, b.pixels));
        let n = blobs.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut merged_any = false;
        for i in 0..n {
            for j in i + 1..n {
                // sorted by x0, so later blobs only get further right
                if blobs[j].x0 as f64 > blobs[i].x1 as f64 + 1.0 + tol {
                    break;
                }
                let (a, b) = (&blobs[i], &blobs[j]);
                if gap(a.x0, a.x1, b.x0, b.x1) as f64 <= tol && gap(a.y0, a.y1, b.y0, b.y1) as f64 <= tol {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[rj] = ri;
                        merged_any = true;
                    }
                }
            }
        }
        if !merged_any {
            return blobs;
        }
        let mut groups: HashMap<usize, Blob> = HashMap::new();
        for (i, blob) in blobs.iter().enumerate() {
            let r = find(&mut parent, i);
            groups.entry(r).and_modify(|g| g.absorb(blob)).or_insert(*blob);
        }
        blobs = groups.into_values().collect();
    }
}

/// Scored text-block boxes for `image`; boxes cover whole pixels, so a dark
/// pixel span `x0..=x1` yields `x_min = x0`, `x_max = x1 + 1`.
pub fn heuristic_proposals(image: &RasterImage, settings: &HeuristicSettings) -> Vec<BBox> {
    let lum = luminance_plane(image);
    let Some(cut) = settings.luminance_threshold.or_else(|| otsu_threshold(&lum)) else {
        return Vec::new();
    };
    let dark: Vec<bool> = lum.iter().map(|&v| v <= cut).collect();
    let blobs = components(&dark, image.width(), image.height());
    if blobs.is_empty() {
        return Vec::new();
    }
    let mut heights: Vec<u32> = blobs.iter().map(Blob::height).collect();
    heights.sort_unstable();
    let median = heights[heights.len() / 2] as f64;
    let mut blocks = merge_blobs(blobs, settings.gap_factor * median);
    blocks.sort_by_key(|b| (b.y0, b.x0, b.y1, b.x1, b.pixels));
    blocks
        .iter()
        .map(|b| {
            let area = (b.x1 - b.x0 + 1) as f64 * (b.y1 - b.y0 + 1) as f64;
            BBox {
                x_min: b.x0 as f64,
                y_min: b.y0 as f64,
                x_max: b.x1 as f64 + 1.0,
                y_max: b.y1 as f64 + 1.0,
                score: (b.pixels as f64 / area).clamp(0.0, 1.0),
            }
        })
        .collect()
}

// ------------------------------------------------------------ external

/// Runs a shell command per page. The command receives the page as PNG on
/// stdin and `LEAFCAT_IMAGE_ID` in its environment, and prints one JSON
/// record per line with a `box` field.
pub struct ExternalDetector {
    pub command: String,
}

impl ExternalDetector {
    fn fail(&self, message: impl Into<String>) -> DetectionError {
        DetectionError::Provider { provider: "external", message: format!("`{}`: {}", self.command, message.into()) }
    }
}

impl ProposalProvider for ExternalDetector {
    fn name(&self) -> &'static str {
        "external"
    }

    fn wants_resized(&self) -> bool {
        true
    }

    fn propose(&self, image: &RasterImage, image_id: &str) -> Result<Vec<BBox>, DetectionError> {
        let png = image.to_png_bytes().map_err(|e| self.fail(e.to_string()))?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env("LEAFCAT_IMAGE_ID", image_id)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.fail(format!("cannot start: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            // a command that ignores its input closes the pipe early
            let _ = stdin.write_all(&png);
        });
        let out = child.wait_with_output().map_err(|e| self.fail(e.to_string()))?;
        let _ = writer.join();
        if !out.status.success() {
            let err = String::from_utf8_lossy(&out.stderr);
            return Err(self.fail(format!("exited with {}: {}", out.status, err.trim())));
        }
        let mut boxes = Vec::new();
        for (i, line) in out.stdout.lines().enumerate() {
            let line = line.map_err(|e| self.fail(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ProposalRecord =
                serde_json::from_str(&line).map_err(|e| self.fail(format!("output line {}: {e}", i + 1)))?;
            if !rec.image_id.is_empty() && rec.image_id != image_id {
                continue;
            }
            boxes.push(rec.bbox);
        }
        Ok(boxes)
    }
}
