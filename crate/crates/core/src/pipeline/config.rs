use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::detector::{DetectionConfig, HeuristicSettings, RegionProposalSource};
use crate::ocr::{MockOcr, RemoteOcrConfig};

/// Environment variable that overrides `ocr_api_key`.
pub const OCR_API_KEY_ENV: &str = "LEAFCAT_OCR_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Heuristic,
    File,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcrKind {
    Mock,
    Remote,
}

/// Flat key/value settings, read from a TOML file. Relative paths are taken
/// relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub detector: DetectorKind,
    pub proposals_path: Option<PathBuf>,
    pub external_command: Option<String>,
    pub confidence_threshold: f64,
    pub nms_iou_threshold: f64,
    pub resize_target: u32,
    pub luminance_threshold: Option<u8>,
    pub gap_factor: f64,

    pub ocr: OcrKind,
    pub ocr_annotations: Option<PathBuf>,
    pub ocr_endpoint: Option<String>,
    pub ocr_api_key: Option<String>,
    pub ocr_timeout_secs: f64,
    pub ocr_max_in_flight: usize,
    pub paragraph_gap_factor: f64,

    pub dictionary: Option<PathBuf>,
    pub max_edit_distance: usize,
    pub min_token_len_for_correction: usize,

    pub model: Option<PathBuf>,
    pub classify_threshold: f64,
    pub baseline_mode: bool,
    pub baseline_threshold: f64,
    /// Worker threads for multi-image runs; 0 uses every core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let det = DetectionConfig::default();
        let heur = HeuristicSettings::default();
        PipelineConfig {
            detector: DetectorKind::Heuristic,
            proposals_path: None,
            external_command: None,
            confidence_threshold: det.confidence_threshold,
            nms_iou_threshold: det.nms_iou_threshold,
            resize_target: det.resize_target,
            luminance_threshold: heur.luminance_threshold,
            gap_factor: heur.gap_factor,
            ocr: OcrKind::Mock,
            ocr_annotations: None,
            ocr_endpoint: None,
            ocr_api_key: None,
            ocr_timeout_secs: 30.0,
            ocr_max_in_flight: 4,
            paragraph_gap_factor: MockOcr::DEFAULT_PARAGRAPH_GAP_FACTOR,
            dictionary: None,
            max_edit_distance: 1,
            min_token_len_for_correction: 4,
            model: None,
            classify_threshold: 0.25,
            baseline_mode: false,
            baseline_threshold: 0.40,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config { origin: origin.to_string(), message: e.to_string() })?;
        cfg.validate().map_err(|message| PipelineError::Config { origin: origin.to_string(), message })?;
        Ok(cfg)
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// applies the credential environment override.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config { origin: origin.clone(), message: e.to_string() })?;
        let mut cfg = Self::from_toml(&text, &origin)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in
            [&mut self.proposals_path, &mut self.ocr_annotations, &mut self.dictionary, &mut self.model].into_iter().flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply_env(&mut self) {
        if let Ok(key) = std::env::var(OCR_API_KEY_ENV) {
            if !key.is_empty() {
                self.ocr_api_key = Some(key);
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} is outside [0, 1]"))
            }
        };
        unit("confidence_threshold", self.confidence_threshold)?;
        unit("nms_iou_threshold", self.nms_iou_threshold)?;
        unit("classify_threshold", self.classify_threshold)?;
        unit("baseline_threshold", self.baseline_threshold)?;
        if self.resize_target == 0 {
            return Err("resize_target must be positive".into());
        }
        if !(self.gap_factor >= 0.0 && self.paragraph_gap_factor >= 0.0) {
            return Err("gap factors must be non-negative".into());
        }
        if !(self.ocr_timeout_secs > 0.0 && self.ocr_timeout_secs.is_finite()) {
            return Err("ocr_timeout_secs must be positive".into());
        }
        match self.detector {
            DetectorKind::File if self.proposals_path.is_none() => return Err("detector = \"file\" needs proposals_path".into()),
            DetectorKind::External if self.external_command.is_none() => {
                return Err("detector = \"external\" needs external_command".into())
            }
            _ => {}
        }
        if self.ocr == OcrKind::Remote && self.ocr_endpoint.is_none() {
            return Err("ocr = \"remote\" needs ocr_endpoint".into());
        }
        Ok(())
    }

    pub fn detection(&self) -> DetectionConfig {
        DetectionConfig {
            confidence_threshold: self.confidence_threshold,
            nms_iou_threshold: self.nms_iou_threshold,
            resize_target: self.resize_target,
        }
    }

    pub fn proposal_source(&self) -> RegionProposalSource {
        match self.detector {
            DetectorKind::Heuristic => RegionProposalSource::Heuristic(HeuristicSettings {
                luminance_threshold: self.luminance_threshold,
                gap_factor: self.gap_factor,
            }),
            DetectorKind::File => RegionProposalSource::File { path: self.proposals_path.clone().unwrap_or_default() },
            DetectorKind::External => {
                RegionProposalSource::External { command: self.external_command.clone().unwrap_or_default() }
            }
        }
    }

    pub fn remote_ocr(&self) -> RemoteOcrConfig {
        RemoteOcrConfig {
            endpoint: self.ocr_endpoint.clone().unwrap_or_default(),
            api_key: self.ocr_api_key.clone(),
            timeout: Duration::from_secs_f64(self.ocr_timeout_secs),
            max_in_flight: self.ocr_max_in_flight,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml("", "t").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.classify_threshold, 0.25);
        assert_eq!(cfg.baseline_threshold, 0.40);
        let cfg =
            PipelineConfig::from_toml("detector = \"file\"\nproposals_path = \"p.json\"\nbaseline_mode = true\njobs = 3\n", "t")
                .unwrap();
        assert_eq!(cfg.detector, DetectorKind::File);
        assert!(cfg.baseline_mode);
        assert_eq!(cfg.jobs, 3);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml("classify_threshold = 1.5", "t").is_err());
        assert!(PipelineConfig::from_toml("detector = \"file\"", "t").is_err());
        assert!(PipelineConfig::from_toml("no_such_key = 1", "t").is_err());
        assert!(PipelineConfig::from_toml("ocr = \"remote\"", "t").is_err());
        let err = PipelineConfig::from_toml("detector = 3", "cfg.toml").unwrap_err().to_string();
        assert!(err.contains("cfg.toml"), "{err}");
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut cfg =
            PipelineConfig { model: Some("m.bin".into()), dictionary: Some("/abs/d.txt".into()), ..PipelineConfig::default() };
        cfg.resolve_paths(Path::new("/etc/leafcat"));
        assert_eq!(cfg.model.unwrap(), PathBuf::from("/etc/leafcat/m.bin"));
        assert_eq!(cfg.dictionary.unwrap(), PathBuf::from("/abs/d.txt"));
    }
}
