//! Multi-label product category classifier.
//!
//! Each text becomes a bag of hashed character n-grams plus word ids. The
//! bag's embedding rows are averaged into one hidden vector, which feeds an
//! independent sigmoid output per category. Categories whose probability is
//! strictly above a threshold are the prediction.

mod features;
pub mod objective;
mod persist;
mod train;

use thiserror::Error;

use crate::corpus::CategoryId;

pub use features::{extract_features, fnv1a64, FeatureExtractor, FeatureExtractorConfig, FeatureVector};
pub use persist::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use train::{dataset_loss, train, train_with_labels, train_with_report, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("feature id {id} out of range for a model with {rows} embedding rows")]
    FeatureOutOfRange { id: u32, rows: usize },
    #[error("inconsistent model: {0}")]
    Shape(String),
    #[error("no training samples")]
    EmptyTrainingSet,
    #[error("training sample {index} has no category")]
    EmptyLabelSet { index: usize },
    #[error("sample {index} has category {category} outside the label vocabulary")]
    UnknownLabel { index: usize, category: CategoryId },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("model format version {found} is newer than supported version {supported}")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("model checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("malformed model file: {0}")]
    Malformed(String),
}

/// Trained classifier. Immutable once built; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    extractor: FeatureExtractor,
    labels: Vec<CategoryId>,
    dim: usize,
    embeddings: Vec<f32>,
    output: Vec<f32>,
}

impl ClassifierModel {
    pub fn from_parts(
        extractor: FeatureExtractor,
        labels: Vec<CategoryId>,
        dim: usize,
        embeddings: Vec<f32>,
        output: Vec<f32>,
    ) -> Result<Self, ClassifierError> {
        if dim == 0 {
            return Err(ClassifierError::Shape("dim must be positive".into()));
        }
        if !extractor.config().is_valid() {
            return Err(ClassifierError::Shape("invalid feature extractor config".into()));
        }
        let rows = extractor.feature_count();
        if embeddings.len() != rows * dim {
            return Err(ClassifierError::Shape(format!(
                "embedding matrix has {} values, expected {rows}x{dim}",
                embeddings.len()
            )));
        }
        if output.len() != labels.len() * dim {
            return Err(ClassifierError::Shape(format!(
                "output matrix has {} values, expected {}x{dim}",
                output.len(),
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(**l)) {
            return Err(ClassifierError::Shape(format!("duplicate label {dup}")));
        }
        Ok(ClassifierModel { extractor, labels, dim, embeddings, output })
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn labels(&self) -> &[CategoryId] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn output_weights(&self) -> &[f32] {
        &self.output
    }

    pub fn label_index(&self, category: CategoryId) -> Option<usize> {
        self.labels.iter().position(|&c| c == category)
    }

    /// Category ids for label indices.
    pub fn categories(&self, indices: &[usize]) -> Vec<CategoryId> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn predict_probs(&self, text: &str) -> Vec<f64> {
        predict_probs(text, self)
    }
}

/// Mean of the embedding rows named by `fv`, in double precision.
pub fn embed(fv: &FeatureVector, model: &ClassifierModel) -> Result<Vec<f64>, ClassifierError> {
    let rows = model.extractor.feature_count();
    if let Some(&id) = fv.ids.iter().find(|&&id| id as usize >= rows) {
        return Err(ClassifierError::FeatureOutOfRange { id, rows });
    }
    Ok(embed_unchecked(fv, model))
}

fn embed_unchecked(fv: &FeatureVector, model: &ClassifierModel) -> Vec<f64> {
    let dim = model.dim;
    let mut h = vec![0f64; dim];
    if fv.is_empty() {
        return h;
    }
    for &id in &fv.ids {
        let row = &model.embeddings[id as usize * dim..(id as usize + 1) * dim];
        for (acc, &v) in h.iter_mut().zip(row) {
            *acc += v as f64;
        }
    }
    let n = fv.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Per-label probabilities, aligned with `model.labels()`.
pub fn predict_probs(text: &str, model: &ClassifierModel) -> Vec<f64> {
    let fv = model.extractor.extract(text);
    let h = embed_unchecked(&fv, model);
    model
        .output
        .chunks_exact(model.dim)
        .map(|w| objective::sigmoid(w.iter().zip(&h).map(|(&a, &b)| a as f64 * b).sum::<f64>()))
        .collect()
}

/// Indices of labels whose probability is strictly above `threshold`.
pub fn decode_labels(probs: &[f64], threshold: f64) -> Vec<usize> {
    probs.iter().enumerate().filter(|(_, &p)| p > threshold).map(|(i, _)| i).collect()
}
