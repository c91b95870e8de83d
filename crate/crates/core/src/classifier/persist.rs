//! Binary model format (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "LFCATMDL"
//! version      u32
//! ngram_len    u32
//! bucket_count u64
//! word_tokens  u8       0 or 1
//! dim          u32
//! labels       u32 count, then u32 each
//! vocabulary   u32 count, then (u32 byte length, UTF-8 bytes) each
//! rows         u64      embedding rows, bucket_count + vocabulary size
//! embeddings   rows * dim f32
//! output       labels * dim f32
//! checksum     u64      FNV-1a of every preceding byte
//! ```

use std::path::Path;

use super::features::fnv1a64;
use super::{ClassifierError, ClassifierModel, FeatureExtractor, FeatureExtractorConfig};

pub const MODEL_MAGIC: &[u8; 8] = b"LFCATMDL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel, ClassifierError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })?;
    decode(&bytes)
}

pub(crate) fn encode(model: &ClassifierModel) -> Vec<u8> {
    let cfg = model.extractor().config();
    let mut b = Vec::with_capacity(64 + 4 * (model.embeddings().len() + model.output_weights().len()));
    b.extend_from_slice(MODEL_MAGIC);
    b.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    b.extend_from_slice(&(cfg.ngram_len as u32).to_le_bytes());
    b.extend_from_slice(&(cfg.bucket_count as u64).to_le_bytes());
    b.push(cfg.include_word_tokens as u8);
    b.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    b.extend_from_slice(&(model.labels().len() as u32).to_le_bytes());
    for l in model.labels() {
        b.extend_from_slice(&l.to_le_bytes());
    }
    let vocab = model.extractor().vocabulary();
    b.extend_from_slice(&(vocab.len() as u32).to_le_bytes());
    for w in vocab {
        b.extend_from_slice(&(w.len() as u32).to_le_bytes());
        b.extend_from_slice(w.as_bytes());
    }
    b.extend_from_slice(&(model.extractor().feature_count() as u64).to_le_bytes());
    for v in model.embeddings().iter().chain(model.output_weights()) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    let sum = fnv1a64(&b);
    b.extend_from_slice(&sum.to_le_bytes());
    b
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: u64) -> Result<&'a [u8], ClassifierError> {
        // the trailing checksum must still fit after this field
        let end = (self.pos as u64).saturating_add(n);
        let needed = end.saturating_add(8);
        if needed > self.bytes.len() as u64 {
            return Err(ClassifierError::Truncated { expected: needed, found: self.bytes.len() as u64 });
        }
        let s = &self.bytes[self.pos..end as usize];
        self.pos = end as usize;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ClassifierError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ClassifierError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ClassifierError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: u64) -> Result<Vec<f32>, ClassifierError> {
        let raw = self.take(count.saturating_mul(4))?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<ClassifierModel, ClassifierError> {
    if bytes.len() < 8 || &bytes[..8] != MODEL_MAGIC {
        return Err(ClassifierError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 8 };
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ClassifierError::UnsupportedVersion { found: version, supported: MODEL_FORMAT_VERSION });
    }
    let ngram_len = r.u32()? as usize;
    let bucket_count = r.u64()?;
    let include_word_tokens = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(ClassifierError::Malformed(format!("word-token flag {other}"))),
    };
    let dim = r.u32()? as u64;
    let n_labels = r.u32()?;
    let mut labels = Vec::new();
    for _ in 0..n_labels {
        labels.push(r.u32()?);
    }
    let n_words = r.u32()?;
    let mut words = Vec::new();
    for _ in 0..n_words {
        let len = r.u32()? as u64;
        let w =
            std::str::from_utf8(r.take(len)?).map_err(|_| ClassifierError::Malformed("vocabulary word is not UTF-8".into()))?;
        words.push(w.to_string());
    }
    let rows = r.u64()?;
    if rows != bucket_count.saturating_add(n_words as u64) {
        return Err(ClassifierError::Malformed(format!("{rows} embedding rows for {bucket_count} buckets and {n_words} words")));
    }
    let emb = r.f32s(rows.saturating_mul(dim))?;
    let out = r.f32s((n_labels as u64).saturating_mul(dim))?;
    let body_len = r.pos;
    let expected = body_len as u64 + 8;
    if bytes.len() as u64 != expected {
        return Err(ClassifierError::Malformed(format!("{} trailing bytes", bytes.len() as u64 - expected)));
    }
    let stored = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = fnv1a64(&bytes[..body_len]);
    if stored != computed {
        return Err(ClassifierError::ChecksumMismatch { stored, computed });
    }
    let cfg = FeatureExtractorConfig { ngram_len, bucket_count: bucket_count as usize, include_word_tokens };
    if !cfg.is_valid() {
        return Err(ClassifierError::Malformed("invalid feature extractor config".into()));
    }
    let extractor = FeatureExtractor::from_words(cfg, words);
    if extractor.vocabulary().len() != n_words as usize {
        return Err(ClassifierError::Malformed("duplicate vocabulary word".into()));
    }
    ClassifierModel::from_parts(extractor, labels, dim as usize, emb, out).map_err(|e| ClassifierError::Malformed(e.to_string()))
}
