//! Hashed character n-gram and whole-word features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtractorConfig {
    /// Character n-gram length.
    pub ngram_len: usize,
    /// Hash space for n-grams (and unknown words).
    pub bucket_count: usize,
    pub include_word_tokens: bool,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        FeatureExtractorConfig { ngram_len: 3, bucket_count: 1 << 21, include_word_tokens: true }
    }
}

impl FeatureExtractorConfig {
    pub fn is_valid(&self) -> bool {
        self.ngram_len >= 1 && self.bucket_count >= 1 && self.bucket_count <= u32::MAX as usize
    }
}

/// Bag of feature ids; order carries no meaning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector {
    pub ids: Vec<u32>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Feature extractor with the word vocabulary learned at training time.
///
/// Ids `[0, bucket_count)` are hashed n-grams; ids from `bucket_count` on are
/// vocabulary words. Out-of-vocabulary words fall back to a hashed bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    config: FeatureExtractorConfig,
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureExtractorConfig) -> Self {
        FeatureExtractor { config, words: Vec::new(), index: HashMap::new() }
    }

    /// Vocabulary in first-seen order over `texts`.
    pub fn with_vocabulary<'a>(config: FeatureExtractorConfig, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ex = Self::new(config);
        for t in texts {
            for w in t.split_whitespace() {
                ex.add_word(w);
            }
        }
        ex
    }

    pub(crate) fn from_words(config: FeatureExtractorConfig, words: Vec<String>) -> Self {
        let mut ex = Self::new(config);
        for w in words {
            ex.add_word(&w);
        }
        ex
    }

    fn add_word(&mut self, w: &str) {
        if !self.index.contains_key(w) {
            self.index.insert(w.to_string(), self.words.len() as u32);
            self.words.push(w.to_string());
        }
    }

    pub fn config(&self) -> &FeatureExtractorConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    /// Size of the id space.
    pub fn feature_count(&self) -> usize {
        self.config.bucket_count + self.words.len()
    }

    fn bucket(&self, bytes: &[u8]) -> u32 {
        (fnv1a64(bytes) % self.config.bucket_count as u64) as u32
    }

    pub fn extract(&self, text: &str) -> FeatureVector {
        let n = self.config.ngram_len;
        let mut ids = Vec::new();
        let mut gram = String::new();
        for token in text.split_whitespace() {
            let wrapped: Vec<char> = std::iter::once('<').chain(token.chars()).chain(std::iter::once('>')).collect();
            if wrapped.len() <= n {
                gram.clear();
                gram.extend(&wrapped);
                ids.push(self.bucket(gram.as_bytes()));
            } else {
                for window in wrapped.windows(n) {
                    gram.clear();
                    gram.extend(window);
                    ids.push(self.bucket(gram.as_bytes()));
                }
            }
            if self.config.include_word_tokens {
                let id = match self.index.get(token) {
                    Some(&i) => self.config.bucket_count as u32 + i,
                    // leading NUL keeps word hashes apart from n-gram hashes
                    None => self.bucket(&[&[0u8][..], token.as_bytes()].concat()),
                };
                ids.push(id);
            }
        }
        FeatureVector { ids }
    }
}

/// Features of `text` with an empty word vocabulary.
pub fn extract_features(text: &str, cfg: &FeatureExtractorConfig) -> FeatureVector {
    FeatureExtractor::new(cfg.clone()).extract(text)
}
