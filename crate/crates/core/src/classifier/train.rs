use std::collections::BTreeSet;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective;
use super::{ClassifierError, ClassifierModel, FeatureExtractor, FeatureExtractorConfig};
use crate::corpus::CategoryId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial learning rate; decays linearly to zero over training.
    pub lr: f64,
    /// Number of processed samples between learning-rate updates.
    pub lr_update_rate: usize,
    pub epochs: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 0.1, lr_update_rate: 100, epochs: 30, dim: 100, seed: 1 }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ClassifierError::Config("lr must be positive".into()));
        }
        if self.epochs == 0 || self.dim == 0 || self.lr_update_rate == 0 {
            return Err(ClassifierError::Config("epochs, dim and lr_update_rate must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean per-sample loss seen during each epoch (before each update).
    pub epoch_losses: Vec<f64>,
}

pub fn train(
    samples: &[(String, Vec<CategoryId>)],
    cfg: &TrainConfig,
    extractor: &FeatureExtractorConfig,
) -> Result<ClassifierModel, ClassifierError> {
    train_with_report(samples, cfg, extractor).map(|(m, _)| m)
}

/// Trains with the label vocabulary taken from the samples (sorted ids).
pub fn train_with_report(
    samples: &[(String, Vec<CategoryId>)],
    cfg: &TrainConfig,
    extractor: &FeatureExtractorConfig,
) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    let labels: BTreeSet<CategoryId> = samples.iter().flat_map(|(_, c)| c.iter().copied()).collect();
    train_with_labels(samples, labels.into_iter().collect(), cfg, extractor)
}

/// Plain SGD on the summed one-vs-all cross-entropy, one sample at a time.
pub fn train_with_labels(
    samples: &[(String, Vec<CategoryId>)],
    labels: Vec<CategoryId>,
    cfg: &TrainConfig,
    extractor_cfg: &FeatureExtractorConfig,
) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    cfg.validate()?;
    if !extractor_cfg.is_valid() {
        return Err(ClassifierError::Config("invalid feature extractor config".into()));
    }
    if samples.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let mut targets = Vec::with_capacity(samples.len());
    for (index, (_, cats)) in samples.iter().enumerate() {
        if cats.is_empty() {
            return Err(ClassifierError::EmptyLabelSet { index });
        }
        let mut t = vec![false; labels.len()];
        for &category in cats {
            let pos = labels.iter().position(|&l| l == category).ok_or(ClassifierError::UnknownLabel { index, category })?;
            t[pos] = true;
        }
        targets.push(t);
    }

    let extractor = FeatureExtractor::with_vocabulary(extractor_cfg.clone(), samples.iter().map(|(t, _)| t.as_str()));
    let features: Vec<Vec<u32>> = samples.iter().map(|(t, _)| extractor.extract(t).ids).collect();

    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / dim as f32;
    let init = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let mut emb: Vec<f32> = (0..extractor.feature_count() * dim).map(|_| init.sample(&mut rng)).collect();
    let mut out = vec![0f32; labels.len() * dim];

    let total = (cfg.epochs * samples.len()) as f64;
    let mut processed = 0usize;
    let mut lr = cfg.lr as f32;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0f64;
        for &i in &order {
            if processed.is_multiple_of(cfg.lr_update_rate) {
                lr = (cfg.lr * (1.0 - processed as f64 / total)) as f32;
            }
            let ids = &features[i];
            let g = objective::gradients(&emb, &out, dim, ids, &targets[i]);
            epoch_loss += g.loss as f64;
            for (w, gw) in out.iter_mut().zip(&g.output) {
                *w -= lr * gw;
            }
            if !ids.is_empty() {
                let scale = lr / ids.len() as f32;
                for &id in ids {
                    let row = &mut emb[id as usize * dim..(id as usize + 1) * dim];
                    for (v, gh) in row.iter_mut().zip(&g.hidden) {
                        *v -= scale * gh;
                    }
                }
            }
            processed += 1;
        }
        report.epoch_losses.push(epoch_loss / samples.len() as f64);
    }

    let model = ClassifierModel::from_parts(extractor, labels, dim, emb, out)?;
    Ok((model, report))
}

/// Mean summed cross-entropy of `model` over `samples`. Categories missing
/// from the model's labels are ignored.
pub fn dataset_loss(model: &ClassifierModel, samples: &[(String, Vec<CategoryId>)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|(text, cats)| {
            let probs = model.predict_probs(text);
            model
                .labels()
                .iter()
                .zip(probs)
                .map(|(l, p)| {
                    let p = p.clamp(1e-15, 1.0 - 1e-15);
                    if cats.contains(l) {
                        -p.ln()
                    } else {
                        -(1.0 - p).ln()
                    }
                })
                .sum::<f64>()
        })
        .sum();
    total / samples.len() as f64
}
