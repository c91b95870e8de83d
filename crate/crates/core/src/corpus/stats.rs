use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Annotation, CategoryId, CorpusError};

/// Dataset summary in the layout of a leaflet-corpus statistics table.
///
/// A sample is one promotion region. A region with several categories
/// counts `1/k` towards each of its `k` categories, so per-category counts
/// sum to the sample count and their mean is `samples / categories`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub languages: usize,
    pub retailers: usize,
    pub images: usize,
    pub samples: usize,
    pub categories: usize,
    pub mean_samples_per_category: f64,
    /// Population standard deviation.
    pub std_samples_per_category: f64,
}

pub fn compute_stats(annotations: &[Annotation]) -> Result<CorpusStats, CorpusError> {
    if annotations.is_empty() {
        return Err(CorpusError::Empty);
    }
    let languages: BTreeSet<&str> = annotations.iter().map(|a| a.language.as_str()).collect();
    let retailers: BTreeSet<&str> = annotations.iter().map(|a| a.retailer.as_str()).collect();
    let mut per_category: BTreeMap<CategoryId, f64> = BTreeMap::new();
    let mut samples = 0usize;
    for r in annotations.iter().flat_map(|a| &a.regions) {
        samples += 1;
        let share = 1.0 / r.categories.len() as f64;
        for &c in &r.categories {
            *per_category.entry(c).or_default() += share;
        }
    }
    let categories = per_category.len();
    let (mean, std) = if categories == 0 {
        (0.0, 0.0)
    } else {
        let mean = samples as f64 / categories as f64;
        let var = per_category.values().map(|&n| (n - mean).powi(2)).sum::<f64>() / categories as f64;
        (mean, var.sqrt())
    };
    Ok(CorpusStats {
        languages: languages.len(),
        retailers: retailers.len(),
        images: annotations.len(),
        samples,
        categories,
        mean_samples_per_category: mean,
        std_samples_per_category: std,
    })
}

/// Aligned text table, one row per named dataset.
pub fn format_stats_table(rows: &[(&str, &CorpusStats)]) -> String {
    let header = [
        "Dataset",
        "#Languages",
        "#Retailers",
        "#Images",
        "#Samples",
        "#Categories",
        "Avg. samples per cat.",
        "Std. samples per cat.",
    ];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|(name, s)| {
            [
                name.to_string(),
                s.languages.to_string(),
                s.retailers.to_string(),
                s.images.to_string(),
                s.samples.to_string(),
                s.categories.to_string(),
                format!("{:.2}", s.mean_samples_per_category),
                format!("{:.2}", s.std_samples_per_category),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..8).map(|i| body.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap()).collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for r in &body {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
