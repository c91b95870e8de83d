//! Scoring page-level results against annotated promotions.

use std::collections::BTreeSet;

use super::PromotionResult;
use crate::corpus::{Annotation, CategoryId};
use crate::evaluation::{set_metrics, EvalError, Metrics};
use crate::geometry::iou;

/// Minimum IoU for a result box to count as finding an annotated region.
pub const MATCH_IOU: f64 = 0.5;

type Pair = (BTreeSet<CategoryId>, BTreeSet<CategoryId>);

/// (predicted, truth) category pairs for one page.
///
/// Results and regions are matched one-to-one, greedily by descending IoU,
/// among pairs with IoU ≥ [`MATCH_IOU`]. A missed region pairs its truth
/// with an empty prediction. An unmatched result that predicts something
/// pairs with an empty truth (a false positive); unmatched results that
/// predict nothing are dropped.
pub fn match_results(results: &[PromotionResult], annotation: &Annotation) -> Vec<Pair> {
    let regions = &annotation.regions;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let Some(b) = r.region else { continue };
        for (j, g) in regions.iter().enumerate() {
            let v = iou(&b, &g.bbox).unwrap_or(0.0);
            if v >= MATCH_IOU {
                candidates.push((v, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut result_used = vec![false; results.len()];
    let mut region_match: Vec<Option<usize>> = vec![None; regions.len()];
    for (_, i, j) in candidates {
        if !result_used[i] && region_match[j].is_none() {
            result_used[i] = true;
            region_match[j] = Some(i);
        }
    }
    let mut pairs: Vec<Pair> = regions
        .iter()
        .zip(&region_match)
        .map(|(g, m)| {
            let truth: BTreeSet<CategoryId> = g.categories.iter().copied().collect();
            let pred = m.map(|i| results[i].categories.iter().copied().collect()).unwrap_or_default();
            (pred, truth)
        })
        .collect();
    pairs.extend(
        results
            .iter()
            .zip(&result_used)
            .filter(|(r, used)| !**used && !r.categories.is_empty())
            .map(|(r, _)| (r.categories.iter().copied().collect(), BTreeSet::new())),
    );
    pairs
}

/// Mean metrics over every page's matched pairs.
pub fn score_pages(pages: &[(&[PromotionResult], &Annotation)]) -> Result<Metrics, EvalError> {
    let pairs: Vec<Pair> = pages.iter().flat_map(|(r, a)| match_results(r, a)).collect();
    set_metrics(&pairs)
}
