//! Acceptance suite. Runs every criterion in sequence, prints one line per
//! criterion and exits non-zero if any fails.
//!
//! Runs without the libtest harness so the report is always shown by
//! `cargo test`. Run it alone with `cargo test -p leafcat-core --test acceptance`.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leafcat::classifier::objective::{embedding_row_gradient, gradients, loss};
use leafcat::classifier::{load_model, save_model, train, ClassifierModel, FeatureExtractorConfig, TrainConfig};
use leafcat::corpus::{
    compute_stats, generate_annotations, generate_synthetic, render_page, save_annotations, Annotation, CategoryId, Region,
    SyntheticConfig,
};
use leafcat::detector::{HeuristicDetector, HeuristicSettings};
use leafcat::evaluation::{curves_csv, metrics_at, threshold_sweep, EvalReport, EvalSample};
use leafcat::geometry::{iou, nms, BBox};
use leafcat::masking::apply_mask;
use leafcat::ocr::{group_words, postprocess, MockOcr, OcrProvider, PostprocessConfig};
use leafcat::pipeline::{eval_samples, list_pages, score_pages, training_samples, Pipeline, PipelineConfig, PromotionResult};

/// Hash buckets used wherever a model is trained here. The default (2^21)
/// allocates ~840 MB at dim 100; collisions are negligible for the few
/// thousand distinct n-grams of the synthetic corpus at 2^16.
const BUCKETS: usize = 1 << 16;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn features() -> FeatureExtractorConfig {
    FeatureExtractorConfig { bucket_count: BUCKETS, ..FeatureExtractorConfig::default() }
}

// ------------------------------------------------------------------ 1

fn ref_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
    inter / union
}

/// Literal greedy loop: take the best remaining box (first on ties), drop
/// everything overlapping it by more than the threshold, repeat.
fn ref_nms(boxes: &[BBox], threshold: f64) -> Vec<BBox> {
    let mut remaining: Vec<BBox> = boxes.to_vec();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for (i, b) in remaining.iter().enumerate() {
            if b.score > remaining[best].score {
                best = i;
            }
        }
        let chosen = remaining.remove(best);
        remaining.retain(|b| ref_iou(&chosen, b) <= threshold);
        kept.push(chosen);
    }
    kept
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    // integer grid and coarse scores so ties in score and IoU occur
    let x = rng.random_range(0..60) as f64;
    let y = rng.random_range(0..60) as f64;
    let w = rng.random_range(1..30) as f64;
    let h = rng.random_range(1..30) as f64;
    BBox::from_coords(x, y, x + w, y + h).with_score(rng.random_range(0..20) as f64 / 20.0)
}

fn criterion_geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for instance in 0..1000 {
        let n = rng.random_range(0..=200);
        let boxes: Vec<BBox> = (0..n).map(|_| random_box(&mut rng)).collect();
        let threshold = match instance % 4 {
            0 => 0.5,
            1 => rng.random_range(0..=10) as f64 / 10.0,
            _ => rng.random_range(0.0..=1.0),
        };
        if nms(&boxes, threshold) != ref_nms(&boxes, threshold) {
            mismatches += 1;
        }
    }
    let mut iou_failures = 0;
    for _ in 0..10_000 {
        let a = random_box(&mut rng);
        let b = random_box(&mut rng);
        let ab = iou(&a, &b).unwrap();
        let ba = iou(&b, &a).unwrap();
        let same = iou(&a, &a).unwrap();
        let shift = a.x_max - b.x_min + rng.random_range(0..5) as f64;
        let apart = BBox::from_coords(b.x_min + shift, b.y_min, b.x_max + shift, b.y_max);
        let disjoint = iou(&a, &apart).unwrap();
        let ok = ab == ba
            && (0.0..=1.0).contains(&ab)
            && (same - 1.0).abs() < 1e-12
            && disjoint == 0.0
            && (ab - ref_iou(&a, &b)).abs() < 1e-12;
        if !ok {
            iou_failures += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && iou_failures == 0 && elapsed < Duration::from_secs(5),
        format!(
            "{mismatches}/1000 NMS mismatches, {iou_failures}/10000 IoU property failures, {:.2} s (limit 5 s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------------ 2

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn criterion_gradients() -> Outcome {
    const EPS: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rows = rng.random_range(2..20);
        let dim = rng.random_range(1..12);
        let labels = rng.random_range(1..8);
        let mut emb: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut out: Vec<f64> = (0..labels * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ids: Vec<u32> = (0..rng.random_range(1..10)).map(|_| rng.random_range(0..rows as u32)).collect();
        let targets: Vec<bool> = (0..labels).map(|_| rng.random_bool(0.3)).collect();
        let g = gradients(&emb, &out, dim, &ids, &targets);

        let mut numeric = Vec::with_capacity(out.len());
        for i in 0..out.len() {
            let orig = out[i];
            out[i] = orig + EPS;
            let up = loss(&emb, &out, dim, &ids, &targets);
            out[i] = orig - EPS;
            let down = loss(&emb, &out, dim, &ids, &targets);
            out[i] = orig;
            numeric.push((up - down) / (2.0 * EPS));
        }
        worst = worst.max(rel_error(&g.output, &numeric));

        // every row, including ones absent from `ids` (gradient zero)
        for row in 0..rows {
            let analytic = embedding_row_gradient(&g, &ids, row as u32);
            let numeric: Vec<f64> = (0..dim)
                .map(|d| {
                    let k = row * dim + d;
                    let orig = emb[k];
                    emb[k] = orig + EPS;
                    let up = loss(&emb, &out, dim, &ids, &targets);
                    emb[k] = orig - EPS;
                    let down = loss(&emb, &out, dim, &ids, &targets);
                    emb[k] = orig;
                    (up - down) / (2.0 * EPS)
                })
                .collect();
            worst = worst.max(rel_error(&analytic, &numeric));
        }
    }
    outcome(worst < 1e-4, format!("worst relative error {worst:.2e} over 100 configurations (limit 1e-4)"))
}

// ------------------------------------------------------------------ 3

struct Converged {
    model: ClassifierModel,
    held_out: Vec<EvalSample>,
}

fn criterion_convergence() -> (Outcome, Converged) {
    let cfg = SyntheticConfig {
        seed: 3,
        images: 1100,
        categories: 20,
        zipf_exponent: 1.2,
        multi_label_prob: 0.3,
        ..SyntheticConfig::default()
    };
    let anns = generate_annotations(&cfg).expect("corpus");
    let mut samples = training_samples(&anns, &PostprocessConfig::default());
    assert!(samples.len() >= 5000, "corpus too small: {}", samples.len());
    samples.truncate(5000);
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let (train_set, test_set) = samples.split_at(4000);

    let tc = TrainConfig::default();
    assert_eq!((tc.lr, tc.lr_update_rate, tc.epochs), (0.1, 100, 30));
    let fc = features();
    assert_eq!(fc.ngram_len, 3);
    let start = Instant::now();
    let model = train(train_set, &tc, &fc).expect("training");
    let elapsed = start.elapsed();

    let held_out = eval_samples(&model, test_set).expect("labels known");
    let acc = metrics_at(&held_out, 0.25).unwrap().accuracy;
    let result = outcome(
        acc >= 0.95 && elapsed < Duration::from_secs(60),
        format!(
            "held-out Jaccard accuracy {acc:.4} at 0.25 (bar 0.95), 4000/1000 split, training {:.1} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    );
    (result, Converged { model, held_out })
}

// ------------------------------------------------------------------ 4

fn jaccard_at(samples: &[EvalSample], t: f64) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            let pred: BTreeSet<usize> = (0..s.probs.len()).filter(|&i| s.probs[i] > t).collect();
            let union = pred.union(&s.truth).count();
            if union == 0 {
                1.0
            } else {
                pred.intersection(&s.truth).count() as f64 / union as f64
            }
        })
        .sum();
    total / samples.len() as f64
}

/// Selection rule re-derived independently: first grid point with the
/// highest accuracy.
fn check_sweep(samples: &[EvalSample], report: &EvalReport) -> Result<(), String> {
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for i in 0..=100 {
        let t = i as f64 / 100.0;
        let acc = jaccard_at(samples, t);
        if acc > best.0 + 1e-12 {
            best = (acc, t);
        }
    }
    if (report.best_threshold - best.1).abs() > 1e-9 {
        return Err(format!("best threshold {} but oracle says {}", report.best_threshold, best.1));
    }
    if report.points.len() != 101 {
        return Err(format!("{} grid points", report.points.len()));
    }
    if report.points.windows(2).any(|w| w[1].metrics.recall > w[0].metrics.recall + 1e-12) {
        return Err("recall increases somewhere".into());
    }
    Ok(())
}

fn criterion_sweep(held_out: &[EvalSample]) -> Outcome {
    // label 0 is right; label 1 sits exactly on 0.30, so only t = 0.30 gives
    // a perfect decode
    let fixture: Vec<EvalSample> =
        (0..5).map(|i| EvalSample { probs: vec![0.305 + i as f64 * 0.001, 0.30], truth: [0].into() }).collect();
    let fixture_report = threshold_sweep(&fixture, 0.0, 1.0, 0.01).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let random: Vec<EvalSample> = (0..300)
        .map(|_| EvalSample {
            probs: (0..6).map(|_| rng.random_range(0.0..1.0)).collect(),
            truth: [rng.random_range(0..6)].into_iter().chain((0..6).filter(|_| rng.random_bool(0.3))).collect(),
        })
        .collect();

    let mut problems = Vec::new();
    if fixture_report.best_threshold != 0.30 {
        problems.push(format!("fixture optimum {} instead of 0.30", fixture_report.best_threshold));
    }
    for (name, samples) in [("fixture", &fixture[..]), ("held-out", held_out), ("random", &random[..])] {
        let report = threshold_sweep(samples, 0.0, 1.0, 0.01).unwrap();
        if let Err(e) = check_sweep(samples, &report) {
            problems.push(format!("{name}: {e}"));
        }
    }
    let detail = if problems.is_empty() {
        format!(
            "fixture optimum {:.2}; selection rule and non-increasing recall hold on 3 corpora",
            fixture_report.best_threshold
        )
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

// ------------------------------------------------------------------ 5

fn criterion_table2() -> Outcome {
    let train_cfg = SyntheticConfig { seed: 101, images: 600, ..SyntheticConfig::default() };
    let train_anns = generate_annotations(&train_cfg).unwrap();
    let model =
        train(&training_samples(&train_anns, &PostprocessConfig::default()), &TrainConfig::default(), &features()).unwrap();

    let bench_cfg = SyntheticConfig { seed: 202, images: 200, distractor_density: 0.5, ..SyntheticConfig::default() };
    let (images, anns) = generate_synthetic(&bench_cfg).unwrap();
    let pipeline = Pipeline::new(
        PipelineConfig::default(),
        Box::new(HeuristicDetector { settings: HeuristicSettings::default() }),
        Box::new(MockOcr::from_annotations(&anns)),
        model,
        PostprocessConfig::default(),
    );
    let full: Vec<Vec<PromotionResult>> =
        images.iter().zip(&anns).map(|(img, a)| pipeline.run_pipeline(img, &a.image_id).unwrap()).collect();
    let base: Vec<Vec<PromotionResult>> =
        images.iter().zip(&anns).map(|(img, a)| pipeline.run_baseline(img, &a.image_id).unwrap()).collect();
    let score = |res: &[Vec<PromotionResult>]| {
        let pages: Vec<(&[PromotionResult], &Annotation)> = res.iter().map(Vec::as_slice).zip(&anns).collect();
        score_pages(&pages).unwrap().accuracy
    };
    let (p, b) = (score(&full), score(&base));
    outcome(p - b >= 0.05, format!("pipeline accuracy {p:.4}, baseline {b:.4}, margin {:.4} (need >= 0.05) on 200 pages", p - b))
}

// ------------------------------------------------------------------ 6

fn criterion_round_trip() -> Outcome {
    let cfg = SyntheticConfig { seed: 6, images: 50, distractor_density: 1.0, ..SyntheticConfig::default() };
    let (images, anns) = generate_synthetic(&cfg).unwrap();
    let ocr = MockOcr::from_annotations(&anns);
    let post = PostprocessConfig::default();
    let (mut total, mut exact) = (0, 0);
    for (img, a) in images.iter().zip(&anns) {
        let boxes: Vec<BBox> = a.regions.iter().map(|r| r.bbox).collect();
        let masked = apply_mask(img, &boxes);
        let words = ocr.recognize_page(&masked, &a.image_id).unwrap().words;
        for (text, r) in group_words(&words, &boxes).iter().zip(&a.regions) {
            total += 1;
            if postprocess(text, &post) == r.text {
                exact += 1;
            }
        }
    }
    outcome(exact == total, format!("{exact}/{total} regions recovered exactly on 50 pages"))
}

// ------------------------------------------------------------------ 7

/// Corpus with the given totals: single-label regions spread round-robin,
/// plus a share of two-label regions.
fn corpus_with_totals(samples: usize, categories: usize) -> Vec<Annotation> {
    let region = |i: usize| {
        let c = (i % categories) as CategoryId;
        let cats = if i.is_multiple_of(7) { vec![c, ((i + 1) % categories) as CategoryId] } else { vec![c] };
        Region { bbox: BBox::from_coords(0.0, 0.0, 10.0, 10.0), text: "x".into(), categories: cats, words: vec![] }
    };
    let regions: Vec<Region> = (0..samples).map(region).collect();
    regions
        .chunks(8)
        .enumerate()
        .map(|(i, chunk)| Annotation {
            image_id: format!("p{i}"),
            width: 100,
            height: 100,
            language: "fr".into(),
            retailer: format!("r{}", i % 5),
            regions: chunk.to_vec(),
            distractors: vec![],
        })
        .collect()
}

fn criterion_stats() -> Outcome {
    let base = compute_stats(&corpus_with_totals(10333, 382)).unwrap();
    let ext = compute_stats(&corpus_with_totals(20646, 504)).unwrap();
    let ok = (base.mean_samples_per_category - 27.05).abs() <= 0.01 && (ext.mean_samples_per_category - 40.96).abs() <= 0.01;
    outcome(
        ok,
        format!(
            "Base {:.4} (27.05), Extended {:.4} (40.96), tolerance 0.01",
            base.mean_samples_per_category, ext.mean_samples_per_category
        ),
    )
}

// ------------------------------------------------------------------ 8

fn random_text(rng: &mut ChaCha8Rng, anns: &[Annotation]) -> String {
    let words: Vec<&str> = anns.iter().flat_map(|a| &a.regions).flat_map(|r| r.text.split(' ')).collect();
    (0..rng.random_range(0..8))
        .map(|_| {
            if rng.random_bool(0.6) {
                words[rng.random_range(0..words.len())].to_string()
            } else {
                (0..rng.random_range(1..9)).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// generate → train → evaluate into `dir`; returns (sweep CSV, JSON lines).
fn full_run(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let cfg = SyntheticConfig { seed: 8, images: 12, ..SyntheticConfig::default() };
    let anns = generate_annotations(&cfg).unwrap();
    for a in &anns {
        render_page(a).save_png(&dir.join(format!("{}.png", a.image_id))).unwrap();
    }
    let ann_path = dir.join("annotations.json");
    save_annotations(&anns, &ann_path).unwrap();
    let tc = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let fc = FeatureExtractorConfig { bucket_count: 1 << 12, ..FeatureExtractorConfig::default() };
    let samples = training_samples(&anns, &PostprocessConfig::default());
    save_model(&train(&samples, &tc, &fc).unwrap(), dir.join("model.bin")).unwrap();

    let model = load_model(dir.join("model.bin")).unwrap();
    let report = threshold_sweep(&eval_samples(&model, &samples).unwrap(), 0.0, 1.0, 0.01).unwrap();
    let config = PipelineConfig {
        model: Some(dir.join("model.bin")),
        ocr_annotations: Some(ann_path),
        jobs: 4,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::from_config(config).unwrap();
    let mut jsonl = String::new();
    for page in pipeline.run_files(&list_pages(dir).unwrap()) {
        for r in page.unwrap() {
            jsonl.push_str(&r.to_json_line());
            jsonl.push('\n');
        }
    }
    (curves_csv(&report).into_bytes(), jsonl.into_bytes())
}

fn criterion_persistence(model: &ClassifierModel) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let anns = generate_annotations(&SyntheticConfig { seed: 9, images: 10, ..SyntheticConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let identical = (0..100)
        .filter(|_| {
            let text = random_text(&mut rng, &anns);
            let a: Vec<u64> = model.predict_probs(&text).iter().map(|p| p.to_bits()).collect();
            let b: Vec<u64> = loaded.predict_probs(&text).iter().map(|p| p.to_bits()).collect();
            a == b
        })
        .count();

    let (run_a, run_b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (csv_a, jsonl_a) = full_run(run_a.path());
    let (csv_b, jsonl_b) = full_run(run_b.path());
    let same_runs = csv_a == csv_b && jsonl_a == jsonl_b && !jsonl_a.is_empty();
    outcome(
        identical == 100 && same_runs,
        format!(
            "{identical}/100 texts bit-identical after reload; repeated runs {} ({} CSV bytes, {} JSON-lines bytes)",
            if same_runs { "byte-identical" } else { "differ" },
            csv_a.len(),
            jsonl_a.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        println!("[{}] criterion {id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report(1, "geometry oracle equivalence", criterion_geometry());
    report(2, "gradient correctness", criterion_gradients());
    let (o3, converged) = criterion_convergence();
    report(3, "classifier convergence", o3);
    report(4, "threshold sweep", criterion_sweep(&converged.held_out));
    report(5, "pipeline beats baseline", criterion_table2());
    report(6, "render/mask/OCR round trip", criterion_round_trip());
    report(7, "dataset statistics", criterion_stats());
    report(8, "persistence and determinism", criterion_persistence(&converged.model));
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
