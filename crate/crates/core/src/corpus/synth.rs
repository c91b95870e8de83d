//! Seeded synthetic leaflet corpus.
//!
//! Pages are a grid of cells. Each promotion block takes one cell and holds
//! bold description text built from its categories' vocabularies plus shared
//! noise tokens. Distractor blocks (prices, slogans) use light glyphs and sit
//! either in a free cell or as a price tag just below a promotion block.
//! Primary categories follow a Zipf law over category ranks; category id
//! `k` has rank `k + 1`.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::glyphs::{draw_word, layout_words, text_block_size, GlyphStyle};
use super::{Annotation, CategoryId, CorpusError, Distractor, Region, Word};
use crate::geometry::BBox;
use crate::masking::RasterImage;

/// Tokens shared by every category; they also make up slogans.
pub const NOISE_TOKENS: &[&str] = &[
    "pack", "new", "offer", "promo", "extra", "maxi", "mini", "pcs", "500g", "1kg", "2x100g", "1l", "750ml", "x6", "bio",
    "family", "best", "price", "only", "today", "save", "deal", "week", "3x2", "-30%", "-50%",
];

const PAGE_MARGIN: u32 = 16;
const CELL_PAD: u32 = 12;
const MIN_CELL: u32 = 200;
/// Padding between text extent and the annotated block box.
const BLOCK_PAD: u32 = 3;
/// Vertical space kept free under each promotion block for a price tag.
const TAG_RESERVE: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Seeds page layout and sampling.
    pub seed: u64,
    /// Seeds the category vocabularies. Corpora sharing it describe the same
    /// categories with the same words, so one can train and another test.
    pub vocabulary_seed: u64,
    pub images: usize,
    pub categories: usize,
    pub zipf_exponent: f64,
    pub multi_label_prob: f64,
    /// Expected distractor blocks per promotion block.
    pub distractor_density: f64,
    pub vocab_per_category: usize,
    pub width: u32,
    pub height: u32,
    pub languages: usize,
    pub retailers: usize,
    pub min_blocks: usize,
    pub max_blocks: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            vocabulary_seed: 7,
            images: 100,
            categories: 20,
            zipf_exponent: 1.2,
            multi_label_prob: 0.3,
            distractor_density: 0.5,
            vocab_per_category: 8,
            width: 768,
            height: 1024,
            languages: 1,
            retailers: 1,
            min_blocks: 2,
            max_blocks: 8,
        }
    }
}

struct Grid {
    cols: u32,
    rows: u32,
    cell_w: u32,
    cell_h: u32,
}

impl Grid {
    fn for_page(width: u32, height: u32) -> Grid {
        let usable_w = width.saturating_sub(2 * PAGE_MARGIN);
        let usable_h = height.saturating_sub(2 * PAGE_MARGIN);
        let cols = usable_w / MIN_CELL;
        let rows = usable_h / MIN_CELL;
        Grid { cols, rows, cell_w: usable_w.checked_div(cols).unwrap_or(0), cell_h: usable_h.checked_div(rows).unwrap_or(0) }
    }

    fn capacity(&self) -> usize {
        (self.cols * self.rows) as usize
    }

    /// Inner rectangle `(x, y, w, h)` of a cell.
    fn inner(&self, cell: usize) -> (u32, u32, u32, u32) {
        let (c, r) = (cell as u32 % self.cols, cell as u32 / self.cols);
        (
            PAGE_MARGIN + c * self.cell_w + CELL_PAD,
            PAGE_MARGIN + r * self.cell_h + CELL_PAD,
            self.cell_w - 2 * CELL_PAD,
            self.cell_h - 2 * CELL_PAD,
        )
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Config(m.to_string()));
        if self.categories < 2 {
            return bad("need at least 2 categories");
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf exponent must be positive");
        }
        if !(0.0..=1.0).contains(&self.multi_label_prob) {
            return bad("multi-label probability must lie in [0, 1]");
        }
        if !(self.distractor_density >= 0.0 && self.distractor_density.is_finite()) {
            return bad("distractor density must be non-negative");
        }
        if self.vocab_per_category < 2 {
            return bad("need at least 2 words per category");
        }
        if self.languages == 0 || self.retailers == 0 {
            return bad("need at least one language and one retailer");
        }
        if self.min_blocks == 0 || self.min_blocks > self.max_blocks {
            return bad("block range must satisfy 1 <= min_blocks <= max_blocks");
        }
        let grid = Grid::for_page(self.width, self.height);
        if grid.capacity() < self.max_blocks {
            return Err(CorpusError::PageTooSmall {
                width: self.width,
                height: self.height,
                requested: self.max_blocks,
                capacity: grid.capacity(),
            });
        }
        Ok(())
    }
}

/// `vocab[language][category]` word lists, globally unique.
fn build_vocabulary(cfg: &SyntheticConfig) -> Vec<Vec<Vec<String>>> {
    const ONSETS: &[&str] = &["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "ch"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ou", "ai"];
    const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l", "t"];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.vocabulary_seed);
    rng.set_stream(1);
    let mut used: HashSet<String> = NOISE_TOKENS.iter().map(|s| s.to_string()).collect();
    (0..cfg.languages)
        .map(|_| {
            (0..cfg.categories)
                .map(|_| {
                    let mut words = Vec::with_capacity(cfg.vocab_per_category);
                    while words.len() < cfg.vocab_per_category {
                        let syllables = rng.random_range(2..=3);
                        let mut w = String::new();
                        for _ in 0..syllables {
                            w.push_str(ONSETS.choose(&mut rng).unwrap());
                            w.push_str(VOWELS.choose(&mut rng).unwrap());
                        }
                        w.push_str(CODAS.choose(&mut rng).unwrap());
                        if w.chars().count() >= 4 && used.insert(w.clone()) {
                            words.push(w);
                        }
                    }
                    words
                })
                .collect()
        })
        .collect()
}

fn price_token(rng: &mut ChaCha8Rng) -> String {
    let units = rng.random_range(0..20);
    let cents = rng.random_range(0..100);
    if rng.random_bool(0.5) {
        format!("{units},{cents:02}€")
    } else {
        format!("{units}.{cents:02}€")
    }
}

fn noise_token(rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.25) {
        price_token(rng)
    } else {
        NOISE_TOKENS.choose(rng).unwrap().to_string()
    }
}

fn draw_categories(rng: &mut ChaCha8Rng, zipf: &Zipf<f64>, cfg: &SyntheticConfig) -> Vec<CategoryId> {
    let rank = |rng: &mut ChaCha8Rng| zipf.sample(rng) as CategoryId - 1;
    let primary = rank(rng);
    let mut cats = vec![primary];
    if rng.random_bool(cfg.multi_label_prob) {
        let second = if rng.random_bool(0.5) {
            (primary + 1) % cfg.categories as CategoryId
        } else {
            loop {
                let c = rank(rng);
                if c != primary {
                    break c;
                }
            }
        };
        cats.push(second);
    }
    cats
}

fn description_text(rng: &mut ChaCha8Rng, vocab: &[Vec<String>], cats: &[CategoryId]) -> String {
    let mut tokens: Vec<String> = Vec::new();
    for (i, &c) in cats.iter().enumerate() {
        let n = if i == 0 { rng.random_range(2..=4) } else { rng.random_range(1..=2) };
        tokens.extend(vocab[c as usize].choose_multiple(rng, n).cloned());
    }
    for _ in 0..rng.random_range(0..=2) {
        tokens.push(noise_token(rng));
    }
    tokens.shuffle(rng);
    tokens.join(" ")
}

fn distractor_text(rng: &mut ChaCha8Rng) -> String {
    let mut tokens = Vec::new();
    if rng.random_bool(0.7) {
        tokens.push(price_token(rng));
    }
    let slogan = rng.random_range(if tokens.is_empty() { 1 } else { 0 }..=3);
    for _ in 0..slogan {
        tokens.push(NOISE_TOKENS.choose(rng).unwrap().to_string());
    }
    tokens.join(" ")
}

/// Narrowest wrap width that keeps the line count of `wrap`, so lines come
/// out about equally long.
fn balanced_wrap(text: &str, style: GlyphStyle, wrap: u32) -> u32 {
    let height = text_block_size(text, style, wrap).1;
    let (mut lo, mut hi) = (1, wrap);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if text_block_size(text, style, mid).1 <= height {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    hi
}

fn padded(words: &[Word]) -> BBox {
    let b = words.iter().skip(1).fold(words[0].bbox, |acc, w| acc.union(&w.bbox));
    let p = BLOCK_PAD as f64;
    BBox::from_coords(b.x_min - p, b.y_min - p, b.x_max + p, b.y_max + p)
}

fn generate_page(cfg: &SyntheticConfig, vocab: &[Vec<Vec<String>>], zipf: &Zipf<f64>, index: usize) -> Annotation {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    let grid = Grid::for_page(cfg.width, cfg.height);
    let language = rng.random_range(0..cfg.languages);
    let retailer = rng.random_range(0..cfg.retailers);
    let blocks = rng.random_range(cfg.min_blocks..=cfg.max_blocks);

    let mut cells: Vec<usize> = (0..grid.capacity()).collect();
    cells.shuffle(&mut rng);
    let (used, free) = cells.split_at(blocks);

    let mut regions = Vec::with_capacity(blocks);
    for &cell in used {
        let (cx, cy, cw, ch) = grid.inner(cell);
        let cats = draw_categories(&mut rng, zipf, cfg);
        let text = description_text(&mut rng, &vocab[language], &cats);
        let max_text_w = cw - 2 * BLOCK_PAD;
        let wrap = balanced_wrap(&text, GlyphStyle::Bold, rng.random_range(max_text_w * 3 / 5..=max_text_w));
        let (tw, th) = text_block_size(&text, GlyphStyle::Bold, wrap);
        let (bw, bh) = (tw + 2 * BLOCK_PAD, th + 2 * BLOCK_PAD);
        let x = cx + rng.random_range(0..=cw.saturating_sub(bw));
        let y = cy + rng.random_range(0..=ch.saturating_sub(bh + TAG_RESERVE));
        let words = layout_words(&text, GlyphStyle::Bold, x + BLOCK_PAD, y + BLOCK_PAD, wrap);
        regions.push(Region { bbox: padded(&words), text, categories: cats, words });
    }

    // distractors: expected `density` per promotion block
    let expected = cfg.distractor_density * blocks as f64;
    let mut count = expected.floor() as usize;
    if rng.random_bool(expected.fract()) {
        count += 1;
    }
    let mut tagged = vec![false; regions.len()];
    let mut free_cells = free.to_vec();
    let mut distractors = Vec::new();
    for _ in 0..count {
        let text = distractor_text(&mut rng);
        let untagged: Vec<usize> = (0..regions.len()).filter(|&i| !tagged[i]).collect();
        let as_tag = !untagged.is_empty() && (free_cells.is_empty() || rng.random_bool(0.5));
        let tag = if as_tag {
            let i = *untagged.choose(&mut rng).unwrap();
            let r = regions[i].bbox;
            let (cx, cy, cw, ch) = grid.inner(used[i]);
            let wrap = cw - 2 * BLOCK_PAD;
            let (tw, th) = text_block_size(&text, GlyphStyle::Light, wrap);
            let x = (r.x_min as u32 + rng.random_range(0..=24)).min(cx + cw - tw - 2 * BLOCK_PAD);
            let y = r.y_max as u32 + rng.random_range(12..=20);
            (y + th + 2 * BLOCK_PAD <= cy + ch).then(|| {
                tagged[i] = true;
                layout_words(&text, GlyphStyle::Light, x + BLOCK_PAD, y + BLOCK_PAD, wrap)
            })
        } else {
            None
        };
        let words = if let Some(words) = tag {
            words
        } else if let Some(cell) = free_cells.pop() {
            let (cx, cy, cw, ch) = grid.inner(cell);
            let wrap = rng.random_range(cw / 2..=cw - 2 * BLOCK_PAD);
            let (tw, th) = text_block_size(&text, GlyphStyle::Light, wrap);
            let x = cx + rng.random_range(0..=cw.saturating_sub(tw + 2 * BLOCK_PAD));
            let y = cy + rng.random_range(0..=ch.saturating_sub(th + 2 * BLOCK_PAD));
            layout_words(&text, GlyphStyle::Light, x + BLOCK_PAD, y + BLOCK_PAD, wrap)
        } else {
            break;
        };
        distractors.push(Distractor { bbox: padded(&words), text, words });
    }

    Annotation {
        image_id: format!("page-{index:05}"),
        width: cfg.width,
        height: cfg.height,
        language: format!("l{language}"),
        retailer: format!("r{retailer}"),
        regions,
        distractors,
    }
}

/// Ground truth for every page, without rendering pixels.
pub fn generate_annotations(cfg: &SyntheticConfig) -> Result<Vec<Annotation>, CorpusError> {
    cfg.validate()?;
    let vocab = build_vocabulary(cfg);
    let zipf = Zipf::new(cfg.categories as f64, cfg.zipf_exponent).map_err(|e| CorpusError::Config(e.to_string()))?;
    Ok((0..cfg.images).into_par_iter().map(|i| generate_page(cfg, &vocab, &zipf, i)).collect())
}

/// White page with bold description blocks and light distractor blocks.
pub fn render_page(annotation: &Annotation) -> RasterImage {
    let mut img = RasterImage::filled(annotation.width, annotation.height, [255, 255, 255]).expect("positive page size");
    for r in &annotation.regions {
        for w in &r.words {
            draw_word(&mut img, w, GlyphStyle::Bold);
        }
    }
    for d in &annotation.distractors {
        for w in &d.words {
            draw_word(&mut img, w, GlyphStyle::Light);
        }
    }
    img
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Vec<RasterImage>, Vec<Annotation>), CorpusError> {
    let annotations = generate_annotations(cfg)?;
    let images = annotations.par_iter().map(render_page).collect();
    Ok((images, annotations))
}
