//! Deterministic bitmap glyphs for synthetic pages.
//!
//! Every character maps to a 5x7 cell pattern derived from its code point.
//! Each pattern has a full-height stem and only cells 4-connected to it, so a
//! rendered glyph is exactly one dark connected component of fixed height.
//! The shapes are not meant to be legible.

use crate::corpus::Word;
use crate::geometry::BBox;
use crate::masking::RasterImage;

const CELL_COLS: u32 = 5;
const CELL_ROWS: u32 = 7;
const FILL_PERCENT: u64 = 75;

/// Ink is dark grey, never pure black, so masked pixels stay distinguishable.
pub const INK: [u8; 3] = [24, 24, 24];

/// Description text is set bold and tight; distractor text light and airy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlyphStyle {
    Bold,
    Light,
}

struct Metrics {
    /// Pixel distance between neighbouring pattern cells.
    pitch: u32,
    glyph_w: u32,
    glyph_h: u32,
    letter_gap: u32,
    word_gap: u32,
    line_gap: u32,
}

impl GlyphStyle {
    fn metrics(self) -> Metrics {
        match self {
            GlyphStyle::Bold => Metrics { pitch: 2, glyph_w: 10, glyph_h: 14, letter_gap: 1, word_gap: 5, line_gap: 2 },
            GlyphStyle::Light => Metrics { pitch: 3, glyph_w: 13, glyph_h: 19, letter_gap: 4, word_gap: 7, line_gap: 4 },
        }
    }
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type Cells = [[bool; CELL_COLS as usize]; CELL_ROWS as usize];

/// `[row][col]` on-cells of the pattern for `c`, plus the spanning-tree
/// parent of each on-cell (the top stem cell is its own parent).
fn pattern_tree(c: char) -> (Cells, [[(usize, usize); CELL_COLS as usize]; CELL_ROWS as usize]) {
    let mut state = c as u64 ^ 0x5E_ED0F_6C1F;
    let mut raw = [[false; CELL_COLS as usize]; CELL_ROWS as usize];
    for row in raw.iter_mut() {
        row[0] = true;
        for cell in row.iter_mut().skip(1) {
            *cell = splitmix(&mut state) % 100 < FILL_PERCENT;
        }
    }
    // breadth-first from the top of the stem keeps what is 4-connected to it
    let mut keep = [[false; CELL_COLS as usize]; CELL_ROWS as usize];
    let mut parent = [[(0usize, 0usize); CELL_COLS as usize]; CELL_ROWS as usize];
    let mut queue = std::collections::VecDeque::from([(0usize, 0usize)]);
    keep[0][0] = true;
    while let Some((r, c)) = queue.pop_front() {
        let mut next = Vec::with_capacity(4);
        if r > 0 {
            next.push((r - 1, c));
        }
        if r + 1 < CELL_ROWS as usize {
            next.push((r + 1, c));
        }
        if c > 0 {
            next.push((r, c - 1));
        }
        if c + 1 < CELL_COLS as usize {
            next.push((r, c + 1));
        }
        for (nr, nc) in next {
            if raw[nr][nc] && !keep[nr][nc] {
                keep[nr][nc] = true;
                parent[nr][nc] = (r, c);
                queue.push_back((nr, nc));
            }
        }
    }
    (keep, parent)
}

#[cfg(test)]
fn pattern(c: char) -> Cells {
    pattern_tree(c).0
}

fn draw_glyph(img: &mut RasterImage, c: char, x0: u32, y0: u32, style: GlyphStyle) {
    let pitch = style.metrics().pitch;
    let (p, parent) = pattern_tree(c);
    let mut put = |x: u32, y: u32| {
        if x < img.width() && y < img.height() {
            img.set(x, y, INK);
        }
    };
    for r in 0..CELL_ROWS as usize {
        for col in 0..CELL_COLS as usize {
            if !p[r][col] {
                continue;
            }
            let (x, y) = (x0 + pitch * col as u32, y0 + pitch * r as u32);
            match style {
                // solid pitch-sized squares
                GlyphStyle::Bold => {
                    for dy in 0..pitch {
                        for dx in 0..pitch {
                            put(x + dx, y + dy);
                        }
                    }
                }
                // one-pixel dots joined to their tree parent by a thin stroke
                GlyphStyle::Light => {
                    let (pr, pc) = parent[r][col];
                    let (px, py) = (x0 + pitch * pc as u32, y0 + pitch * pr as u32);
                    for yy in y.min(py)..=y.max(py) {
                        for xx in x.min(px)..=x.max(px) {
                            put(xx, yy);
                        }
                    }
                }
            }
        }
    }
}

struct PlacedWord<'a> {
    text: &'a str,
    x: u32,
    y: u32,
    w: u32,
}

fn layout<'a>(text: &'a str, style: GlyphStyle, max_width: u32) -> (Vec<PlacedWord<'a>>, u32, u32) {
    let m = style.metrics();
    let word_w = |w: &str| {
        let n = w.chars().count() as u32;
        n * m.glyph_w + n.saturating_sub(1) * m.letter_gap
    };
    let mut placed = Vec::new();
    let (mut x, mut y, mut width) = (0u32, 0u32, 0u32);
    let mut lines = 0u32;
    for word in text.split_whitespace() {
        let w = word_w(word);
        if lines == 0 {
            lines = 1;
        } else if x + m.word_gap + w > max_width {
            x = 0;
            y += m.glyph_h + m.line_gap;
            lines += 1;
        } else {
            x += m.word_gap;
        }
        placed.push(PlacedWord { text: word, x, y, w });
        x += w;
        width = width.max(x);
    }
    let height = if lines == 0 { 0 } else { lines * m.glyph_h + (lines - 1) * m.line_gap };
    (placed, width, height)
}

/// Pixel extent of `text` wrapped at `max_width`.
pub fn text_block_size(text: &str, style: GlyphStyle, max_width: u32) -> (u32, u32) {
    let (_, w, h) = layout(text, style, max_width);
    (w, h)
}

/// Word boxes of `text` laid out with its top-left at `(x0, y0)`, wrapping
/// at `max_width`, in reading order.
pub fn layout_words(text: &str, style: GlyphStyle, x0: u32, y0: u32, max_width: u32) -> Vec<Word> {
    let m = style.metrics();
    let (placed, _, _) = layout(text, style, max_width);
    placed
        .into_iter()
        .map(|pw| {
            let (wx, wy) = (x0 + pw.x, y0 + pw.y);
            Word {
                text: pw.text.to_string(),
                bbox: BBox::from_coords(wx as f64, wy as f64, (wx + pw.w) as f64, (wy + m.glyph_h) as f64),
            }
        })
        .collect()
}

/// Draws one word starting at the top-left corner of its box.
pub fn draw_word(img: &mut RasterImage, word: &Word, style: GlyphStyle) {
    let m = style.metrics();
    let (mut x, y) = (word.bbox.x_min as u32, word.bbox.y_min as u32);
    for c in word.text.chars() {
        draw_glyph(img, c, x, y, style);
        x += m.glyph_w + m.letter_gap;
    }
}

pub fn render_text_block(img: &mut RasterImage, text: &str, style: GlyphStyle, x0: u32, y0: u32, max_width: u32) -> Vec<Word> {
    let words = layout_words(text, style, x0, y0, max_width);
    for w in &words {
        draw_word(img, w, style);
    }
    words
}
