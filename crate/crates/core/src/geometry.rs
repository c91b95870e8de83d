//! Bounding-box arithmetic: IoU, greedy non-maximum suppression and
//! RPN-style anchor enumeration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}): {reason}")]
    InvalidBox { x_min: f64, y_min: f64, x_max: f64, y_max: f64, reason: &'static str },
    #[error("invalid anchor config: {0}")]
    InvalidAnchorConfig(&'static str),
}

/// Axis-aligned box in image pixel coordinates (origin top-left) with a
/// confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    1.0
}

/// Wire form of a box. Boxes read from files live in the image frame, so
/// negative coordinates are rejected on top of the usual invariants.
#[derive(Deserialize)]
struct RawBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    #[serde(default = "default_score")]
    score: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = GeometryError;

    fn try_from(r: RawBox) -> Result<Self, Self::Error> {
        let b = BBox::new(r.x_min, r.y_min, r.x_max, r.y_max, r.score)?;
        if b.x_min < 0.0 || b.y_min < 0.0 {
            return Err(b.invalid("negative coordinate"));
        }
        Ok(b)
    }
}

impl BBox {
    /// Validated constructor.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, score: f64) -> Result<Self, GeometryError> {
        let b = BBox { x_min, y_min, x_max, y_max, score };
        b.validate()?;
        Ok(b)
    }

    /// Box with score 1, panicking on invalid coordinates. Meant for literals.
    pub fn from_coords(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self::new(x_min, y_min, x_max, y_max, 1.0).expect("invalid literal box")
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max, self.score].iter().all(|v| v.is_finite());
        if !finite {
            return Err(self.invalid("non-finite value"));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(self.invalid("zero or negative extent"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(self.invalid("score outside [0, 1]"));
        }
        Ok(())
    }

    fn invalid(&self, reason: &'static str) -> GeometryError {
        GeometryError::InvalidBox { x_min: self.x_min, y_min: self.y_min, x_max: self.x_max, y_max: self.y_max, reason }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Half-open containment test on the continuous frame.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x_min >= self.x_min && other.y_min >= self.y_min && other.x_max <= self.x_max && other.y_max <= self.y_max
    }

    /// Smallest box covering both; keeps the larger score.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
            score: self.score.max(other.score),
        }
    }

    /// Clip to `[0, width] x [0, height]`. Returns `None` when nothing is left.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        let b = BBox {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
            score: self.score,
        };
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64, GeometryError> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression.
///
/// Repeatedly keeps the highest-scoring remaining box and drops every
/// remaining box whose IoU with it is strictly greater than
/// `iou_threshold`. Equal scores keep input order. The output is ordered by
/// descending score.
pub fn nms(boxes: &[BBox], iou_threshold: f64) -> Vec<BBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // stable sort keeps earlier boxes first among ties
    order.sort_by(|&i, &j| boxes[j].score.total_cmp(&boxes[i].score));

    let mut suppressed = vec![false; boxes.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(boxes[i]);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou_unchecked(&boxes[i], &boxes[j]) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Anchor grid parameters. Ratios are height / width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub base_size: f64,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub stride: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig { base_size: 16.0, scales: vec![2.0, 4.0, 8.0], ratios: vec![0.5, 1.0, 2.0], stride: 16.0 }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.scales.is_empty() || self.ratios.is_empty() {
            return Err(GeometryError::InvalidAnchorConfig("scales and ratios must be non-empty"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.base_size) || !positive(self.stride) {
            return Err(GeometryError::InvalidAnchorConfig("base_size and stride must be positive"));
        }
        if !self.scales.iter().chain(&self.ratios).all(|&v| positive(v)) {
            return Err(GeometryError::InvalidAnchorConfig("scales and ratios must be positive"));
        }
        Ok(())
    }

    /// Grid centers along one axis of length `extent`.
    ///
    /// Centers sit at `(i + 0.5) * stride` for every full stride cell; an axis
    /// shorter than one stride gets a single center in its middle.
    pub fn centers(&self, extent: f64) -> Vec<f64> {
        let cells = (extent / self.stride).floor() as usize;
        if cells == 0 {
            return vec![extent / 2.0];
        }
        (0..cells).map(|i| (i as f64 + 0.5) * self.stride).collect()
    }
}

/// Unclipped anchor of the given scale and aspect ratio centred on `(cx, cy)`.
/// Width and height keep the area at `(base_size * scale)^2`.
pub fn anchor_at(cx: f64, cy: f64, base_size: f64, scale: f64, ratio: f64) -> BBox {
    let side = base_size * scale;
    let w = side * (1.0 / ratio).sqrt();
    let h = side * ratio.sqrt();
    BBox { x_min: cx - w / 2.0, y_min: cy - h / 2.0, x_max: cx + w / 2.0, y_max: cy + h / 2.0, score: 0.0 }
}

/// Every (center, scale, ratio) anchor over an image, clipped to its bounds.
pub fn generate_anchors(cfg: &AnchorConfig, image_w: f64, image_h: f64) -> Result<Vec<BBox>, GeometryError> {
    cfg.validate()?;
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(GeometryError::InvalidAnchorConfig("image dimensions must be positive"));
    }
    let xs = cfg.centers(image_w);
    let ys = cfg.centers(image_h);
    let mut anchors = Vec::with_capacity(xs.len() * ys.len() * cfg.scales.len() * cfg.ratios.len());
    for &cy in &ys {
        for &cx in &xs {
            for &scale in &cfg.scales {
                for &ratio in &cfg.ratios {
                    let a = anchor_at(cx, cy, cfg.base_size, scale, ratio);
                    // centers are strictly inside the image, so clipping never empties a box
                    anchors.push(a.clip(image_w, image_h).expect("anchor center inside image"));
                }
            }
        }
    }
    Ok(anchors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64, s: f64) -> BBox {
        BBox::new(x0, y0, x1, y1, s).unwrap()
    }

    /// Pixel-membership count of unit cells on the integer grid.
    fn grid_iou(a: &BBox, c: &BBox) -> f64 {
        let (mut inter, mut uni) = (0u32, 0u32);
        for y in 0..40 {
            for x in 0..40 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let ia = a.contains_point(px, py);
                let ic = c.contains_point(px, py);
                inter += (ia && ic) as u32;
                uni += (ia || ic) as u32;
            }
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn iou_examples() {
        let a = BBox::from_coords(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &BBox::from_coords(20.0, 20.0, 30.0, 30.0)).unwrap(), 0.0);
        let shifted = BBox::from_coords(5.0, 0.0, 15.0, 10.0);
        let oracle = grid_iou(&a, &shifted);
        assert!((oracle - 50.0 / 150.0).abs() < 1e-12);
        assert!((iou(&a, &shifted).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        let good = BBox::from_coords(0.0, 0.0, 1.0, 1.0);
        let flat = BBox { x_min: 0.0, y_min: 0.0, x_max: 5.0, y_max: 0.0, score: 1.0 };
        assert!(matches!(iou(&good, &flat), Err(GeometryError::InvalidBox { .. })));
        assert!(BBox::new(3.0, 0.0, 3.0, 1.0, 0.5).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = BBox::from_coords(0.0, 0.0, 10.0, 10.0);
        let c = BBox::from_coords(10.0, 0.0, 20.0, 10.0);
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
    }

    #[test]
    fn nms_examples() {
        assert!(nms(&[], 0.5).is_empty());
        let one = b(1.0, 1.0, 4.0, 4.0, 0.3);
        assert_eq!(nms(&[one], 0.5), vec![one]);

        let a = b(0.0, 0.0, 10.0, 10.0, 0.9);
        let bb = b(1.0, 1.0, 11.0, 11.0, 0.8);
        let c = b(50.0, 50.0, 60.0, 60.0, 0.7);
        assert!((iou(&a, &bb).unwrap() - 81.0 / 119.0).abs() < 1e-12);
        assert_eq!(nms(&[c, bb, a], 0.5), vec![a, c]);
    }

    #[test]
    fn nms_threshold_equal_survives() {
        // IoU exactly 1/3
        let a = b(0.0, 0.0, 10.0, 10.0, 0.9);
        let c = b(5.0, 0.0, 15.0, 10.0, 0.8);
        assert_eq!(nms(&[a, c], 1.0 / 3.0).len(), 2);
        assert_eq!(nms(&[a, c], 0.33).len(), 1);
    }

    #[test]
    fn nms_ties_keep_input_order() {
        let a = b(0.0, 0.0, 10.0, 10.0, 0.5);
        let c = b(1.0, 0.0, 11.0, 10.0, 0.5);
        assert_eq!(nms(&[a, c], 0.5), vec![a]);
        assert_eq!(nms(&[c, a], 0.5), vec![c]);
    }

    #[test]
    fn anchor_examples() {
        let cfg = AnchorConfig { base_size: 16.0, scales: vec![2.0, 4.0, 8.0], ratios: vec![0.5, 1.0, 2.0], stride: 400.0 };
        let anchors = generate_anchors(&cfg, 400.0, 400.0).unwrap();
        assert_eq!(anchors.len(), 9);

        let a = anchor_at(100.0, 100.0, 16.0, 2.0, 1.0);
        assert_eq!((a.x_min, a.y_min, a.x_max, a.y_max), (84.0, 84.0, 116.0, 116.0));

        let tall = anchor_at(100.0, 100.0, 16.0, 2.0, 4.0);
        assert!((tall.height() / tall.width() - 4.0).abs() < 1e-12);
        assert!((tall.area() - a.area()).abs() < 1e-9);
    }

    #[test]
    fn anchor_config_rejects_bad_values() {
        let mut cfg = AnchorConfig::default();
        cfg.ratios.clear();
        assert!(generate_anchors(&cfg, 10.0, 10.0).is_err());
        let cfg = AnchorConfig { stride: 0.0, ..AnchorConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(generate_anchors(&AnchorConfig::default(), 0.0, 10.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.1..50.0f64, 0.1..50.0f64, 0.0..=1.0f64)
            .prop_map(|(x, y, w, h, s)| b(x, y, x + w, y + h, s))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let ab = iou(&a, &c).unwrap();
            prop_assert_eq!(ab, iou(&c, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn nms_threshold_one_keeps_everything_sorted(boxes in prop::collection::vec(arb_box(), 0..30)) {
            let kept = nms(&boxes, 1.0);
            prop_assert_eq!(kept.len(), boxes.len());
            prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
        }

        #[test]
        fn nms_threshold_zero_is_pairwise_disjoint(boxes in prop::collection::vec(arb_box(), 0..30)) {
            let kept = nms(&boxes, 0.0);
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert_eq!(iou(&kept[i], &kept[j]).unwrap(), 0.0);
                }
            }
            // maximality: every dropped box overlaps some kept box
            for bx in &boxes {
                prop_assert!(kept.iter().any(|k| iou(k, bx).unwrap() > 0.0));
            }
        }

        #[test]
        fn anchors_inside_image(w in 1.0..300.0f64, h in 1.0..300.0f64, stride in 4.0..64.0f64) {
            let cfg = AnchorConfig { stride, ..AnchorConfig::default() };
            let anchors = generate_anchors(&cfg, w, h).unwrap();
            let expected = cfg.centers(w).len() * cfg.centers(h).len() * 9;
            prop_assert_eq!(anchors.len(), expected);
            for a in anchors {
                prop_assert!(a.x_min >= 0.0 && a.y_min >= 0.0 && a.x_max <= w && a.y_max <= h);
                prop_assert!(a.validate().is_ok());
            }
        }
    }
}
