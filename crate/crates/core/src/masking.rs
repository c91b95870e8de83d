//! RGB raster pages and the mask that blackens everything outside the kept
//! description boxes before OCR.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("image codec error for {path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImageError::BufferSize { expected, actual: pixels.len() });
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgb.iter().copied().cycle().take(n * 3).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma.
    pub fn luminance(&self, x: u32, y: u32) -> u8 {
        let [r, g, b] = self.get(x, y);
        ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
    }

    pub fn is_black(&self, x: u32, y: u32) -> bool {
        self.get(x, y) == [0, 0, 0]
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path).map_err(|source| ImageError::Codec { path: path.display().to_string(), source })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|source| ImageError::Codec { path: path.display().to_string(), source })
    }

    /// PNG encoding of the image.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>, image::ImageError> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_image_buffer().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub(crate) fn to_image_buffer(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("buffer size checked on construction")
    }

    pub(crate) fn from_image_buffer(buf: image::RgbImage) -> Self {
        let (width, height) = buf.dimensions();
        RasterImage { width, height, pixels: buf.into_raw() }
    }
}

/// Inclusive integer pixel span covered by a box, clipped to the image.
/// Min edges floor, max edges take `ceil - 1`, so a partially covered
/// border pixel is kept.
pub fn pixel_span(b: &BBox, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = b.x_min.floor().max(0.0);
    let y0 = b.y_min.floor().max(0.0);
    let x1 = (b.x_max.ceil() - 1.0).min(width as f64 - 1.0);
    let y1 = (b.y_max.ceil() - 1.0).min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

/// Copy of `image` where every pixel outside all `keep` boxes is pure black.
pub fn apply_mask(image: &RasterImage, keep: &[BBox]) -> RasterImage {
    let (w, h) = (image.width, image.height);
    let spans: Vec<_> = keep.iter().filter_map(|b| pixel_span(b, w, h)).collect();
    let row_len = w as usize * 3;
    let mut out = vec![0u8; image.pixels.len()];
    out.par_chunks_mut(row_len).enumerate().for_each(|(y, row)| {
        let y = y as u32;
        let src = &image.pixels[y as usize * row_len..(y as usize + 1) * row_len];
        for &(x0, y0, x1, y1) in &spans {
            if y < y0 || y > y1 {
                continue;
            }
            let (a, b) = (x0 as usize * 3, (x1 as usize + 1) * 3);
            row[a..b].copy_from_slice(&src[a..b]);
        }
    });
    RasterImage { width: w, height: h, pixels: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient(w: u32, h: u32) -> RasterImage {
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                px.extend_from_slice(&[(x * 7 + 1) as u8, (y * 11 + 1) as u8, 200]);
            }
        }
        RasterImage::new(w, h, px).unwrap()
    }

    #[test]
    fn construction_checks() {
        assert!(RasterImage::new(0, 5, vec![]).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn empty_keep_is_all_black() {
        let img = gradient(8, 8);
        let out = apply_mask(&img, &[]);
        assert!(out.pixels().iter().all(|&v| v == 0));
        assert_eq!((out.width(), out.height()), (8, 8));
    }

    #[test]
    fn whole_image_box_is_identity() {
        let img = gradient(8, 6);
        assert_eq!(apply_mask(&img, &[BBox::from_coords(0.0, 0.0, 8.0, 6.0)]), img);
    }

    #[test]
    fn inclusive_rounded_bounds() {
        let img = gradient(8, 8);
        let out = apply_mask(&img, &[BBox::from_coords(2.0, 2.0, 5.0, 5.0)]);
        // membership oracle: min edges floor, max edges ceil - 1; x_max = 5 keeps column 4
        for y in 0..8 {
            for x in 0..8 {
                let inside = (2..=4).contains(&x) && (2..=4).contains(&y);
                assert_eq!(out.get(x, y) == img.get(x, y), inside, "pixel ({x},{y})");
            }
        }
        // fractional max keeps the partly covered pixel
        let out = apply_mask(&img, &[BBox::from_coords(2.0, 2.0, 5.5, 5.5)]);
        for y in 0..8 {
            for x in 0..8 {
                let inside = (2..=5).contains(&x) && (2..=5).contains(&y);
                assert_eq!(out.get(x, y) == img.get(x, y), inside);
            }
        }
    }

    #[test]
    fn out_of_bounds_box_is_clipped() {
        let img = gradient(6, 6);
        let out = apply_mask(&img, &[BBox::new(-3.0, -3.0, 30.0, 2.0, 1.0).unwrap()]);
        assert_eq!(out.get(5, 1), img.get(5, 1));
        assert!(out.is_black(0, 2));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = gradient(9, 4);
        img.save_png(&p).unwrap();
        assert_eq!(RasterImage::load_png(&p).unwrap(), img);
    }

    fn arb_keep() -> impl Strategy<Value = Vec<BBox>> {
        prop::collection::vec((0.0..15.0f64, 0.0..15.0f64, 0.5..8.0f64, 0.5..8.0f64), 0..5)
            .prop_map(|v| v.into_iter().map(|(x, y, w, h)| BBox::from_coords(x, y, x + w, y + h)).collect())
    }

    proptest! {
        #[test]
        fn idempotent(keep in arb_keep()) {
            let img = gradient(16, 16);
            let once = apply_mask(&img, &keep);
            prop_assert_eq!(apply_mask(&once, &keep), once);
        }

        #[test]
        fn monotone_and_union(keep in arb_keep(), extra in arb_keep()) {
            let img = gradient(16, 16);
            let small = apply_mask(&img, &keep);
            let mut all = keep.clone();
            all.extend(extra.iter().copied());
            let big = apply_mask(&img, &all);
            let singles: Vec<_> = all.iter().map(|b| apply_mask(&img, std::slice::from_ref(b))).collect();
            for y in 0..16 {
                for x in 0..16 {
                    if small.get(x, y) == img.get(x, y) {
                        prop_assert_eq!(big.get(x, y), img.get(x, y));
                    }
                    // union: a pixel kept by any single box is kept by the set
                    let single = singles.iter().any(|m| m.get(x, y) == img.get(x, y));
                    prop_assert_eq!(big.get(x, y) == img.get(x, y), single);
                }
            }
        }
    }
}
