//! Cell-image preprocessing: luma conversion, Otsu inverse thresholding,
//! white-background compositing, bounding-box crop and bilinear resize to
//! 224x224.

use std::path::Path;

use crate::error::{Error, Result};

pub const TARGET_SIZE: usize = 224;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

/// `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Inclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!("{width}x{height} has no pixels")));
    }
    if width * height != len {
        return Err(Error::InvalidImage(format!(
            "{} pixels for a {width}x{height} image",
            len
        )));
    }
    Ok(())
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::InvalidImage("buffer size mismatch".into()))?;
        buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &p in &self.pixels {
            h[usize::from(p)] += 1;
        }
        h
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.x_min > self.x_max || self.y_min > self.y_max || self.x_max >= width || self.y_max >= height {
            return Err(Error::InvalidBox([self.x_min, self.y_min, self.x_max, self.y_max]));
        }
        Ok(())
    }
}

/// BT.601 luma, rounded.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Between-class variance of a split at `t`, kept as the exact pair
/// `(diff^2, n0*n1)` where `diff = S0*n1 - S1*n0`; the variance is
/// `diff^2 / (N^2 * n0 * n1)`. `None` when a class is empty.
fn between_class_term(n0: u64, s0: u64, n1: u64, s1: u64) -> Option<(u128, u128)> {
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let diff = (i128::from(s0) * i128::from(n1) - i128::from(s1) * i128::from(n0)).unsigned_abs();
    Some((diff * diff, u128::from(n0) * u128::from(n1)))
}

/// `a.0/a.1 > b.0/b.1`, exactly when the products fit in 128 bits.
fn fraction_greater(a: (u128, u128), b: (u128, u128)) -> bool {
    match (a.0.checked_mul(b.1), b.0.checked_mul(a.1)) {
        (Some(l), Some(r)) => l > r,
        _ => (a.0 as f64 / a.1 as f64) > (b.0 as f64 / b.1 as f64),
    }
}

/// Otsu threshold over the 256-bin histogram, class 0 being `<= t`. Returns
/// the smallest maximizer; a split with an empty class scores 0.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let hist = img.histogram();
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best_t = 0u8;
    let mut best: Option<(u128, u128)> = None;
    for (t, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += t as u64 * count;
        let Some(term) = between_class_term(n0, s0, total_n - n0, total_s - s0) else {
            continue;
        };
        // zero variance never beats the empty-class default of 0
        if term.0 == 0 {
            continue;
        }
        if best.is_none_or(|b| fraction_greater(term, b)) {
            best = Some(term);
            best_t = t as u8;
        }
    }
    best_t
}

/// Inverse Otsu thresholding: pixels with luma `<= t` are foreground. The
/// returned image keeps foreground pixels and paints the rest white.
pub fn segment_foreground(img: &RgbImage) -> (RgbImage, BinaryMask) {
    let gray = to_grayscale(img);
    let t = otsu_threshold(&gray);
    let bits: Vec<bool> = gray.pixels.iter().map(|&v| v <= t).collect();
    let pixels = img
        .pixels
        .iter()
        .zip(&bits)
        .map(|(&p, &fg)| if fg { p } else { [255, 255, 255] })
        .collect();
    (
        RgbImage {
            width: img.width,
            height: img.height,
            pixels,
        },
        BinaryMask {
            width: img.width,
            height: img.height,
            bits,
        },
    )
}

pub fn foreground_bbox(mask: &BinaryMask) -> Result<BoundingBox> {
    let mut bbox: Option<BoundingBox> = None;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            let b = bbox.get_or_insert(BoundingBox {
                x_min: x,
                y_min: y,
                x_max: x,
                y_max: y,
            });
            b.x_min = b.x_min.min(x);
            b.x_max = b.x_max.max(x);
            b.y_max = y;
        }
    }
    bbox.ok_or(Error::EmptyForeground)
}

/// Source coordinate and interpolation weight along one axis, using the
/// half-pixel-center convention with edge clamping.
fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Bilinear resample of `img` to `out_w x out_h`.
pub fn resize_bilinear(img: &RgbImage, out_w: usize, out_h: usize) -> Result<RgbImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidImage("zero output size".into()));
    }
    let xs: Vec<_> = (0..out_w).map(|x| sample_axis(x, img.width, out_w)).collect();
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = sample_axis(y, img.height, out_h);
        for &(x0, x1, fx) in &xs {
            let (p00, p10, p01, p11) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
            let mut out = [0u8; 3];
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
                let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            pixels.push(out);
        }
    }
    RgbImage::new(out_w, out_h, pixels)
}

pub fn crop(img: &RgbImage, bbox: BoundingBox) -> Result<RgbImage> {
    bbox.validate(img.width, img.height)?;
    let mut pixels = Vec::with_capacity(bbox.width() * bbox.height());
    for y in bbox.y_min..=bbox.y_max {
        let row = y * img.width;
        pixels.extend_from_slice(&img.pixels[row + bbox.x_min..=row + bbox.x_max]);
    }
    RgbImage::new(bbox.width(), bbox.height(), pixels)
}

/// Crops to `bbox` and resizes to 224x224.
pub fn crop_resize(img: &RgbImage, bbox: BoundingBox) -> Result<RgbImage> {
    resize_bilinear(&crop(img, bbox)?, TARGET_SIZE, TARGET_SIZE)
}

/// Full chain: segment, bound the foreground, crop the white-composited image
/// and resize.
pub fn preprocess_image(img: &RgbImage) -> Result<RgbImage> {
    let (masked, mask) = segment_foreground(img);
    let bbox = foreground_bbox(&mask)?;
    crop_resize(&masked, bbox)
}
