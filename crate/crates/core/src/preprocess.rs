//! Input-resizing strategies as pure pixel-grid transforms.
//!
//! Interpolation is bilinear with half-pixel-centre sampling and
//! round-to-nearest. Odd padding puts the extra pixel on the bottom/right.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, GrayImage, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WHITE: u8 = 255;
pub const DEFAULT_TILE_BASE: usize = 256;

/// Row-major 8-bit image with 1 or 3 interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidConfig(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::LengthMismatch(format!(
                "{} bytes for a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        Ok(Self { height, width, channels, pixels })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.pixels[i..i + self.channels]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeStrategy {
    Sqr,
    Pad,
    Tile,
}

impl std::str::FromStr for ResizeStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sqr" => Ok(Self::Sqr),
            "pad" => Ok(Self::Pad),
            "tile" => Ok(Self::Tile),
            other => Err(Error::Usage(format!("unknown resize strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    Constant(u8),
    Edge,
}

/// Places `img` at (`top`, `left`) on an `h × w` canvas.
pub fn pad_to(img: &ImageGrid, h: usize, w: usize, top: usize, left: usize, fill: Fill) -> ImageGrid {
    assert!(top + img.height <= h && left + img.width <= w, "image does not fit the canvas");
    let mut out = ImageGrid {
        height: h,
        width: w,
        channels: img.channels,
        pixels: vec![0; h * w * img.channels],
    };
    for y in 0..h {
        for x in 0..w {
            let inside = (top..top + img.height).contains(&y) && (left..left + img.width).contains(&x);
            let dst = out.pixel_mut(y, x);
            match (inside, fill) {
                (true, _) => dst.copy_from_slice(img.pixel(y - top, x - left)),
                (false, Fill::Constant(v)) => dst.fill(v),
                (false, Fill::Edge) => {
                    let sy = y.clamp(top, top + img.height - 1) - top;
                    let sx = x.clamp(left, left + img.width - 1) - left;
                    dst.copy_from_slice(img.pixel(sy, sx));
                }
            }
        }
    }
    out
}

/// Bilinear resampling to `out_h × out_w`.
pub fn bilinear_resize(img: &ImageGrid, out_h: usize, out_w: usize) -> ImageGrid {
    assert!(out_h > 0 && out_w > 0, "target size must be positive");
    if out_h == img.height && out_w == img.width {
        return img.clone();
    }
    let coords = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = coords(out_h, img.height);
    let xs = coords(out_w, img.width);
    let c = img.channels;
    let mut pixels = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |y: usize, x: usize| img.pixel(y, x)[ch] as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageGrid { height: out_h, width: out_w, channels: c, pixels }
}

/// Pads the shorter side to a square of side `max(H, W)`: white for
/// grayscale, edge replication for RGB.
pub fn square_pad(img: &ImageGrid) -> ImageGrid {
    let side = img.height.max(img.width);
    let top = (side - img.height) / 2;
    let left = (side - img.width) / 2;
    let fill = if img.channels == 1 { Fill::Constant(WHITE) } else { Fill::Edge };
    pad_to(img, side, side, top, left, fill)
}

pub fn sqr_resize(img: &ImageGrid, target: usize) -> ImageGrid {
    bilinear_resize(&square_pad(img), target, target)
}

/// Centres the image on a white `target × target` canvas, falling back to
/// [`sqr_resize`] when the image exceeds the target in either dimension.
pub fn pad_resize(img: &ImageGrid, target: usize) -> ImageGrid {
    if img.height <= target && img.width <= target {
        let top = (target - img.height) / 2;
        let left = (target - img.width) / 2;
        pad_to(img, target, target, top, left, Fill::Constant(WHITE))
    } else {
        sqr_resize(img, target)
    }
}

/// Wrap-around replication to `base × base`: pixel (i, j) is source pixel
/// (i mod H, j mod W).
pub fn tile_intermediate(img: &ImageGrid, base: usize) -> ImageGrid {
    let c = img.channels;
    let mut pixels = Vec::with_capacity(base * base * c);
    for y in 0..base {
        for x in 0..base {
            pixels.extend_from_slice(img.pixel(y % img.height, x % img.width));
        }
    }
    ImageGrid { height: base, width: base, channels: c, pixels }
}

pub fn tile_resize(img: &ImageGrid, base: usize, target: usize) -> ImageGrid {
    bilinear_resize(&tile_intermediate(img, base), target, target)
}

pub fn apply(strategy: ResizeStrategy, img: &ImageGrid, target: usize) -> ImageGrid {
    match strategy {
        ResizeStrategy::Sqr => sqr_resize(img, target),
        ResizeStrategy::Pad => pad_resize(img, target),
        ResizeStrategy::Tile => tile_resize(img, DEFAULT_TILE_BASE, target),
    }
}

pub fn load_png(path: &Path) -> Result<ImageGrid> {
    let img = image::open(path)?;
    let grey = matches!(img.color(), ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16);
    let (w, h) = (img.width() as usize, img.height() as usize);
    if grey {
        ImageGrid::new(h, w, 1, img.into_luma8().into_raw())
    } else {
        ImageGrid::new(h, w, 3, img.into_rgb8().into_raw())
    }
}

pub fn save_png(path: &Path, img: &ImageGrid) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let dynamic = if img.channels == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, img.pixels.clone()).expect("buffer size checked"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, img.pixels.clone()).expect("buffer size checked"))
    };
    dynamic.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Applies a strategy to every `.png` in `in_dir`, writing same-named files
/// to `out_dir`. Returns the processed file names in sorted order.
pub fn preprocess_dir(strategy: ResizeStrategy, target: usize, in_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(in_dir)
        .map_err(|e| Error::io(in_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    files
        .par_iter()
        .map(|p| {
            let out = apply(strategy, &load_png(p)?, target);
            let name = p.file_name().expect("read_dir entries have names");
            save_png(&out_dir.join(name), &out)?;
            Ok(PathBuf::from(name))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize, c: usize) -> ImageGrid {
        let px = (0..h * w * c).map(|i| (i * 7 % 251) as u8).collect();
        ImageGrid::new(h, w, c, px).unwrap()
    }

    #[test]
    fn sqr_identity_on_square_target() {
        let img = gradient(100, 100, 1);
        assert_eq!(sqr_resize(&img, 100), img);
    }

    #[test]
    fn sqr_pads_columns_symmetrically() {
        let img = gradient(100, 50, 1);
        let sq = square_pad(&img);
        assert_eq!((sq.height(), sq.width()), (100, 100));
        for y in 0..100 {
            for x in (0..25).chain(75..100) {
                assert_eq!(sq.pixel(y, x), &[WHITE]);
            }
            assert_eq!(sq.pixel(y, 25), img.pixel(y, 0));
            assert_eq!(sq.pixel(y, 74), img.pixel(y, 49));
        }
        let out = sqr_resize(&img, 64);
        assert_eq!((out.height(), out.width()), (64, 64));
    }

    #[test]
    fn rgb_square_pad_replicates_edges() {
        let img = gradient(4, 2, 3);
        let sq = square_pad(&img);
        assert_eq!(sq.pixel(0, 0), img.pixel(0, 0));
        assert_eq!(sq.pixel(3, 3), img.pixel(3, 1));
    }

    #[test]
    fn odd_padding_goes_bottom_right() {
        let img = gradient(3, 2, 1);
        let sq = square_pad(&img);
        // one extra column: left pad 0, right pad 1
        assert_eq!(sq.pixel(0, 0), img.pixel(0, 0));
        assert_eq!(sq.pixel(0, 2), &[WHITE]);
    }

    #[test]
    fn white_stays_white() {
        let img = ImageGrid::filled(30, 10, 1, WHITE).unwrap();
        assert!(sqr_resize(&img, 17).pixels().iter().all(|&p| p == WHITE));
    }

    #[test]
    fn pad_centres_small_images() {
        let img = gradient(50, 50, 1);
        let out = pad_resize(&img, 224);
        assert_eq!((out.height(), out.width()), (224, 224));
        assert_eq!(out.pixel(87, 87), img.pixel(0, 0));
        assert_eq!(out.pixel(136, 136), img.pixel(49, 49));
        assert_eq!(out.pixel(86, 100), &[WHITE]);
        assert_eq!(out.pixel(137, 100), &[WHITE]);
        let same = gradient(224, 224, 1);
        assert_eq!(pad_resize(&same, 224), same);
        let big = gradient(300, 300, 1);
        assert_eq!(pad_resize(&big, 224), sqr_resize(&big, 224));
    }

    #[test]
    fn tile_identity_at_base_and_modular_index() {
        let img = gradient(256, 256, 3);
        assert_eq!(tile_intermediate(&img, 256), img);
        let small = gradient(64, 64, 1);
        let t = tile_intermediate(&small, 256);
        for (i, j) in [(0, 0), (64, 64), (130, 7), (255, 255)] {
            assert_eq!(t.pixel(i, j), small.pixel(i % 64, j % 64));
        }
        let c = ImageGrid::filled(64, 48, 3, 91).unwrap();
        assert!(tile_resize(&c, 256, 224).pixels().iter().all(|&p| p == 91));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient(5, 7, 3);
        let p = dir.path().join("a.png");
        save_png(&p, &img).unwrap();
        assert_eq!(load_png(&p).unwrap(), img);
        let g = gradient(5, 7, 1);
        save_png(&p, &g).unwrap();
        assert_eq!(load_png(&p).unwrap(), g);
    }
}
