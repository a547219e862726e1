//! Synthetic datasets for small, fast end-to-end runs.
//!
//! Segmentation samples are 1–3 saturated ellipses or rectangles on a
//! low-saturation textured background, with exact masks. Classification
//! samples are a striped garment-like blob whose class is the pair
//! (hue band, stripe frequency); masks mark the blob.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::manifest::{SampleRecord, Split};
use crate::data::pnm::{encode_pgm, encode_ppm, ImageBuffer};
use crate::error::{Error, Result};

pub const MIN_FOREGROUND: f64 = 0.05;
pub const MAX_FOREGROUND: f64 = 0.6;
pub const MANIFEST_NAME: &str = "manifest.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Seg,
    Cls,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seg" => Ok(SynthKind::Seg),
            "cls" => Ok(SynthKind::Cls),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}` (expected seg or cls)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub kind: SynthKind,
    /// Training records; `test_count` more follow with split `test`.
    pub count: usize,
    pub test_count: usize,
    pub height: usize,
    pub width: usize,
    pub class_count: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn seg(count: usize, height: usize, width: usize, seed: u64) -> Self {
        Self { kind: SynthKind::Seg, count, test_count: 0, height, width, class_count: 2, seed }
    }

    pub fn cls(count: usize, height: usize, width: usize, class_count: usize, seed: u64) -> Self {
        Self { kind: SynthKind::Cls, count, test_count: 0, height, width, class_count, seed }
    }
}

/// One generated sample: an RGB image, its foreground mask and (for `cls`) its label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub image: ImageBuffer,
    pub mask: ImageBuffer,
    pub label: Option<usize>,
}

impl Sample {
    pub fn foreground_fraction(&self) -> f64 {
        self.mask.samples.iter().filter(|&&s| s == 255).count() as f64 / self.mask.samples.len() as f64
    }
}

/// Sample `index` of a dataset; a pure function of `(config, index)`.
pub fn synth_sample(config: &SynthConfig, index: usize) -> Result<Sample> {
    if config.height < 8 || config.width < 8 {
        return Err(Error::invalid(format!("synthetic images must be at least 8×8, got {}×{}", config.height, config.width)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    match config.kind {
        SynthKind::Seg => Ok(seg_sample(config, &mut rng)),
        SynthKind::Cls => {
            if config.class_count < 2 {
                return Err(Error::invalid("classification data needs at least 2 classes"));
            }
            Ok(cls_sample(config, index % config.class_count, &mut rng))
        }
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, h: f64, w: f64) -> Self {
        let (ry, rx) = (rng.random_range(0.12..0.3) * h, rng.random_range(0.12..0.3) * w);
        let (cy, cx) = (rng.random_range(ry * 0.5..h - ry * 0.5), rng.random_range(rx * 0.5..w - rx * 0.5));
        if rng.random_bool(0.5) {
            Shape::Ellipse { cy, cx, ry, rx }
        } else {
            Shape::Rect { y0: cy - ry, x0: cx - rx, y1: cy + ry, x1: cx + rx }
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
        }
    }
}

/// Low-saturation noisy texture.
fn background(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<[f64; 3]> {
    let base = rng.random_range(70.0..150.0);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-12.0..12.0));
    let (fy, fx) = (rng.random_range(0.2..0.7), rng.random_range(0.2..0.7));
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let wave = 18.0 * (fy * y).sin() * (fx * x).cos();
            let noise = rng.random_range(-10.0..10.0);
            std::array::from_fn(|c| base + tint[c] + wave + noise)
        })
        .collect()
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let rgb = match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    };
    rgb.map(|c| c * 255.0)
}

fn pack(pixels: &[[f64; 3]], fg: &[bool], w: usize, h: usize) -> (ImageBuffer, ImageBuffer) {
    let samples = pixels.iter().flat_map(|p| p.map(|c| c.round().clamp(0.0, 255.0) as u8)).collect();
    let mask = fg.iter().map(|&f| if f { 255 } else { 0 }).collect();
    (ImageBuffer { width: w, height: h, channels: 3, samples }, ImageBuffer { width: w, height: h, channels: 1, samples: mask })
}

fn seg_sample(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Sample {
    let (h, w) = (config.height, config.width);
    loop {
        let shapes: Vec<(Shape, [f64; 3])> = (0..rng.random_range(1..=3))
            .map(|_| {
                let colour = hsv(rng.random::<f64>(), rng.random_range(0.75..1.0), rng.random_range(0.8..1.0));
                (Shape::random(rng, h as f64, w as f64), colour)
            })
            .collect();
        let mut pixels = background(rng, h, w);
        let mut fg = vec![false; h * w];
        for (i, (px, f)) in pixels.iter_mut().zip(&mut fg).enumerate() {
            let (y, x) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
            // later shapes paint over earlier ones
            if let Some((_, colour)) = shapes.iter().rev().find(|(s, _)| s.contains(y, x)) {
                *px = *colour;
                *f = true;
            }
        }
        let frac = fg.iter().filter(|&&f| f).count() as f64 / fg.len() as f64;
        if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&frac) {
            let (image, mask) = pack(&pixels, &fg, w, h);
            return Sample { image, mask, label: None };
        }
    }
}

fn cls_sample(config: &SynthConfig, label: usize, rng: &mut ChaCha8Rng) -> Sample {
    let (h, w) = (config.height, config.width);
    let bands = config.class_count.div_ceil(2);
    let (band, fast) = (label / 2, label % 2 == 1);
    let hue = (band as f64 + rng.random_range(0.3..0.7)) / bands as f64;
    let cycles = if fast { rng.random_range(7.0..9.0) } else { rng.random_range(2.0..3.0) };
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let body = Shape::Ellipse {
        cy: h as f64 * rng.random_range(0.45..0.55),
        cx: w as f64 * rng.random_range(0.45..0.55),
        ry: h as f64 * rng.random_range(0.32..0.42),
        rx: w as f64 * rng.random_range(0.3..0.4),
    };
    let light = hsv(hue, 0.85, 0.95);
    let dark = hsv(hue, 0.9, 0.45);
    let mut pixels = background(rng, h, w);
    let mut fg = vec![false; h * w];
    for (i, (px, f)) in pixels.iter_mut().zip(&mut fg).enumerate() {
        let (y, x) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
        if body.contains(y, x) {
            let stripe = (std::f64::consts::TAU * cycles * y / h as f64 + phase).sin() > 0.0;
            *px = if stripe { light } else { dark };
            *f = true;
        }
    }
    let (image, mask) = pack(&pixels, &fg, w, h);
    Sample { image, mask, label: Some(label) }
}

/// Writes `images/NNNN.ppm`, `masks/NNNN.pgm` and a manifest under `out_dir`.
/// Returns the manifest path.
pub fn gen_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    if config.count + config.test_count == 0 {
        return Err(Error::invalid("nothing to generate: count is 0"));
    }
    fs::create_dir_all(out_dir.join("images"))?;
    fs::create_dir_all(out_dir.join("masks"))?;
    let mut manifest = String::from("# image,mask,label,split\n");
    for i in 0..config.count + config.test_count {
        let s = synth_sample(config, i)?;
        let image_path = PathBuf::from(format!("images/{i:04}.ppm"));
        let mask_path = PathBuf::from(format!("masks/{i:04}.pgm"));
        fs::write(out_dir.join(&image_path), encode_ppm(&s.image)?)?;
        fs::write(out_dir.join(&mask_path), encode_pgm(&s.mask)?)?;
        let split = if i < config.count { Split::Train } else { Split::Test };
        let record = SampleRecord { image_path, mask_path: Some(mask_path), label: s.label, split };
        manifest.push_str(&record.to_line());
        manifest.push('\n');
    }
    let path = out_dir.join(MANIFEST_NAME);
    fs::write(&path, manifest)?;
    Ok(path)
}
