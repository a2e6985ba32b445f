//! Synthetic document corpus: genuine captures of procedurally drawn
//! templates, simulated recaptures, two device profiles, JPEG duplicates,
//! and template-disjoint splits.

use std::collections::BTreeSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::jpeg::JpegEncoder;
use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use recap_tensor::kernels;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

pub const DEFAULT_JPEG_QUALITY: u8 = 75;
pub const MANIFEST: &str = "manifest.json";
pub const DEVICE_PROFILES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Recaptured,
}

impl Label {
    pub fn index(self) -> u8 {
        match self {
            Label::Genuine => 0,
            Label::Recaptured => 1,
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::Recaptured => "recaptured",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "q")]
pub enum Quality {
    Lossless,
    Jpeg(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub image: RgbImage,
    pub label: Label,
    pub template_id: usize,
    pub quality: Quality,
    pub device_profile: usize,
    /// Position within its (template, device, label) group; a recapture
    /// shares the index of the genuine capture it was made from.
    pub index: usize,
}

/// Simulated recapture: blur, resample, color mixing, sensor noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecaptureProfile {
    pub blur_sigma: f64,
    pub color_matrix: [[f64; 3]; 3],
    pub resample_factor: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl RecaptureProfile {
    /// A profile that leaves images unchanged up to rounding.
    pub fn identity() -> Self {
        RecaptureProfile {
            blur_sigma: 1e-3,
            color_matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            resample_factor: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma > 0.0 && self.blur_sigma <= 3.0) {
            return Err(Error::Config(format!("blur sigma {} outside (0, 3]", self.blur_sigma)));
        }
        if !(self.resample_factor > 0.5 && self.resample_factor <= 1.0) {
            return Err(Error::Config(format!(
                "resample factor {} outside (0.5, 1]",
                self.resample_factor
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma {} is invalid", self.noise_sigma)));
        }
        for row in &self.color_matrix {
            let sum: f64 = row.iter().sum();
            if !row.iter().all(|v| v.is_finite()) || (sum - 1.0).abs() > 0.1 {
                return Err(Error::Config(format!("color matrix row {row:?} does not sum to 1 +- 0.1")));
            }
        }
        Ok(())
    }
}

/// Parameter ranges of one capture device; ranges of different devices
/// do not overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceProfile {
    pub id: usize,
    pub blur_sigma: (f64, f64),
    pub resample_factor: (f64, f64),
    /// Off-diagonal color leakage per row.
    pub color_leak: (f64, f64),
    pub noise_sigma: (f64, f64),
    /// Genuine-capture brightness gain.
    pub gain: (f64, f64),
    pub capture_noise: f64,
}

impl DeviceProfile {
    pub fn builtin(id: usize) -> Result<Self> {
        match id {
            0 => Ok(DeviceProfile {
                id,
                blur_sigma: (0.8, 1.3),
                resample_factor: (0.62, 0.74),
                color_leak: (0.03, 0.07),
                noise_sigma: (1.5, 3.0),
                gain: (0.96, 1.02),
                capture_noise: 1.5,
            }),
            1 => Ok(DeviceProfile {
                id,
                blur_sigma: (1.4, 2.2),
                resample_factor: (0.76, 0.9),
                color_leak: (0.075, 0.095),
                noise_sigma: (3.2, 5.0),
                gain: (0.9, 0.95),
                capture_noise: 3.0,
            }),
            other => Err(Error::Config(format!("no device profile {other}"))),
        }
    }

    pub fn sample_recapture<R: Rng + ?Sized>(&self, rng: &mut R) -> RecaptureProfile {
        let mut u = |(lo, hi): (f64, f64)| rng.gen_range(lo..=hi);
        let blur_sigma = u(self.blur_sigma);
        let resample_factor = u(self.resample_factor);
        let noise_sigma = u(self.noise_sigma);
        let mut color_matrix = [[0.0; 3]; 3];
        for (r, row) in color_matrix.iter_mut().enumerate() {
            let leak = u(self.color_leak);
            let split = u((0.2, 0.8));
            row[r] = 1.0 - leak;
            row[(r + 1) % 3] = leak * split;
            row[(r + 2) % 3] = leak * (1.0 - split);
        }
        RecaptureProfile {
            blur_sigma,
            color_matrix,
            resample_factor,
            noise_sigma,
            seed: u((0.0, 1e15)) as u64,
        }
    }
}

/// `[3, h, w]` planes in 0..255 as f64.
struct Planes {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Planes {
    fn from_image(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * h * w];
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = p[c] as f64;
            }
        }
        Planes { h, w, data }
    }

    fn to_image(&self) -> RgbImage {
        let plane = self.h * self.w;
        RgbImage::from_fn(self.w as u32, self.h as u32, |x, y| {
            let i = y as usize * self.w + x as usize;
            Rgb([0, 1, 2].map(|c| self.data[c * plane + i].round().clamp(0.0, 255.0) as u8))
        })
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamped borders.
fn blur(p: &mut Planes, sigma: f64) {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = (p.h as isize, p.w as isize);
    let mut tmp = vec![0.0; p.data.len()];
    for c in 0..3 {
        let off = c * p.h * p.w;
        let src = &p.data[off..off + p.h * p.w];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (t, &kv) in k.iter().enumerate() {
                    let xx = (x + t as isize - r).clamp(0, w - 1);
                    s += kv * src[(y * w + xx) as usize];
                }
                tmp[off + (y * w + x) as usize] = s;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (t, &kv) in k.iter().enumerate() {
                    let yy = (y + t as isize - r).clamp(0, h - 1);
                    s += kv * tmp[off + (yy * w + x) as usize];
                }
                p.data[off + (y * w + x) as usize] = s;
            }
        }
    }
}

fn add_noise<R: Rng + ?Sized>(p: &mut Planes, sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
        p.data.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
}

/// Blur, downscale by `resample_factor` and back (bilinear), mix colors,
/// add Gaussian noise.
pub fn recapture(img: &RgbImage, profile: &RecaptureProfile) -> Result<RgbImage> {
    profile.validate()?;
    let mut p = Planes::from_image(img);
    blur(&mut p, profile.blur_sigma);
    let small_h = ((p.h as f64 * profile.resample_factor).round() as usize).max(1);
    let small_w = ((p.w as f64 * profile.resample_factor).round() as usize).max(1);
    if (small_h, small_w) != (p.h, p.w) {
        let small = kernels::bilinear_forward(&p.data, 3, p.h, p.w, small_h, small_w);
        p.data = kernels::bilinear_forward(&small, 3, small_h, small_w, p.h, p.w);
    }
    let plane = p.h * p.w;
    let m = &profile.color_matrix;
    for i in 0..plane {
        let px = [p.data[i], p.data[plane + i], p.data[2 * plane + i]];
        for (c, row) in m.iter().enumerate() {
            let v = row[0] * px[0] + row[1] * px[1] + row[2] * px[2];
            p.data[c * plane + i] = v.clamp(0.0, 255.0);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    add_noise(&mut p, profile.noise_sigma, &mut rng);
    Ok(p.to_image())
}

/// A genuine capture: small shift, brightness gain and sensor noise.
fn capture<R: Rng + ?Sized>(template: &RgbImage, device: &DeviceProfile, rng: &mut R) -> RgbImage {
    let (w, h) = template.dimensions();
    let dx = rng.gen_range(-3i64..=3);
    let dy = rng.gen_range(-3i64..=3);
    let gain = rng.gen_range(device.gain.0..=device.gain.1);
    let shifted = RgbImage::from_fn(w, h, |x, y| {
        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as u32;
        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as u32;
        *template.get_pixel(sx, sy)
    });
    let mut p = Planes::from_image(&shifted);
    p.data.iter_mut().for_each(|v| *v *= gain);
    add_noise(&mut p, device.capture_noise, rng);
    p.to_image()
}

fn template_rng(seed: u64, template_id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (template_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn blend(&mut self, x: i64, y: i64, color: [u8; 3], alpha: f64) {
        let (w, h) = self.img.dimensions();
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return;
        }
        let p = self.img.get_pixel_mut(x as u32, y as u32);
        for c in 0..3 {
            p[c] = (p[c] as f64 * (1.0 - alpha) + color[c] as f64 * alpha).round() as u8;
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, color: [u8; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.blend(x, y, color, 1.0);
            }
        }
    }
}

/// Deterministic document-like templates: paper texture, a fine security
/// pattern, header bar, text lines of glyph-like strokes, rules and a stamp.
pub fn gen_templates(n_templates: usize, size: usize, seed: u64) -> Result<Vec<RgbImage>> {
    if n_templates < 2 {
        return Err(Error::Config(format!("need at least 2 templates, got {n_templates}")));
    }
    if size < 32 {
        return Err(Error::Config(format!("template size {size} is below 32")));
    }
    Ok((0..n_templates).map(|id| draw_template(size, &mut template_rng(seed, id))).collect())
}

fn draw_template<R: Rng + ?Sized>(size: usize, rng: &mut R) -> RgbImage {
    let s = size as i64;
    let paper = [rng.gen_range(232..=250), rng.gen_range(230..=248), rng.gen_range(215..=240)];
    let mut cv = Canvas {
        img: RgbImage::from_pixel(size as u32, size as u32, Rgb(paper)),
    };
    for p in cv.img.pixels_mut() {
        let jitter: i16 = rng.gen_range(-4..=4);
        for c in 0..3 {
            p[c] = (p[c] as i16 + jitter).clamp(0, 255) as u8;
        }
    }

    // fine sinusoidal security pattern over a random band
    let ink = [rng.gen_range(60..200), rng.gen_range(60..200), rng.gen_range(60..200)];
    let (fx, fy) = (rng.gen_range(0.15..0.35), rng.gen_range(-0.2..0.2));
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let band_y = rng.gen_range(s / 3..2 * s / 3);
    let band_h = rng.gen_range(s / 8..s / 4);
    for y in band_y..(band_y + band_h).min(s) {
        for x in 0..s {
            let v = (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + phase).sin();
            if v > 0.3 {
                cv.blend(x, y, ink, 0.35);
            }
        }
    }

    // header bar with reversed-out words
    let header = [rng.gen_range(10..120), rng.gen_range(10..120), rng.gen_range(60..200)];
    let header_h = rng.gen_range(14..24);
    let margin = rng.gen_range(6..14);
    cv.rect(margin, margin, s - 2 * margin, header_h, header);
    let mut x = margin + 4;
    while x < s - margin - 10 {
        let wlen = rng.gen_range(6..26);
        cv.rect(x, margin + header_h / 2 - 2, wlen.min(s - margin - 4 - x), 4, [245, 245, 245]);
        x += wlen + rng.gen_range(4..9);
    }

    // text lines made of glyph-like vertical strokes
    let text = [rng.gen_range(0..60), rng.gen_range(0..60), rng.gen_range(0..80)];
    let line_gap = rng.gen_range(9..14);
    let glyph_h = rng.gen_range(4..7);
    let indent = margin + rng.gen_range(0..12);
    let mut y = margin + header_h + rng.gen_range(6..12);
    while y + glyph_h < s - margin {
        if (band_y..band_y + band_h).contains(&y) && rng.gen_bool(0.5) {
            y += line_gap;
            continue;
        }
        let line_end = s - margin - rng.gen_range(0..s / 3);
        let mut x = indent;
        while x < line_end {
            let wlen = rng.gen_range(5..28).min(line_end - x);
            let mut gx = x;
            while gx < x + wlen {
                let stroke = rng.gen_range(1..3);
                let tall = if rng.gen_bool(0.2) { 2 } else { 0 };
                cv.rect(gx, y - tall, stroke, glyph_h + tall, text);
                gx += stroke + rng.gen_range(1..3);
            }
            x += wlen + rng.gen_range(3..7);
        }
        if rng.gen_bool(0.12) {
            cv.rect(margin, y + glyph_h + 2, s - 2 * margin, 1, header);
        }
        y += line_gap;
    }

    // stamp ring
    let stamp = if rng.gen_bool(0.5) { [200, 30, 40] } else { [30, 50, 190] };
    let (cx, cy) = (rng.gen_range(s / 4..3 * s / 4), rng.gen_range(s / 2..s - 20));
    let radius = rng.gen_range(14.0..28.0);
    let thickness = rng.gen_range(2.0..3.5);
    for y in cy - 32..cy + 32 {
        for x in cx - 32..cx + 32 {
            let d = (((x - cx) * (x - cx) + (y - cy) * (y - cy)) as f64).sqrt();
            if (d - radius).abs() < thickness || (d < radius * 0.45 && (x + y) % 3 == 0) {
                cv.blend(x, y, stamp, 0.7);
            }
        }
    }
    cv.img
}

pub fn encode_jpeg(img: &RgbImage, q: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&q) {
        return Err(Error::Config(format!("JPEG quality {q} outside 1..=100")));
    }
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, q).encode_image(img)?;
    Ok(bytes)
}

/// Encode/decode round trip at quality `q`; labels and ids are kept.
pub fn jpeg_duplicate(samples: &[LabeledSample], q: u8) -> Result<Vec<LabeledSample>> {
    samples
        .iter()
        .map(|s| {
            let bytes = encode_jpeg(&s.image, q)?;
            let image = image::load_from_memory_with_format(&bytes, ImageFormat::Jpeg)?.to_rgb8();
            Ok(LabeledSample {
                image,
                quality: Quality::Jpeg(q),
                ..s.clone()
            })
        })
        .collect()
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::Shape("PSNR needs equal image sizes".into()));
    }
    let mse = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.as_raw().len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (255.0 * 255.0 / mse).log10() })
}

/// Template counts per split; templates are assigned in id order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 8, val: 2, test: 2 }
    }
}

impl SplitSpec {
    pub fn split_of(&self, template_id: usize) -> Split {
        if template_id < self.train {
            Split::Train
        } else if template_id < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn templates(&self, split: Split) -> Vec<usize> {
        let (lo, n) = match split {
            Split::Train => (0, self.train),
            Split::Val => (self.train, self.val),
            Split::Test => (self.train + self.val, self.test),
        };
        (lo..lo + n).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_templates: usize,
    /// Images per template and device profile, half genuine, half recaptured.
    pub per_template: usize,
    pub seed: u64,
    pub side: usize,
    pub jpeg_quality: u8,
    pub split: SplitSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_templates: 12,
            per_template: 40,
            seed: 0,
            side: 224,
            jpeg_quality: DEFAULT_JPEG_QUALITY,
            split: SplitSpec::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_template < 2 || !self.per_template.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "per-template count {} must be even and at least 2",
                self.per_template
            )));
        }
        let s = &self.split;
        if s.train + s.val + s.test != self.n_templates || s.train == 0 || s.test == 0 {
            return Err(Error::Config(format!(
                "split {}/{}/{} does not partition {} templates",
                s.train, s.val, s.test, self.n_templates
            )));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(Error::Config(format!("JPEG quality {} outside 1..=100", self.jpeg_quality)));
        }
        Ok(())
    }
}

/// Every lossless sample: for each template and device, `per_template / 2`
/// genuine captures and one recapture of each.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    let templates = gen_templates(cfg.n_templates, cfg.side, cfg.seed)?;
    let mut out = Vec::with_capacity(cfg.n_templates * DEVICE_PROFILES * cfg.per_template);
    for (template_id, template) in templates.iter().enumerate() {
        for device_id in 0..DEVICE_PROFILES {
            let device = DeviceProfile::builtin(device_id)?;
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ ((template_id * DEVICE_PROFILES + device_id) as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
            );
            for index in 0..cfg.per_template / 2 {
                let genuine = capture(template, &device, &mut rng);
                let profile = device.sample_recapture(&mut rng);
                let recaptured = recapture(&genuine, &profile)?;
                for (image, label) in [(genuine, Label::Genuine), (recaptured, Label::Recaptured)] {
                    out.push(LabeledSample {
                        image,
                        label,
                        template_id,
                        quality: Quality::Lossless,
                        device_profile: device_id,
                        index,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Partition by template; the sets must be disjoint.
pub fn make_splits(
    samples: &[LabeledSample],
    train_templates: &[usize],
    eval_templates: &[usize],
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    let train: BTreeSet<_> = train_templates.iter().copied().collect();
    let eval: BTreeSet<_> = eval_templates.iter().copied().collect();
    if let Some(t) = train.intersection(&eval).next() {
        return Err(Error::Config(format!("template {t} is in both train and eval splits")));
    }
    let pick = |set: &BTreeSet<usize>| samples.iter().filter(|s| set.contains(&s.template_id)).cloned().collect();
    Ok((pick(&train), pick(&eval)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Relative to the corpus root.
    pub path: PathBuf,
    pub label: Label,
    pub template_id: usize,
    pub quality: Quality,
    pub device_profile: usize,
    pub split: Split,
    pub index: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SynthConfig,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    /// Fails unless every template belongs to exactly one split.
    pub fn check_template_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::BTreeMap::new();
        for s in &self.samples {
            if let Some(prev) = seen.insert(s.template_id, s.split) {
                if prev != s.split {
                    return Err(Error::Config(format!(
                        "template {} appears in both {:?} and {:?}",
                        s.template_id, prev, s.split
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn select(&self, split: Split, device_profile: usize, quality: Quality) -> Vec<&SampleRecord> {
        self.samples
            .iter()
            .filter(|s| s.split == split && s.device_profile == device_profile && s.quality == quality)
            .collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn relative_path(s: &LabeledSample, split: Split) -> PathBuf {
    let file = match s.quality {
        Quality::Lossless => format!("{:04}_d{}.png", s.index, s.device_profile),
        Quality::Jpeg(q) => format!("{:04}_d{}_q{q}.jpg", s.index, s.device_profile),
    };
    PathBuf::from(split.dir_name())
        .join(s.label.dir_name())
        .join(format!("t{:02}", s.template_id))
        .join(file)
}

/// Write every lossless sample as PNG plus a JPEG duplicate, then the
/// manifest.
pub fn write_corpus(root: &Path, cfg: &SynthConfig) -> Result<Manifest> {
    let lossless = synthesize(cfg)?;
    let mut records = Vec::with_capacity(2 * lossless.len());
    for s in &lossless {
        let split = cfg.split.split_of(s.template_id);
        let mut png = Vec::new();
        s.image.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)?;
        let jpg = encode_jpeg(&s.image, cfg.jpeg_quality)?;
        let jpeg_sample = LabeledSample {
            quality: Quality::Jpeg(cfg.jpeg_quality),
            ..s.clone()
        };
        for (sample, bytes) in [(s, png), (&jpeg_sample, jpg)] {
            let rel = relative_path(sample, split);
            let full = root.join(&rel);
            if let Some(dir) = full.parent() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            fs::write(&full, &bytes).map_err(io_err(&full))?;
            records.push(SampleRecord {
                path: rel,
                label: sample.label,
                template_id: sample.template_id,
                quality: sample.quality,
                device_profile: sample.device_profile,
                split,
                index: sample.index,
                sha256: sha256_hex(&bytes),
            });
        }
    }
    let manifest = Manifest {
        config: cfg.clone(),
        samples: records,
    };
    manifest.check_template_disjoint()?;
    let path = root.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn load_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)?;
    manifest.check_template_disjoint()?;
    Ok(manifest)
}

/// Load one record's image, checking its content hash.
pub fn load_image(root: &Path, record: &SampleRecord) -> Result<RgbImage> {
    let path = root.join(&record.path);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if sha256_hex(&bytes) != record.sha256 {
        return Err(Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, "content hash does not match manifest"),
        });
    }
    Ok(image::load_from_memory(&bytes)?.to_rgb8())
}
