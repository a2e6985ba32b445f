//! Frequency filter bank: grayscale, orthonormal 2-D DCT, three anti-diagonal
//! band masks, per-band inverse DCT, stacked as (low, mid, high).

use std::io::{Read, Write};
use std::path::Path;

use image::{GrayImage, RgbImage};
use recap_tensor::{gemm, kernels, MatMut, MatRef, Tensor};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

/// BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];
pub const DEFAULT_SIDE: usize = 224;
pub const DEFAULT_K: usize = 10;

/// Grayscale in `[0, 1]` at `n x n`, resampled bilinearly (align-corners
/// false) when the source has a different size.
pub fn to_grayscale(rgb: &RgbImage, n: usize) -> Result<Tensor<f64>> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Input("empty image".into()));
    }
    if n == 0 {
        return Err(Error::Config("grayscale side must be positive".into()));
    }
    let gray: Vec<f64> = rgb
        .pixels()
        .map(|p| (LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64) / 255.0)
        .collect();
    let plane = if (h, w) == (n, n) {
        gray
    } else {
        kernels::bilinear_forward(&gray, 1, h, w, n, n)
    };
    Ok(Tensor::new(&[n, n], plane)?)
}

/// RGB planes as `[3, n, n]` in `[0, 1]`, resampled like [`to_grayscale`].
pub fn rgb_planes(rgb: &RgbImage, n: usize) -> Result<Tensor<f64>> {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Input("empty image".into()));
    }
    let mut planes = vec![0.0; 3 * h * w];
    for (i, p) in rgb.pixels().enumerate() {
        for c in 0..3 {
            planes[c * h * w + i] = p[c] as f64 / 255.0;
        }
    }
    let data = if (h, w) == (n, n) {
        planes
    } else {
        kernels::bilinear_forward(&planes, 3, h, w, n, n)
    };
    Ok(Tensor::new(&[3, n, n], data)?)
}

/// Orthonormal type-II DCT basis for one side length; `forward` and
/// `inverse` apply it separably (rows, then columns).
pub struct DctPlan {
    n: usize,
    /// `basis[u * n + x] = a(u) cos(pi (2x + 1) u / 2n)`
    basis: Vec<f64>,
}

impl DctPlan {
    pub fn new(n: usize) -> Self {
        let mut basis = Vec::with_capacity(n * n);
        let nf = n as f64;
        for u in 0..n {
            let scale = if u == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for x in 0..n {
                basis.push(scale * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2.0 * nf)).cos());
            }
        }
        DctPlan { n, basis }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    fn check(&self, x: &Tensor<f64>) -> Result<()> {
        let s = x.shape();
        if s.len() != 2 || s[0] != s[1] {
            return Err(Error::Shape(format!("DCT needs a square matrix, got {s:?}")));
        }
        if s[0] != self.n {
            return Err(Error::Shape(format!("plan is for side {}, got {}", self.n, s[0])));
        }
        Ok(())
    }

    /// `B X B^T`
    pub fn forward(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.check(x)?;
        Ok(self.sandwich(x.data(), false))
    }

    /// `B^T Y B`
    pub fn inverse(&self, y: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.check(y)?;
        Ok(self.sandwich(y.data(), true))
    }

    fn sandwich(&self, m: &[f64], inverse: bool) -> Tensor<f64> {
        let n = self.n;
        let (left, right) = if inverse {
            (MatRef::transposed(&self.basis, n), MatRef::row_major(&self.basis, n))
        } else {
            (MatRef::row_major(&self.basis, n), MatRef::transposed(&self.basis, n))
        };
        let mut tmp = vec![0.0; n * n];
        gemm(n, n, n, 1.0, MatRef::row_major(m, n), right, 0.0, MatMut::row_major(&mut tmp, n));
        let mut out = vec![0.0; n * n];
        gemm(n, n, n, 1.0, left, MatRef::row_major(&tmp, n), 0.0, MatMut::row_major(&mut out, n));
        Tensor::new(&[n, n], out).expect("square plan output")
    }
}

pub fn dct2d(gray: &Tensor<f64>) -> Result<Tensor<f64>> {
    let s = gray.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::Shape(format!("DCT needs a square matrix, got {s:?}")));
    }
    DctPlan::new(s[0]).forward(gray)
}

pub fn idct2d(coeffs: &Tensor<f64>) -> Result<Tensor<f64>> {
    let s = coeffs.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::Shape(format!("DCT needs a square matrix, got {s:?}")));
    }
    DctPlan::new(s[0]).inverse(coeffs)
}

/// Binary DCT-plane masks over zero-based `(i, j)`: low is `i + j < k`,
/// mid is `k <= i + j < 2k`, high is `i + j >= 2k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMasks {
    pub k: usize,
    pub n: usize,
    pub low: Vec<u8>,
    pub mid: Vec<u8>,
    pub high: Vec<u8>,
}

impl BandMasks {
    pub fn bands(&self) -> [&[u8]; 3] {
        [&self.low, &self.mid, &self.high]
    }

    pub fn popcounts(&self) -> [usize; 3] {
        self.bands().map(|b| b.iter().filter(|&&v| v == 1).count())
    }
}

pub fn make_band_masks(k: usize, n: usize) -> Result<BandMasks> {
    if k == 0 {
        return Err(Error::Config("filter bank threshold k must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Config("mask side must be positive".into()));
    }
    let mut low = vec![0u8; n * n];
    let mut mid = vec![0u8; n * n];
    let mut high = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = i + j;
            let slot = if d < k {
                &mut low
            } else if d < 2 * k {
                &mut mid
            } else {
                &mut high
            };
            slot[i * n + j] = 1;
        }
    }
    Ok(BandMasks { k, n, low, mid, high })
}

/// Split a grayscale plane into its three band-limited reconstructions.
pub fn split_bands(gray: &Tensor<f64>, masks: &BandMasks, plan: &DctPlan) -> Result<[Tensor<f64>; 3]> {
    if plan.side() != masks.n {
        return Err(Error::Config("DCT plan and masks disagree on side".into()));
    }
    let coeffs = plan.forward(gray)?;
    let band = |mask: &[u8]| -> Result<Tensor<f64>> {
        let masked: Vec<f64> = coeffs
            .data()
            .iter()
            .zip(mask)
            .map(|(&c, &m)| if m == 1 { c } else { 0.0 })
            .collect();
        plan.inverse(&Tensor::new(coeffs.shape(), masked)?)
    };
    Ok([band(&masks.low)?, band(&masks.mid)?, band(&masks.high)?])
}

/// Three band images stacked `(low, mid, high)` as `[3, n, n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandImage {
    pub channels: Tensor<f32>,
    pub source_hash: [u8; 32],
}

impl BandImage {
    pub fn side(&self) -> usize {
        self.channels.shape()[1]
    }
}

pub fn content_hash(rgb: &RgbImage) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(rgb.width().to_le_bytes());
    h.update(rgb.height().to_le_bytes());
    h.update(rgb.as_raw());
    h.finalize().into()
}

/// Reusable filter bank for a fixed `(k, n)`.
pub struct FilterBank {
    masks: BandMasks,
    plan: DctPlan,
}

impl FilterBank {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        Ok(FilterBank {
            masks: make_band_masks(k, n)?,
            plan: DctPlan::new(n),
        })
    }

    pub fn masks(&self) -> &BandMasks {
        &self.masks
    }

    pub fn plan(&self) -> &DctPlan {
        &self.plan
    }

    pub fn apply_gray(&self, gray: &Tensor<f64>) -> Result<Tensor<f64>> {
        let n = self.masks.n;
        let bands = split_bands(gray, &self.masks, &self.plan)?;
        let data: Vec<f64> = bands.iter().flat_map(|b| b.data().iter().copied()).collect();
        Ok(Tensor::new(&[3, n, n], data)?)
    }

    pub fn apply(&self, rgb: &RgbImage) -> Result<BandImage> {
        let gray = to_grayscale(rgb, self.masks.n)?;
        Ok(BandImage {
            channels: self.apply_gray(&gray)?.cast(),
            source_hash: content_hash(rgb),
        })
    }
}

pub fn filter_bank_preprocess(rgb: &RgbImage, k: usize) -> Result<BandImage> {
    FilterBank::new(k, DEFAULT_SIDE)?.apply(rgb)
}

const BAND_MAGIC: &[u8; 4] = b"RCBD";
const BAND_VERSION: u32 = 1;

/// Band file layout (little-endian): magic `RCBD`, version `u32`,
/// channel count `u32`, side `u32`, 32-byte source hash, then
/// `channels * side * side` `f32` values in channel-major row-major order.
pub fn write_band_file(path: &Path, band: &BandImage) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    let s = band.channels.shape();
    let mut header = Vec::with_capacity(48);
    header.extend_from_slice(BAND_MAGIC);
    header.extend_from_slice(&BAND_VERSION.to_le_bytes());
    header.extend_from_slice(&(s[0] as u32).to_le_bytes());
    header.extend_from_slice(&(s[1] as u32).to_le_bytes());
    header.extend_from_slice(&band.source_hash);
    w.write_all(&header).map_err(io_err(path))?;
    for v in band.channels.data() {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_band_file(path: &Path) -> Result<BandImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.len() < 48 || &bytes[..4] != BAND_MAGIC {
        return Err(Error::Input(format!("{} is not a band file", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    if word(4) != BAND_VERSION as usize {
        return Err(Error::Input(format!("unsupported band file version {}", word(4))));
    }
    let (c, n) = (word(8), word(12));
    let mut source_hash = [0u8; 32];
    source_hash.copy_from_slice(&bytes[16..48]);
    let body = &bytes[48..];
    if body.len() != c * n * n * 4 {
        return Err(Error::Input(format!("{}: truncated band data", path.display())));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(BandImage {
        channels: Tensor::new(&[c, n, n], data)?,
        source_hash,
    })
}

/// Side-by-side 8-bit rendering of the three bands, each min-max stretched.
pub fn band_triptych(band: &BandImage) -> GrayImage {
    let n = band.side();
    let mut img = GrayImage::new(3 * n as u32, n as u32);
    for (b, plane) in band.channels.data().chunks(n * n).enumerate() {
        let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (i, &v) in plane.iter().enumerate() {
            let px = (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8;
            img.put_pixel((b * n + i % n) as u32, (i / n) as u32, image::Luma([px]));
        }
    }
    img
}
