//! Perceptual image hashes (average, difference, DCT, wavelet, color) and
//! Hamming-distance comparison.
//!
//! All hashes grayscale (except color), box-filter resize, and threshold
//! against a mean or lower median, giving bit-stable digests across
//! platforms. 64-bit digests except the 48-bit color hash (H|S|V, 4x4
//! cells each).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_area, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashAlgorithm {
    Average,
    Difference,
    Perceptual,
    Wavelet,
    Color,
}

impl HashAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            HashAlgorithm::Average => "average",
            HashAlgorithm::Difference => "difference",
            HashAlgorithm::Perceptual => "perceptual",
            HashAlgorithm::Wavelet => "wavelet",
            HashAlgorithm::Color => "color",
        }
    }

    pub fn digest_bits(self) -> usize {
        match self {
            HashAlgorithm::Color => 48,
            _ => 64,
        }
    }
}

/// Fixed-length bit string tagged with its algorithm; bits are packed
/// MSB-first in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashDigest {
    algorithm: HashAlgorithm,
    bits: usize,
    bytes: Vec<u8>,
}

impl HashDigest {
    pub(crate) fn from_bits(algorithm: HashAlgorithm, bits: &[bool]) -> Self {
        debug_assert_eq!(bits.len(), algorithm.digest_bits());
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Self {
            algorithm,
            bits: bits.len(),
            bytes,
        }
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn count_ones(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    /// Lowercase hex, MSB-first.
    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for HashDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

/// Number of disagreeing bit positions; digests must share algorithm (and
/// hence length).
pub fn hamming(a: &HashDigest, b: &HashDigest) -> Result<u32> {
    if a.algorithm != b.algorithm {
        return Err(Error::config(format!(
            "cannot compare {} and {} digests",
            a.algorithm.name(),
            b.algorithm.name()
        )));
    }
    Ok(a.bytes
        .iter()
        .zip(&b.bytes)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum())
}

/// Lower median: the `(n-1)/2`-th smallest value.
fn lower_median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[(sorted.len() - 1) / 2]
}

/// Grayscale, area-average to 8x8, bit = pixel > mean.
pub fn average_hash(img: &Image) -> HashDigest {
    let cells = resize_area(&img.luma(), img.width(), img.height(), 8, 8);
    let mean: f64 = cells.iter().sum::<f64>() / cells.len() as f64;
    let bits: Vec<bool> = cells.iter().map(|&v| v > mean).collect();
    HashDigest::from_bits(HashAlgorithm::Average, &bits)
}

/// Grayscale, area-average to 9x8, bit = left pixel > right neighbour.
pub fn difference_hash(img: &Image) -> HashDigest {
    let cells = resize_area(&img.luma(), img.width(), img.height(), 9, 8);
    let mut bits = Vec::with_capacity(64);
    for r in 0..8 {
        for c in 0..8 {
            bits.push(cells[r * 9 + c] > cells[r * 9 + c + 1]);
        }
    }
    HashDigest::from_bits(HashAlgorithm::Difference, &bits)
}

/// Orthonormal 2-D type-II DCT.
fn dct2d(plane: &[f64], n: usize) -> Vec<f64> {
    let scale = |k: usize| {
        if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        }
    };
    // Precompute cos(pi (2x+1) u / 2n).
    let mut cos_table = vec![0.0; n * n];
    for u in 0..n {
        for x in 0..n {
            cos_table[u * n + x] =
                (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64).cos();
        }
    }
    // Rows then columns.
    let mut rows = vec![0.0; n * n];
    for y in 0..n {
        for u in 0..n {
            let mut acc = 0.0;
            for x in 0..n {
                acc += plane[y * n + x] * cos_table[u * n + x];
            }
            rows[y * n + u] = scale(u) * acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for v in 0..n {
        for u in 0..n {
            let mut acc = 0.0;
            for y in 0..n {
                acc += rows[y * n + u] * cos_table[v * n + y];
            }
            out[v * n + u] = scale(v) * acc;
        }
    }
    out
}

/// Grayscale, 32x32, 2-D DCT, top-left 8x8 block; bit = coefficient >
/// median of the block's AC terms. The DC slot is always 0 so uniform
/// brightness shifts cannot touch the digest.
pub fn perceptual_hash(img: &Image) -> HashDigest {
    let mut plane = resize_area(&img.luma(), img.width(), img.height(), 32, 32);
    // Center the plane: AC terms are unchanged mathematically, and a
    // constant image now transforms to exact zeros instead of summation
    // residue.
    let mean: f64 = plane.iter().sum::<f64>() / plane.len() as f64;
    for v in &mut plane {
        *v -= mean;
    }
    let freq = dct2d(&plane, 32);
    let mut block = Vec::with_capacity(64);
    for v in 0..8 {
        for u in 0..8 {
            block.push(freq[v * 32 + u]);
        }
    }
    let median = lower_median(&block[1..]);
    let bits: Vec<bool> = block
        .iter()
        .enumerate()
        .map(|(i, &c)| i != 0 && c > median)
        .collect();
    HashDigest::from_bits(HashAlgorithm::Perceptual, &bits)
}

/// One Haar averaging level: halve both dimensions by 2x2 block means.
fn haar_ll(plane: &[f64], n: usize) -> Vec<f64> {
    let half = n / 2;
    let mut out = Vec::with_capacity(half * half);
    for y in 0..half {
        for x in 0..half {
            let a = plane[(2 * y) * n + 2 * x];
            let b = plane[(2 * y) * n + 2 * x + 1];
            let c = plane[(2 * y + 1) * n + 2 * x];
            let d = plane[(2 * y + 1) * n + 2 * x + 1];
            out.push((a + b + c + d) / 4.0);
        }
    }
    out
}

/// Grayscale, 64x64, 3-level Haar approximation band (8x8); bit = value >
/// lower median.
pub fn wavelet_hash(img: &Image) -> HashDigest {
    let mut plane = resize_area(&img.luma(), img.width(), img.height(), 64, 64);
    let mut n = 64;
    for _ in 0..3 {
        plane = haar_ll(&plane, n);
        n /= 2;
    }
    let median = lower_median(&plane);
    let bits: Vec<bool> = plane.iter().map(|&v| v > median).collect();
    HashDigest::from_bits(HashAlgorithm::Wavelet, &bits)
}

/// HSV planes each area-averaged to 4x4; per channel, bit = cell > the
/// channel's lower median; sections concatenated H|S|V into 48 bits.
/// Grayscale input is channel-replicated first (see [`color_hash_checked`]
/// for the fallback flag).
pub fn color_hash(img: &Image) -> HashDigest {
    color_hash_checked(img).0
}

/// [`color_hash`] plus a flag marking the grayscale channel-replication
/// fallback.
pub fn color_hash_checked(img: &Image) -> (HashDigest, bool) {
    let grayscale_fallback = img.channels() == 1;
    let rgb = img.to_rgb();
    let (h, s, v) = rgb.hsv();
    let mut bits = Vec::with_capacity(48);
    for plane in [h, s, v] {
        let cells = resize_area(&plane, rgb.width(), rgb.height(), 4, 4);
        let median = lower_median(&cells);
        bits.extend(cells.iter().map(|&c| c > median));
    }
    (
        HashDigest::from_bits(HashAlgorithm::Color, &bits),
        grayscale_fallback,
    )
}

pub fn hash_with(algorithm: HashAlgorithm, img: &Image) -> HashDigest {
    match algorithm {
        HashAlgorithm::Average => average_hash(img),
        HashAlgorithm::Difference => difference_hash(img),
        HashAlgorithm::Perceptual => perceptual_hash(img),
        HashAlgorithm::Wavelet => wavelet_hash(img),
        HashAlgorithm::Color => color_hash(img),
    }
}

pub const ALL_ALGORITHMS: [HashAlgorithm; 5] = [
    HashAlgorithm::Average,
    HashAlgorithm::Perceptual,
    HashAlgorithm::Difference,
    HashAlgorithm::Wavelet,
    HashAlgorithm::Color,
];

/// Distances for one matched filename pair.
#[derive(Debug, Clone, Serialize)]
pub struct PairDistances {
    pub name: String,
    pub distances: Vec<(HashAlgorithm, u32)>,
    /// Plain RMSE over raw samples scaled to [0,1]; `None` when the images
    /// disagree in shape.
    pub rmse: Option<f64>,
    /// A grayscale image entered the color hash via channel replication.
    pub color_fallback: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlgStats {
    pub mean: f64,
    pub se: f64,
}

fn stats(values: &[f64]) -> AlgStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return AlgStats { mean, se: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    AlgStats {
        mean,
        se: (var / n).sqrt(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub pairs: Vec<PairDistances>,
    pub per_algorithm: Vec<(HashAlgorithm, AlgStats)>,
    pub rmse: Option<AlgStats>,
    pub unmatched_a: Vec<String>,
    pub unmatched_b: Vec<String>,
}

fn pnm_files(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("pgm") | Some("ppm")) {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.insert(name.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Hash every matched filename pair across two directories with all five
/// algorithms and aggregate per-algorithm mean and standard error.
/// Unmatched files are listed, not fatal.
pub fn corpus_report(dir_a: &Path, dir_b: &Path) -> Result<CorpusReport> {
    let a = pnm_files(dir_a)?;
    let b = pnm_files(dir_b)?;
    let mut pairs = Vec::new();
    let mut unmatched_a = Vec::new();
    let mut unmatched_b: Vec<String> = b
        .keys()
        .filter(|name| !a.contains_key(*name))
        .cloned()
        .collect();
    unmatched_b.sort();

    for (name, path_a) in &a {
        let Some(path_b) = b.get(name) else {
            unmatched_a.push(name.clone());
            continue;
        };
        let img_a = Image::read_pnm(path_a)?;
        let img_b = Image::read_pnm(path_b)?;
        let mut distances = Vec::with_capacity(ALL_ALGORITHMS.len());
        let mut color_fallback = false;
        for alg in ALL_ALGORITHMS {
            let (da, fa) = match alg {
                HashAlgorithm::Color => color_hash_checked(&img_a),
                _ => (hash_with(alg, &img_a), false),
            };
            let (db, fb) = match alg {
                HashAlgorithm::Color => color_hash_checked(&img_b),
                _ => (hash_with(alg, &img_b), false),
            };
            color_fallback |= fa || fb;
            distances.push((alg, hamming(&da, &db)?));
        }
        let rmse = if img_a.width() == img_b.width()
            && img_a.height() == img_b.height()
            && img_a.channels() == img_b.channels()
        {
            let sum: f64 = img_a
                .data()
                .iter()
                .zip(img_b.data())
                .map(|(&x, &y)| {
                    let d = (x as f64 - y as f64) / 255.0;
                    d * d
                })
                .sum();
            Some((sum / img_a.data().len() as f64).sqrt())
        } else {
            None
        };
        pairs.push(PairDistances {
            name: name.clone(),
            distances,
            rmse,
            color_fallback,
        });
    }

    let per_algorithm = ALL_ALGORITHMS
        .iter()
        .map(|&alg| {
            let values: Vec<f64> = pairs
                .iter()
                .map(|p| {
                    p.distances
                        .iter()
                        .find(|(a, _)| *a == alg)
                        .map(|(_, d)| *d as f64)
                        .unwrap()
                })
                .collect();
            (alg, stats(&values))
        })
        .collect();
    let rmse_values: Vec<f64> = pairs.iter().filter_map(|p| p.rmse).collect();
    let rmse = if rmse_values.is_empty() {
        None
    } else {
        Some(stats(&rmse_values))
    };
    Ok(CorpusReport {
        pairs,
        per_algorithm,
        rmse,
        unmatched_a,
        unmatched_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn constant(width: usize, height: usize, value: u8) -> Image {
        Image::new(width, height, 1, vec![value; width * height]).unwrap()
    }

    fn noise_image(width: usize, height: usize, seed: u64) -> Image {
        let mut rng = crate::rng::stream(seed, &[crate::rng::salt::DATA]);
        Image::new(
            width,
            height,
            1,
            (0..width * height).map(|_| rng.gen::<u8>()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn average_hash_constant_is_zero() {
        assert_eq!(average_hash(&constant(16, 16, 77)).count_ones(), 0);
    }

    #[test]
    fn average_hash_half_black_half_white() {
        // Left half black, right half white, 16x16 -> rows of 0x0f.
        let mut data = vec![0u8; 256];
        for r in 0..16 {
            for c in 8..16 {
                data[r * 16 + c] = 255;
            }
        }
        let img = Image::new(16, 16, 1, data).unwrap();
        let digest = average_hash(&img);
        assert_eq!(digest.to_hex(), "0f0f0f0f0f0f0f0f");
    }

    #[test]
    fn average_hash_affine_brightness_invariance() {
        let img = noise_image(32, 32, 1);
        // a*img + b with a=2, b=30 and no clipping (source below 112).
        let capped = Image::new(
            32,
            32,
            1,
            img.data().iter().map(|&v| v % 112).collect(),
        )
        .unwrap();
        let mapped = Image::new(
            32,
            32,
            1,
            capped.data().iter().map(|&v| 2 * v + 30).collect(),
        )
        .unwrap();
        assert_eq!(average_hash(&capped), average_hash(&mapped));
    }

    #[test]
    fn difference_hash_constant_and_gradients() {
        assert_eq!(difference_hash(&constant(9, 8, 100)).count_ones(), 0);
        // Strictly decreasing rightward -> every bit set.
        let data: Vec<u8> = (0..8)
            .flat_map(|_| (0..9).map(|c| (200 - 20 * c) as u8))
            .collect();
        let img = Image::new(9, 8, 1, data).unwrap();
        assert_eq!(difference_hash(&img).count_ones(), 64);
        // Strictly increasing -> none set.
        let data: Vec<u8> = (0..8)
            .flat_map(|_| (0..9).map(|c| (20 * c) as u8))
            .collect();
        let img = Image::new(9, 8, 1, data).unwrap();
        assert_eq!(difference_hash(&img).count_ones(), 0);
    }

    #[test]
    fn difference_hash_hand_pattern() {
        // 9x8 plane with one descent at column 3 of every row.
        let mut data = vec![50u8; 72];
        for r in 0..8 {
            for c in 0..=3 {
                data[r * 9 + c] = 90;
            }
        }
        let img = Image::new(9, 8, 1, data).unwrap();
        let digest = difference_hash(&img);
        for r in 0..8 {
            for c in 0..8 {
                // px[c] > px[c+1] only across the 90 -> 50 edge at c = 3
                let want = c == 3;
                assert_eq!(digest.bit(r * 8 + c), want, "row {r} col {c}");
            }
        }
    }

    #[test]
    fn perceptual_hash_constant_is_all_zeros() {
        assert_eq!(perceptual_hash(&constant(32, 32, 200)).count_ones(), 0);
        assert_eq!(perceptual_hash(&constant(32, 32, 0)).count_ones(), 0);
        assert_eq!(perceptual_hash(&constant(16, 16, 130)).count_ones(), 0);
    }

    #[test]
    fn perceptual_hash_brightness_offset_invariance() {
        let img = noise_image(32, 32, 2);
        let capped = Image::new(32, 32, 1, img.data().iter().map(|&v| v % 200).collect())
            .unwrap();
        let shifted = Image::new(
            32,
            32,
            1,
            capped.data().iter().map(|&v| v + 55).collect(),
        )
        .unwrap();
        assert_eq!(perceptual_hash(&capped), perceptual_hash(&shifted));
    }

    #[test]
    fn perceptual_hash_matches_reference_dct() {
        // Independent naive DCT evaluation (no separable pass, no
        // centering) as oracle, on an image whose low-frequency spectrum
        // is far from degenerate.
        let img = noise_image(32, 32, 9);
        let digest = perceptual_hash(&img);

        let plane: Vec<f64> = img.luma();
        let n = 32usize;
        let mut reference = vec![0.0; 64];
        for v in 0..8 {
            for u in 0..8 {
                let mut acc = 0.0;
                for y in 0..n {
                    for x in 0..n {
                        acc += plane[y * n + x]
                            * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64
                                / (2 * n) as f64)
                                .cos()
                            * (std::f64::consts::PI * (2 * y + 1) as f64 * v as f64
                                / (2 * n) as f64)
                                .cos();
                    }
                }
                let su = if u == 0 { (1.0 / 32.0f64).sqrt() } else { (2.0 / 32.0f64).sqrt() };
                let sv = if v == 0 { (1.0 / 32.0f64).sqrt() } else { (2.0 / 32.0f64).sqrt() };
                reference[v * 8 + u] = su * sv * acc;
            }
        }
        let median = lower_median(&reference[1..]);
        for i in 0..64 {
            let want = i != 0 && reference[i] > median;
            assert_eq!(digest.bit(i), want, "bit {i}");
        }
    }

    #[test]
    fn wavelet_hash_constant_and_halves() {
        assert_eq!(wavelet_hash(&constant(64, 64, 123)).count_ones(), 0);
        // Left half black, right half white: white cells exceed the lower
        // median (a black value), black cells do not -> 0x0f rows.
        let mut data = vec![0u8; 64 * 64];
        for r in 0..64 {
            for c in 32..64 {
                data[r * 64 + c] = 255;
            }
        }
        let img = Image::new(64, 64, 1, data).unwrap();
        assert_eq!(wavelet_hash(&img).to_hex(), "0f0f0f0f0f0f0f0f");
    }

    #[test]
    fn wavelet_hash_brightness_scale_invariance() {
        let img = noise_image(64, 64, 3);
        let capped = Image::new(
            64,
            64,
            1,
            img.data().iter().map(|&v| v % 120).collect(),
        )
        .unwrap();
        let doubled = Image::new(
            64,
            64,
            1,
            capped.data().iter().map(|&v| 2 * v).collect(),
        )
        .unwrap();
        assert_eq!(wavelet_hash(&capped), wavelet_hash(&doubled));
    }

    #[test]
    fn color_hash_constant_color_is_zero() {
        for rgb in [[255u8, 0, 0], [0, 255, 0], [40, 90, 200]] {
            let data: Vec<u8> = (0..64).flat_map(|_| rgb).collect();
            let img = Image::new(8, 8, 3, data).unwrap();
            let digest = color_hash(&img);
            assert_eq!(digest.len(), 48);
            assert_eq!(digest.count_ones(), 0, "rgb {rgb:?}");
        }
    }

    #[test]
    fn color_hash_value_rescale_keeps_h_and_s_sections() {
        // Structured colors, then scale V by 1/2 via halving RGB. H and S
        // are ratios so their sections are unchanged.
        let mut data = Vec::new();
        for i in 0..64u32 {
            let r = (40 + (i * 3) % 180) as u8;
            let g = (20 + (i * 7) % 200) as u8;
            let b = (60 + (i * 5) % 160) as u8;
            data.extend_from_slice(&[r, g, b]);
        }
        let img = Image::new(8, 8, 3, data.clone()).unwrap();
        let halved =
            Image::new(8, 8, 3, data.iter().map(|&v| v / 2).collect()).unwrap();
        let (d1, _) = color_hash_checked(&img);
        let (d2, _) = color_hash_checked(&halved);
        for i in 0..32 {
            assert_eq!(d1.bit(i), d2.bit(i), "H/S bit {i}");
        }
    }

    #[test]
    fn color_hash_grayscale_fallback_is_flagged() {
        let (digest, flagged) = color_hash_checked(&noise_image(8, 8, 4));
        assert!(flagged);
        assert_eq!(digest.len(), 48);
        // Replicated channels have no hue or saturation: those sections
        // are all zero, V carries the signal.
        for i in 0..32 {
            assert!(!digest.bit(i));
        }
    }

    #[test]
    fn hamming_axioms_and_mismatch() {
        let a = average_hash(&noise_image(16, 16, 5));
        let b = average_hash(&noise_image(16, 16, 6));
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &b).unwrap(), hamming(&b, &a).unwrap());
        let c = difference_hash(&noise_image(16, 16, 5));
        assert!(hamming(&a, &c).is_err());
    }

    #[test]
    fn hamming_complement_is_full_length() {
        let a = average_hash(&noise_image(16, 16, 7));
        let complement_bits: Vec<bool> = (0..64).map(|i| !a.bit(i)).collect();
        let b = HashDigest::from_bits(HashAlgorithm::Average, &complement_bits);
        assert_eq!(hamming(&a, &b).unwrap(), 64);
    }

    #[test]
    fn four_bit_hand_xor() {
        // 0b1010 vs 0b0110 -> 2 disagreements, checked through the packed
        // representation on the low nibble of a 64-bit digest.
        let mut bits_a = vec![false; 64];
        let mut bits_b = vec![false; 64];
        bits_a[0] = true;
        bits_a[2] = true;
        bits_b[1] = true;
        bits_b[2] = true;
        let a = HashDigest::from_bits(HashAlgorithm::Average, &bits_a);
        let b = HashDigest::from_bits(HashAlgorithm::Average, &bits_b);
        assert_eq!(hamming(&a, &b).unwrap(), 2);
    }

    #[test]
    fn golden_digests_are_stable() {
        let img = noise_image(40, 30, 8);
        assert_eq!(average_hash(&img).to_hex(), average_hash(&img).to_hex());
        // Frozen goldens: any change to resize/DCT/Haar arithmetic shows
        // up here.
        let golds = [
            (average_hash(&img).to_hex(), "9dc1e3c519dd2d25"),
            (difference_hash(&img).to_hex(), "8cb1b2648354578e"),
            (perceptual_hash(&img).to_hex(), "31ccb49c4dd26497"),
            (wavelet_hash(&img).to_hex(), "9dc1a3c519dd2f35"),
            (color_hash(&img).to_hex(), "97450000fd42"),
        ];
        for (got, want) in golds {
            assert_eq!(got, want);
        }
    }

    #[test]
    fn corpus_report_self_comparison_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            noise_image(16, 16, 10 + i)
                .write_pnm(&dir.path().join(format!("img{i}.pgm")))
                .unwrap();
        }
        let report = corpus_report(dir.path(), dir.path()).unwrap();
        assert_eq!(report.pairs.len(), 3);
        for pair in &report.pairs {
            for (_, d) in &pair.distances {
                assert_eq!(*d, 0);
            }
            assert_eq!(pair.rmse, Some(0.0));
        }
        for (_, stats) in &report.per_algorithm {
            assert_eq!(stats.mean, 0.0);
        }
    }

    #[test]
    fn corpus_report_lists_unmatched_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        noise_image(8, 8, 20).write_pnm(&a.path().join("shared.pgm")).unwrap();
        noise_image(8, 8, 21).write_pnm(&b.path().join("shared.pgm")).unwrap();
        noise_image(8, 8, 22).write_pnm(&a.path().join("only_a.pgm")).unwrap();
        noise_image(8, 8, 23).write_pnm(&b.path().join("only_b.pgm")).unwrap();
        let report = corpus_report(a.path(), b.path()).unwrap();
        assert_eq!(report.pairs.len(), 1);
        assert_eq!(report.unmatched_a, vec!["only_a.pgm"]);
        assert_eq!(report.unmatched_b, vec!["only_b.pgm"]);
    }

    #[test]
    fn single_pair_report_equals_direct_hamming() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let img_a = noise_image(24, 24, 30);
        let img_b = noise_image(24, 24, 31);
        img_a.write_pnm(&a.path().join("x.pgm")).unwrap();
        img_b.write_pnm(&b.path().join("x.pgm")).unwrap();
        let report = corpus_report(a.path(), b.path()).unwrap();
        let direct = hamming(&average_hash(&img_a), &average_hash(&img_b)).unwrap();
        let (_, got) = report.pairs[0]
            .distances
            .iter()
            .find(|(alg, _)| *alg == HashAlgorithm::Average)
            .unwrap();
        assert_eq!(*got, direct);
        let (_, stats) = report
            .per_algorithm
            .iter()
            .find(|(alg, _)| *alg == HashAlgorithm::Average)
            .unwrap();
        assert_eq!(stats.mean, direct as f64);
    }
}
