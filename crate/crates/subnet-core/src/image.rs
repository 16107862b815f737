//! 8-bit images, PGM/PPM (P5/P6) io, grayscale conversion, exact
//! area-average resizing, and HSV decomposition — the substrate for the
//! perceptual hashes.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::config("images must have 1 or 3 channels"));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "image {width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Luma plane (0.299 R + 0.587 G + 0.114 B), row-major.
    pub fn luma(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        match self.channels {
            1 => out.extend(self.data.iter().map(|&v| v as f64)),
            _ => {
                for px in self.data.chunks_exact(3) {
                    out.push(0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64);
                }
            }
        }
        out
    }

    /// Replicate a grayscale image into 3 channels; 3-channel images are
    /// returned unchanged.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width * self.height * 3);
        for &v in &self.data {
            data.extend_from_slice(&[v, v, v]);
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Hue/saturation/value planes in [0,1], row-major.
    pub fn hsv(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let rgb = self.to_rgb();
        let n = rgb.width * rgb.height;
        let mut h = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for px in rgb.data.chunks_exact(3) {
            let (r, g, b) = (
                px[0] as f64 / 255.0,
                px[1] as f64 / 255.0,
                px[2] as f64 / 255.0,
            );
            let max = r.max(g).max(b);
            let min = r.min(g).min(b);
            let delta = max - min;
            let hue = if delta == 0.0 {
                0.0
            } else if max == r {
                (((g - b) / delta).rem_euclid(6.0)) / 6.0
            } else if max == g {
                ((b - r) / delta + 2.0) / 6.0
            } else {
                ((r - g) / delta + 4.0) / 6.0
            };
            h.push(hue);
            s.push(if max == 0.0 { 0.0 } else { delta / max });
            v.push(max);
        }
        (h, s, v)
    }

    pub fn read_pnm(path: &Path) -> Result<Image> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        parse_pnm(&bytes)
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = Vec::with_capacity(self.data.len() + 32);
        out.extend_from_slice(format!("{magic}\n{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend_from_slice(&self.data);
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }
}

fn parse_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and '#' comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated pnm header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(bytes)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported pnm magic {other:?}"))),
    };
    let width: usize = token(bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("bad width: {e}")))?;
    let height: usize = token(bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("bad height: {e}")))?;
    let maxval: usize = token(bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("bad maxval: {e}")))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates header and raster.
    pos += 1;
    let need = width * height * channels;
    if bytes.len() < pos + need {
        return Err(Error::Format(format!(
            "raster truncated: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    Image::new(width, height, channels, bytes[pos..pos + need].to_vec())
}

/// Exact box-filter downscale/upscale of a row-major plane: every output
/// cell is the area-weighted mean of the source pixels it covers. Pure
/// f64 arithmetic, so results are bit-stable across platforms.
pub fn resize_area(plane: &[f64], src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Vec<f64> {
    assert_eq!(plane.len(), src_w * src_h);
    let mut out = Vec::with_capacity(dst_w * dst_h);
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    for oy in 0..dst_h {
        let y0 = oy as f64 * sy;
        let y1 = (oy + 1) as f64 * sy;
        for ox in 0..dst_w {
            let x0 = ox as f64 * sx;
            let x1 = (ox + 1) as f64 * sx;
            let mut acc = 0.0;
            let mut area = 0.0;
            let iy0 = y0.floor() as usize;
            let iy1 = (y1.ceil() as usize).min(src_h);
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(src_w);
            for py in iy0..iy1 {
                let oy_overlap = (py as f64 + 1.0).min(y1) - (py as f64).max(y0);
                if oy_overlap <= 0.0 {
                    continue;
                }
                for px in ix0..ix1 {
                    let ox_overlap = (px as f64 + 1.0).min(x1) - (px as f64).max(x0);
                    if ox_overlap <= 0.0 {
                        continue;
                    }
                    let w = ox_overlap * oy_overlap;
                    acc += w * plane[py * src_w + px];
                    area += w;
                }
            }
            out.push(acc / area);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions_and_channels() {
        assert!(Image::new(0, 4, 1, vec![]).is_err());
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0; 3]).is_err());
    }

    #[test]
    fn luma_weights() {
        let img = Image::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        assert!((img.luma()[0] - 0.299 * 255.0).abs() < 1e-12);
        let gray = Image::new(1, 1, 1, vec![100]).unwrap();
        assert_eq!(gray.luma()[0], 100.0);
    }

    #[test]
    fn hsv_of_primaries() {
        let img = Image::new(3, 1, 3, vec![255, 0, 0, 0, 255, 0, 0, 0, 255]).unwrap();
        let (h, s, v) = img.hsv();
        assert_eq!(h[0], 0.0);
        assert!((h[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((h[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!(s.iter().all(|&x| x == 1.0));
        assert!(v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn resize_area_preserves_block_means() {
        // 4x4 plane downscaled 2x: each output is the mean of a 2x2 block.
        let plane: Vec<f64> = (0..16).map(f64::from).collect();
        let out = resize_area(&plane, 4, 4, 2, 2);
        assert_eq!(out, vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn resize_area_handles_non_integer_ratios() {
        // 3 -> 2: cells cover 1.5 source pixels; overall mean is conserved.
        let plane = vec![0.0, 3.0, 6.0];
        let out = resize_area(&plane, 3, 1, 2, 1);
        assert!((out[0] - 1.0).abs() < 1e-12); // (0*1 + 3*0.5) / 1.5
        assert!((out[1] - 5.0).abs() < 1e-12); // (3*0.5 + 6*1) / 1.5
        let src_mean = 3.0;
        let dst_mean = (out[0] + out[1]) / 2.0;
        assert!((src_mean - dst_mean).abs() < 1e-12);
    }

    #[test]
    fn pnm_round_trip_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Image::new(3, 2, 1, vec![0, 64, 128, 192, 255, 10]).unwrap();
        let p = dir.path().join("g.pgm");
        gray.write_pnm(&p).unwrap();
        assert_eq!(Image::read_pnm(&p).unwrap(), gray);

        let rgb = Image::new(2, 2, 3, (0..12).collect()).unwrap();
        let p = dir.path().join("c.ppm");
        rgb.write_pnm(&p).unwrap();
        assert_eq!(Image::read_pnm(&p).unwrap(), rgb);

        // Comment-laden header parses too.
        let with_comment = b"P5\n# a comment\n2 1\n# another\n255\n\x01\x02";
        let parsed = parse_pnm(with_comment).unwrap();
        assert_eq!(parsed.data(), &[1, 2]);
    }

    #[test]
    fn pnm_truncated_raster_errors() {
        let bad = b"P5\n4 4\n255\n\x00\x01";
        assert!(parse_pnm(bad).is_err());
    }
}
