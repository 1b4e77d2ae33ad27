//! Dense float images plus the PPM / raw-depth frame formats.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Row-major interleaved float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize, c: usize) -> &mut f64 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Single channel `c` as its own image.
    pub fn channel(&self, c: usize) -> Image {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Image::from_data(self.width, self.height, 1, data)
    }

    /// Separable Gaussian blur with clamped borders; `sigma <= 0` is a copy.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = {
            let k: Vec<f64> = (-radius..=radius)
                .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
                .collect();
            let s: f64 = k.iter().sum();
            k.into_iter().map(|v| v / s).collect()
        };
        let (w, h, ch) = (self.width as isize, self.height as isize, self.channels);
        let mut tmp = Image::new(self.width, self.height, ch);
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        let xx = (x + k as isize - radius).clamp(0, w - 1);
                        acc += kv * self.at(xx as usize, y as usize, c);
                    }
                    *tmp.at_mut(x as usize, y as usize, c) = acc;
                }
            }
        }
        let mut out = Image::new(self.width, self.height, ch);
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        let yy = (y + k as isize - radius).clamp(0, h - 1);
                        acc += kv * tmp.at(x as usize, yy as usize, c);
                    }
                    *out.at_mut(x as usize, y as usize, c) = acc;
                }
            }
        }
        out
    }

    /// Adds seeded N(0, sigma²) noise and clamps to [0, 1].
    pub fn add_noise(&self, sigma: f64, seed: u64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        let data = self
            .data
            .iter()
            .map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        Image::from_data(self.width, self.height, self.channels, data)
    }

    /// Binary PPM (P6, maxval 255). Channels are clamped to [0, 1].
    pub fn to_ppm(&self) -> Vec<u8> {
        assert_eq!(self.channels, 3, "PPM needs an RGB image");
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Image> {
        let bad = |reason: &str| Error::Format {
            path: "<ppm>".into(),
            reason: reason.to_string(),
        };
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        pos += 1;
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("expected P6 with maxval 255"));
        }
        let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let body = bytes.get(pos..pos + w * h * 3).ok_or_else(|| bad("short body"))?;
        let data = body.iter().map(|b| *b as f64 / 255.0).collect();
        Ok(Image::from_data(w, h, 3, data))
    }

    /// Raw depth map: "DPTH", u32 width, u32 height, u32 reserved, then f32 LE.
    pub fn to_depth_raw(&self) -> Vec<u8> {
        assert_eq!(self.channels, 1, "depth map must be single channel");
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(b"DPTH");
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_depth_raw(bytes: &[u8]) -> Result<Image> {
        let bad = |reason: &str| Error::Format {
            path: "<depth>".into(),
            reason: reason.to_string(),
        };
        if bytes.len() < 16 || &bytes[..4] != b"DPTH" {
            return Err(bad("missing DPTH header"));
        }
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (w, h) = (u(4), u(8));
        if bytes.len() != 16 + 4 * w * h {
            return Err(bad("size does not match header"));
        }
        let data = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Image::from_data(w, h, 1, data))
    }
}

/// Writes `bytes` to `path` via a temporary sibling and a rename, so a
/// partially written file never appears under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_round_trip() {
        let mut img = Image::new(3, 2, 3);
        *img.at_mut(1, 0, 0) = 1.0;
        *img.at_mut(2, 1, 2) = 0.5;
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 18);
        let back = Image::from_ppm(&bytes).unwrap();
        assert_eq!(back.at(1, 0, 0), 1.0);
        assert!((back.at(2, 1, 2) - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn depth_raw_layout() {
        let img = Image::from_data(2, 2, 1, vec![1.0, 2.5, 0.0, 7.0]);
        let bytes = img.to_depth_raw();
        assert_eq!(&bytes[..4], b"DPTH");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 16);
        assert_eq!(Image::from_depth_raw(&bytes).unwrap(), img);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = Image::filled(9, 7, 3, 0.4);
        let b = img.gaussian_blur(1.3);
        assert!(b.data.iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert_eq!(img.gaussian_blur(0.0), img);
    }

    #[test]
    fn noise_is_seeded() {
        let img = Image::filled(8, 8, 3, 0.5);
        assert_eq!(img.add_noise(0.1, 3), img.add_noise(0.1, 3));
        assert_ne!(img.add_noise(0.1, 3), img.add_noise(0.1, 4));
        assert_eq!(img.add_noise(0.0, 3), img);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
