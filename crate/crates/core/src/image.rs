//! Small image utilities: interleaved HWC float images, bilinear resampling,
//! HSV conversion, and P6 portable-pixmap output.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// H x W x 3 image, row-major with interleaved channels, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl ImageBuf {
    pub fn zeros(h: usize, w: usize) -> Self {
        ImageBuf { h, w, data: vec![0.0; h * w * 3] }
    }

    pub fn from_data(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w * 3 {
            return Err(Error::Dim(format!(
                "image data length {} does not match {h}x{w}x3",
                data.len()
            )));
        }
        Ok(ImageBuf { h, w, data })
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Horizontal mirror.
    pub fn flip_horizontal(&self) -> ImageBuf {
        let mut out = ImageBuf::zeros(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                out.set_pixel(y, x, self.pixel(y, self.w - 1 - x));
            }
        }
        out
    }

    /// Crop a rectangle (top, left, height, width); must lie inside.
    pub fn crop(&self, top: usize, left: usize, ch: usize, cw: usize) -> Result<ImageBuf> {
        if top + ch > self.h || left + cw > self.w || ch == 0 || cw == 0 {
            return Err(Error::Input(format!(
                "crop {top},{left} {ch}x{cw} outside {}x{}",
                self.h, self.w
            )));
        }
        let mut out = ImageBuf::zeros(ch, cw);
        for y in 0..ch {
            for x in 0..cw {
                out.set_pixel(y, x, self.pixel(top + y, left + x));
            }
        }
        Ok(out)
    }

    /// Bilinear resize with half-pixel centers; resizing to the same size is
    /// an exact identity.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> ImageBuf {
        let mut out = ImageBuf::zeros(out_h, out_w);
        let sy = self.h as f32 / out_h as f32;
        let sx = self.w as f32 / out_w as f32;
        for y in 0..out_h {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.h - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.h - 1);
            let wy = fy - y0 as f32;
            for x in 0..out_w {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.w - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.w - 1);
                let wx = fx - x0 as f32;
                let p00 = self.pixel(y0, x0);
                let p01 = self.pixel(y0, x1);
                let p10 = self.pixel(y1, x0);
                let p11 = self.pixel(y1, x1);
                let mut rgb = [0.0f32; 3];
                for c in 0..3 {
                    let top = p00[c] * (1.0 - wx) + p01[c] * wx;
                    let bot = p10[c] * (1.0 - wx) + p11[c] * wx;
                    rgb[c] = top * (1.0 - wy) + bot * wy;
                }
                out.set_pixel(y, x, rgb);
            }
        }
        out
    }

    /// Write as binary portable pixmap (P6), clamping to [0, 1].
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P6\n{} {}\n255\n", self.w, self.h)?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        f.write_all(&bytes)?;
        Ok(())
    }
}

/// Resize a single-channel row-major grid (used for mel spectrograms).
pub fn resize_bilinear_gray(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    assert_eq!(src.len(), h * w);
    let mut out = vec![0.0f32; out_h * out_w];
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    for y in 0..out_h {
        let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f32;
        for x in 0..out_w {
            let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f32;
            let top = src[y0 * w + x0] * (1.0 - wx) + src[y0 * w + x1] * wx;
            let bot = src[y1 * w + x0] * (1.0 - wx) + src[y1 * w + x1] * wx;
            out[y * out_w + x] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// HSV (h wraps in [0,1), s and v in [0,1]) to RGB.
pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = (h.rem_euclid(1.0)) * 6.0;
    let i = h.floor() as i32 % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_same_size_is_identity() {
        let mut img = ImageBuf::zeros(7, 5);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f32 * 0.37).sin() * 0.5 + 0.5;
        }
        let out = img.resize_bilinear(7, 5);
        assert_eq!(img.data, out.data);
    }

    #[test]
    fn flip_is_involution() {
        let mut img = ImageBuf::zeros(4, 6);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = i as f32;
        }
        assert_eq!(img.flip_horizontal().flip_horizontal().data, img.data);
    }

    #[test]
    fn ppm_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ppm");
        let img = ImageBuf::zeros(2, 3);
        img.write_ppm(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(bytes.len(), b"P6\n3 2\n255\n".len() + 2 * 3 * 3);
    }

    #[test]
    fn hsv_primary_colors() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        let g = hsv_to_rgb(1.0 / 3.0, 1.0, 1.0);
        assert!((g[1] - 1.0).abs() < 1e-6 && g[0] < 1e-6);
    }
}
