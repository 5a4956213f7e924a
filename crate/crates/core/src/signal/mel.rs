//! Waveform to image-like mel spectrogram.
//!
//! Pipeline: periodic Hann STFT (no padding, frames fully inside the
//! waveform) -> magnitude -> HTK mel filterbank -> log with floor 1e-10 ->
//! per-image min-max normalization -> bilinear resize to a square image ->
//! channel replication.

use crate::error::{Error, Result};
use crate::image::{resize_bilinear_gray, ImageBuf};
use rustfft::{num_complex::Complex, FftPlanner};

/// Spectrogram parameters. Defaults: 16 kHz, 25 ms Hann window, 10 ms shift,
/// 128 mel bands, 224x224 output.
#[derive(Debug, Clone, Copy)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub image_size: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig { sample_rate: 16_000, win_ms: 25.0, hop_ms: 10.0, n_mels: 128, image_size: 224 }
    }
}

impl MelConfig {
    pub fn win_len(&self) -> usize {
        (self.sample_rate as f64 * self.win_ms / 1000.0).round() as usize
    }
    pub fn hop_len(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }
    pub fn n_fft(&self) -> usize {
        self.win_len().next_power_of_two()
    }
}

/// A mel spectrogram rendered as a 3-channel image. All channels are exact
/// copies; values are min-max normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MelImage {
    pub image: ImageBuf,
}

impl MelImage {
    fn from_gray(h: usize, w: usize, gray: &[f32]) -> Self {
        let mut image = ImageBuf::zeros(h, w);
        for (i, &v) in gray.iter().enumerate() {
            image.data[i * 3] = v;
            image.data[i * 3 + 1] = v;
            image.data[i * 3 + 2] = v;
        }
        MelImage { image }
    }
}

/// mel(f) = 2595 * log10(1 + f / 700)  (HTK).
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// STFT magnitude: `n_frames x n_bins` row-major, periodic Hann window,
/// zero-padded to `n_fft`, frames fully inside the waveform.
pub fn stft_magnitude(waveform: &[f32], win: usize, hop: usize, n_fft: usize) -> Result<(usize, usize, Vec<f32>)> {
    if waveform.len() < win {
        return Err(Error::Input(format!(
            "waveform of {} samples is shorter than one {win}-sample window",
            waveform.len()
        )));
    }
    let n_frames = 1 + (waveform.len() - win) / hop;
    let n_bins = n_fft / 2 + 1;
    let window: Vec<f32> = (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos() as f32)
        .collect();
    let fft = FftPlanner::<f32>::new().plan_fft_forward(n_fft);
    let mut mag = vec![0.0f32; n_frames * n_bins];
    let mut buf: Vec<Complex<f32>> = vec![Complex::new(0.0, 0.0); n_fft];
    for fi in 0..n_frames {
        let start = fi * hop;
        for i in 0..n_fft {
            let v = if i < win { waveform[start + i] * window[i] } else { 0.0 };
            buf[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (b, out) in mag[fi * n_bins..(fi + 1) * n_bins].iter_mut().enumerate() {
            *out = buf[b].norm();
        }
    }
    Ok((n_frames, n_bins, mag))
}

/// Triangular HTK mel filterbank over FFT bin frequencies, plus the n_mels+2
/// corner frequencies in Hz (filter `m` peaks at `points[m + 1]`).
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> (Vec<f32>, Vec<f64>) {
    let n_bins = n_fft / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = vec![0.0f32; n_mels * n_bins];
    for m in 0..n_mels {
        let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f >= l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f <= r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[m * n_bins + b] = w as f32;
        }
    }
    (fb, points)
}

/// Log-mel energies before the image resize: `(n_mels, n_frames, row-major
/// n_mels x n_frames)`.
pub fn log_mel_energies(waveform: &[f32], cfg: &MelConfig) -> Result<(usize, usize, Vec<f32>)> {
    let (n_frames, n_bins, mag) = stft_magnitude(waveform, cfg.win_len(), cfg.hop_len(), cfg.n_fft())?;
    let (fb, _) = mel_filterbank(cfg.n_mels, cfg.n_fft(), cfg.sample_rate, 0.0, cfg.sample_rate as f64 / 2.0);
    let mut out = vec![0.0f32; cfg.n_mels * n_frames];
    for m in 0..cfg.n_mels {
        let filt = &fb[m * n_bins..(m + 1) * n_bins];
        for t in 0..n_frames {
            let frame = &mag[t * n_bins..(t + 1) * n_bins];
            let e: f32 = filt.iter().zip(frame).map(|(&w, &v)| w * v).sum();
            out[m * n_frames + t] = e.max(1e-10).ln();
        }
    }
    Ok((cfg.n_mels, n_frames, out))
}

/// Full mel-image pipeline. A constant spectrogram (e.g. an all-zero
/// waveform) normalizes to 0 everywhere.
pub fn compute_mel(waveform: &[f32], cfg: &MelConfig) -> Result<MelImage> {
    let (n_mels, n_frames, logmel) = log_mel_energies(waveform, cfg)?;
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in &logmel {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let norm: Vec<f32> = if hi > lo {
        logmel.iter().map(|&v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; logmel.len()]
    };
    let gray = resize_bilinear_gray(&norm, n_mels, n_frames, cfg.image_size, cfg.image_size);
    Ok(MelImage::from_gray(cfg.image_size, cfg.image_size, &gray))
}
