//! Coefficient matrices and Eq.-style fusion of a frame with a mel image:
//! `mixed = M .* video + (1 - M) .* audio`, with M built one of three ways
//! (disjoint CutMix boxes, per-pixel Bernoulli selection, or a global
//! Beta-sampled blend).

use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::rng::Rng;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

/// H x W blending weights in [0, 1]; 1 selects the video pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl CoefficientMatrix {
    pub fn filled(h: usize, w: usize, v: f32) -> Self {
        CoefficientMatrix { h, w, data: vec![v; h * w] }
    }
}

/// Which coefficient-matrix construction to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixerKind {
    /// Up to `s` disjoint axis-aligned boxes of ones.
    CutMix { s: usize },
    /// Independent per-pixel Bernoulli(p) ones.
    PixelMixup { p: f64 },
    /// One global lambda ~ Beta(alpha, alpha).
    Mixup { alpha: f64 },
}

impl MixerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MixerKind::CutMix { .. } => Ok(()),
            MixerKind::PixelMixup { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("pixel mixup p must be in [0,1], got {p}")))
                }
            }
            MixerKind::Mixup { alpha } => {
                if alpha > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("mixup alpha must be > 0, got {alpha}")))
                }
            }
        }
    }
}

/// One accepted CutMix box: top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CutBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn intersects(&self, other: &CutBox) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

/// How one coefficient matrix was produced; stored with every mixed image so
/// experiments can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixProvenance {
    pub video_id: u64,
    pub clip_index: usize,
    pub mixer: MixerKind,
    pub seed: u64,
    /// Accepted boxes (CutMix only; may be fewer than requested).
    pub boxes: Vec<CutBox>,
    /// Sampled blend (Mixup only).
    pub lambda: Option<f32>,
}

/// A fused frame/mel pair plus its provenance.
#[derive(Debug, Clone)]
pub struct MixedImage {
    pub image: ImageBuf,
    pub provenance: MixProvenance,
}

const CUTMIX_RETRY_CAP: usize = 100;

/// Build a mask of up to `s` disjoint boxes of ones. Box sides are uniform
/// in [0.1, 0.5] of the image sides; overlap is resolved by rejection with a
/// 100-retry cap per box, so fewer than `s` boxes may be placed (the
/// accepted set is returned for provenance).
pub fn make_cutmix_mask(rng: &mut Rng, h: usize, w: usize, s: usize) -> (CoefficientMatrix, Vec<CutBox>) {
    let mut boxes: Vec<CutBox> = Vec::with_capacity(s);
    let side = |rng: &mut Rng, full: usize| -> usize {
        let lo = ((full as f64) * 0.1).max(1.0) as usize;
        let hi = ((full as f64) * 0.5).max(1.0) as usize;
        rng.random_range(lo..=hi)
    };
    'outer: for _ in 0..s {
        for _ in 0..CUTMIX_RETRY_CAP {
            let bw = side(rng, w);
            let bh = side(rng, h);
            let bx = rng.random_range(0..=(w - bw));
            let by = rng.random_range(0..=(h - bh));
            let cand = CutBox { x: bx, y: by, w: bw, h: bh };
            if boxes.iter().all(|b| !b.intersects(&cand)) {
                boxes.push(cand);
                continue 'outer;
            }
        }
        break; // cap reached, keep what we have
    }
    (cutmix_mask_from_boxes(h, w, &boxes), boxes)
}

/// Rasterize a set of boxes into a binary mask (1 inside any box).
pub fn cutmix_mask_from_boxes(h: usize, w: usize, boxes: &[CutBox]) -> CoefficientMatrix {
    let mut m = CoefficientMatrix::filled(h, w, 0.0);
    for b in boxes {
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                m.data[y * w + x] = 1.0;
            }
        }
    }
    m
}

/// Length H*W vector of independent Bernoulli(p) draws, reshaped row-major.
pub fn make_pixel_mixup_mask(rng: &mut Rng, h: usize, w: usize, p: f64) -> Result<CoefficientMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("pixel mixup p must be in [0,1], got {p}")));
    }
    let data = (0..h * w)
        .map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 })
        .collect();
    Ok(CoefficientMatrix { h, w, data })
}

/// Constant matrix filled with lambda ~ Beta(alpha, alpha), sampled via two
/// Gamma(alpha, 1) draws.
pub fn make_mixup_mask(rng: &mut Rng, h: usize, w: usize, alpha: f64) -> Result<(CoefficientMatrix, f32)> {
    let lambda = sample_beta(rng, alpha)? as f32;
    Ok((CoefficientMatrix::filled(h, w, lambda), lambda))
}

pub fn sample_beta(rng: &mut Rng, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("beta alpha must be > 0, got {alpha}")));
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::Config(format!("gamma({alpha}): {e}")))?;
    let g1 = gamma.sample(rng);
    let g2 = gamma.sample(rng);
    Ok(g1 / (g1 + g2))
}

/// `mixed = M .* video + (1 - M) .* audio`, the same M applied to each of
/// the 3 channels.
pub fn fuse(video: &ImageBuf, audio: &ImageBuf, m: &CoefficientMatrix) -> Result<ImageBuf> {
    if video.h != audio.h || video.w != audio.w || video.h != m.h || video.w != m.w {
        return Err(Error::Input(format!(
            "fuse: video {}x{}, audio {}x{}, M {}x{}",
            video.h, video.w, audio.h, audio.w, m.h, m.w
        )));
    }
    let mut out = ImageBuf::zeros(video.h, video.w);
    for (i, &coef) in m.data.iter().enumerate() {
        for c in 0..3 {
            out.data[i * 3 + c] = coef * video.data[i * 3 + c] + (1.0 - coef) * audio.data[i * 3 + c];
        }
    }
    Ok(out)
}

/// Draw a fresh mask for one clip and fuse. The per-clip seed is recorded in
/// the provenance so any mixture can be reproduced in isolation.
pub fn mix_clip(
    video: &ImageBuf,
    audio: &ImageBuf,
    kind: MixerKind,
    video_id: u64,
    clip_index: usize,
    seed: u64,
) -> Result<MixedImage> {
    kind.validate()?;
    let mut rng = crate::rng::rng_from_seed(seed);
    let (mask, boxes, lambda) = match kind {
        MixerKind::CutMix { s } => {
            let (m, b) = make_cutmix_mask(&mut rng, video.h, video.w, s);
            (m, b, None)
        }
        MixerKind::PixelMixup { p } => (make_pixel_mixup_mask(&mut rng, video.h, video.w, p)?, Vec::new(), None),
        MixerKind::Mixup { alpha } => {
            let (m, l) = make_mixup_mask(&mut rng, video.h, video.w, alpha)?;
            (m, Vec::new(), Some(l))
        }
    };
    let image = fuse(video, audio, &mask)?;
    Ok(MixedImage {
        image,
        provenance: MixProvenance { video_id, clip_index, mixer: kind, seed, boxes, lambda },
    })
}
