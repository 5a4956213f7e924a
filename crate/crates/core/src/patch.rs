//! Patchify image stacks into token sequences, build fixed sin-cos position
//! embeddings with a clip (temporal) component, and plan random masking.

use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::rng::Rng;
use rand::seq::SliceRandom;

/// Flattened patch tokens for one sample: `l x d_patch` row-major, ordered
/// clip-major then row-major within each frame, with per-token coordinates.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub l: usize,
    pub d_patch: usize,
    pub tokens: Vec<f32>,
    /// (clip, patch row, patch col) per token.
    pub coords: Vec<(usize, usize, usize)>,
    pub patch: usize,
    pub image_size: usize,
    pub n_clips: usize,
}

/// Flatten a stack of frames into patch tokens. Frames keep their clip
/// order; patches are row-major within a frame; each token is the patch's
/// pixels in row-major HWC order (`d_patch = 3 * p^2`).
pub fn patchify(frames: &[ImageBuf], p: usize) -> Result<TokenSequence> {
    if frames.is_empty() {
        return Err(Error::Input("patchify: no frames".into()));
    }
    let (h, w) = (frames[0].h, frames[0].w);
    if h != w {
        return Err(Error::Config(format!("patchify expects square frames, got {h}x{w}")));
    }
    if p == 0 || h % p != 0 {
        return Err(Error::Config(format!("image size {h} not divisible by patch {p}")));
    }
    let grid = h / p;
    let d_patch = 3 * p * p;
    let n_clips = frames.len();
    let l = n_clips * grid * grid;
    let mut tokens = Vec::with_capacity(l * d_patch);
    let mut coords = Vec::with_capacity(l);
    for (k, frame) in frames.iter().enumerate() {
        if frame.h != h || frame.w != w {
            return Err(Error::Input(format!(
                "patchify: frame {k} is {}x{}, expected {h}x{w}",
                frame.h, frame.w
            )));
        }
        for pr in 0..grid {
            for pc in 0..grid {
                coords.push((k, pr, pc));
                for y in 0..p {
                    let row = pr * p + y;
                    let start = (row * w + pc * p) * 3;
                    tokens.extend_from_slice(&frame.data[start..start + 3 * p]);
                }
            }
        }
    }
    Ok(TokenSequence { l, d_patch, tokens, coords, patch: p, image_size: h, n_clips })
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(seq: &TokenSequence) -> Vec<ImageBuf> {
    unpatchify_tokens(&seq.tokens, seq.n_clips, seq.image_size, seq.patch)
}

/// Rebuild frames from any `l x d_patch` token matrix laid out like
/// [`patchify`] output (used for reconstructions too).
pub fn unpatchify_tokens(tokens: &[f32], n_clips: usize, image_size: usize, p: usize) -> Vec<ImageBuf> {
    let grid = image_size / p;
    let d_patch = 3 * p * p;
    let mut frames = vec![ImageBuf::zeros(image_size, image_size); n_clips];
    for k in 0..n_clips {
        for pr in 0..grid {
            for pc in 0..grid {
                let ti = k * grid * grid + pr * grid + pc;
                let tok = &tokens[ti * d_patch..(ti + 1) * d_patch];
                for y in 0..p {
                    let row = pr * p + y;
                    let start = (row * image_size + pc * p) * 3;
                    frames[k].data[start..start + 3 * p].copy_from_slice(&tok[y * 3 * p..(y + 1) * 3 * p]);
                }
            }
        }
    }
    frames
}

/// 1D sin-cos table: `n_pos x dim` with the first half sines and second
/// half cosines at geometric frequencies (base 10000).
pub fn sincos_1d(n_pos: usize, dim: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(Error::Config(format!("sincos dim {dim} must be even")));
    }
    let half = dim / 2;
    let mut out = vec![0.0f64; n_pos * dim];
    for pos in 0..n_pos {
        for i in 0..half {
            let omega = 1.0 / 10000f64.powf(i as f64 / half as f64);
            let v = pos as f64 * omega;
            out[pos * dim + i] = v.sin();
            out[pos * dim + half + i] = v.cos();
        }
    }
    Ok(out)
}

/// 2D spatial sin-cos table over a `grid_h x grid_w` grid: half of `dim`
/// encodes the row, half the column. Layout per token:
/// `[sin_row | cos_row | sin_col | cos_col]`, each `dim/4` wide.
pub fn spatial_sincos_2d(grid_h: usize, grid_w: usize, dim: usize) -> Result<Vec<f64>> {
    if dim % 4 != 0 {
        return Err(Error::Config(format!("2D sincos dim {dim} must be divisible by 4")));
    }
    let half = dim / 2;
    let rows = sincos_1d(grid_h, half)?;
    let cols = sincos_1d(grid_w, half)?;
    let mut out = vec![0.0f64; grid_h * grid_w * dim];
    for r in 0..grid_h {
        for c in 0..grid_w {
            let base = (r * grid_w + c) * dim;
            out[base..base + half].copy_from_slice(&rows[r * half..(r + 1) * half]);
            out[base + half..base + dim].copy_from_slice(&cols[c * half..(c + 1) * half]);
        }
    }
    Ok(out)
}

/// Full positional table for `n_clips` frames of `grid x grid` patches:
/// the 2D spatial embedding plus a 1D clip-index embedding added on top.
/// Rows are ordered like [`patchify`] tokens. Encoder and decoder call this
/// with the same geometry, so their tables agree by construction.
pub fn posembed_sincos(grid_h: usize, grid_w: usize, n_clips: usize, dim: usize) -> Result<Vec<f64>> {
    let spatial = spatial_sincos_2d(grid_h, grid_w, dim)?;
    let clip = sincos_1d(n_clips, dim)?;
    let per_frame = grid_h * grid_w;
    let mut out = vec![0.0f64; n_clips * per_frame * dim];
    for k in 0..n_clips {
        for t in 0..per_frame {
            let dst = ((k * per_frame) + t) * dim;
            for d in 0..dim {
                out[dst + d] = spatial[t * dim + d] + clip[k * dim + d];
            }
        }
    }
    Ok(out)
}

/// Random masking plan: a uniform shuffle of `0..l`; the first
/// `l - round(ratio * l)` shuffled indices are visible, the rest masked
/// (ties round toward masking).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub perm: Vec<usize>,
    pub n_visible: usize,
}

impl MaskPlan {
    pub fn visible(&self) -> &[usize] {
        &self.perm[..self.n_visible]
    }

    pub fn masked(&self) -> &[usize] {
        &self.perm[self.n_visible..]
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// All-visible plan (used at retrieval time, where nothing is masked).
    pub fn all_visible(l: usize) -> Self {
        MaskPlan { perm: (0..l).collect(), n_visible: l }
    }
}

pub fn random_mask(rng: &mut Rng, l: usize, ratio: f64) -> Result<MaskPlan> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("mask ratio must be in [0, 1), got {ratio}")));
    }
    let mut perm: Vec<usize> = (0..l).collect();
    perm.shuffle(rng);
    let n_masked = (ratio * l as f64).round() as usize;
    Ok(MaskPlan { perm, n_visible: l - n_masked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_frames(n: usize, size: usize, seed: u64) -> Vec<ImageBuf> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let mut f = ImageBuf::zeros(size, size);
                for v in f.data.iter_mut() {
                    *v = rng.random_range(0.0..1.0);
                }
                f
            })
            .collect()
    }

    #[test]
    fn token_counts_match_defaults() {
        // 8 clips of 224^2 at P=16: L = 8 * 196 = 1568, d_patch = 768
        let frames = vec![ImageBuf::zeros(224, 224); 8];
        let seq = patchify(&frames, 16).unwrap();
        assert_eq!(seq.l, 1568);
        assert_eq!(seq.d_patch, 768);

        // 2 clips of 32^2 at P=8: L = 32, d_patch = 192
        let frames = vec![ImageBuf::zeros(32, 32); 2];
        let seq = patchify(&frames, 8).unwrap();
        assert_eq!(seq.l, 32);
        assert_eq!(seq.d_patch, 192);
        assert_eq!(seq.coords[0], (0, 0, 0));
        assert_eq!(seq.coords[31], (1, 3, 3));
    }

    #[test]
    fn patchify_divisibility_error() {
        let frames = vec![ImageBuf::zeros(30, 30); 1];
        assert!(matches!(patchify(&frames, 16), Err(Error::Config(_))));
    }

    #[test]
    fn sincos_identities() {
        // For each (sin, cos) component pair: sin^2 + cos^2 == 1.
        let dim = 16;
        let table = spatial_sincos_2d(3, 4, dim).unwrap();
        let quarter = dim / 4;
        for tok in 0..12 {
            let row = &table[tok * dim..(tok + 1) * dim];
            for i in 0..quarter {
                let s2c2 = row[i] * row[i] + row[quarter + i] * row[quarter + i];
                assert!((s2c2 - 1.0).abs() < 1e-12);
                let s2c2 = row[2 * quarter + i] * row[2 * quarter + i] + row[3 * quarter + i] * row[3 * quarter + i];
                assert!((s2c2 - 1.0).abs() < 1e-12);
            }
        }

        // Position (0,0): all sine entries 0, all cosine entries 1, for both
        // the spatial table and the clip table.
        let first = &table[..dim];
        for i in 0..quarter {
            assert_eq!(first[i], 0.0);
            assert_eq!(first[quarter + i], 1.0);
            assert_eq!(first[2 * quarter + i], 0.0);
            assert_eq!(first[3 * quarter + i], 1.0);
        }
        let clip = sincos_1d(4, dim).unwrap();
        for i in 0..dim / 2 {
            assert_eq!(clip[i], 0.0);
            assert_eq!(clip[dim / 2 + i], 1.0);
        }
    }

    #[test]
    fn posembed_rows_pairwise_distinct_on_default_grid() {
        // 8 clips x 14 x 14 grid: all 1568 rows distinct (exhaustive via
        // exact bit hashing).
        let dim = 64;
        let table = posembed_sincos(14, 14, 8, dim).unwrap();
        let mut seen = std::collections::HashSet::new();
        for tok in 0..1568 {
            let row: Vec<u64> = table[tok * dim..(tok + 1) * dim].iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(row), "duplicate position embedding at token {tok}");
        }
    }

    #[test]
    fn posembed_identical_across_calls() {
        let a = posembed_sincos(4, 4, 2, 32).unwrap();
        let b = posembed_sincos(4, 4, 2, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_counts() {
        let plan = random_mask(&mut rng_from_seed(1), 1568, 0.5).unwrap();
        assert_eq!(plan.n_visible, 784);
        assert_eq!(plan.masked().len(), 784);

        let plan = random_mask(&mut rng_from_seed(1), 10, 0.0).unwrap();
        assert_eq!(plan.n_visible, 10);

        // ties round toward masking: L=3, ratio=0.5 -> 2 masked
        let plan = random_mask(&mut rng_from_seed(1), 3, 0.5).unwrap();
        assert_eq!(plan.n_visible, 1);
    }

    #[test]
    fn mask_ratio_validation() {
        assert!(matches!(random_mask(&mut rng_from_seed(1), 8, 1.0), Err(Error::Config(_))));
        assert!(matches!(random_mask(&mut rng_from_seed(1), 8, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn mask_partitions_and_is_seed_deterministic() {
        let a = random_mask(&mut rng_from_seed(5), 32, 0.5).unwrap();
        let b = random_mask(&mut rng_from_seed(5), 32, 0.5).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.visible().iter().chain(a.masked()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn each_index_visible_about_half_the_time() {
        // 10,000 plans at L=32, ratio=0.5: per-index visibility within
        // 0.5 +/- 3 sigma, sigma = sqrt(0.25 / 10000) = 0.005.
        let mut rng = rng_from_seed(123);
        let mut counts = [0u32; 32];
        for _ in 0..10_000 {
            let plan = random_mask(&mut rng, 32, 0.5).unwrap();
            for &i in plan.visible() {
                counts[i] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.5).abs() < 0.015, "index {i} visible fraction {f}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn patchify_roundtrip_exact(seed in 0u64..1000, n_clips in 1usize..4) {
            let frames = random_frames(n_clips, 16, seed);
            let seq = patchify(&frames, 4).unwrap();
            let back = unpatchify(&seq);
            prop_assert_eq!(frames.len(), back.len());
            for (a, b) in frames.iter().zip(&back) {
                prop_assert_eq!(&a.data, &b.data);
            }
        }
    }
}
