//! Training-time frame augmentation: random resized crop + horizontal flip.
//! Spectrograms are never augmented.

use crate::image::ImageBuf;
use crate::rng::Rng;
use rand::Rng as _;

/// A fully resolved augmentation: crop rectangle plus flip flag. Applying
/// the same params twice gives identical output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropParams {
    pub top: usize,
    pub left: usize,
    pub h: usize,
    pub w: usize,
    pub flip: bool,
}

impl CropParams {
    /// Whole image, no flip: applying this is the identity.
    pub fn identity(h: usize, w: usize) -> Self {
        CropParams { top: 0, left: 0, h, w, flip: false }
    }
}

/// Sample crop params: area fraction uniform in [0.5, 1], aspect jitter
/// uniform in [3/4, 4/3], flip with probability 0.5. Draw order is fixed
/// (area, aspect, top, left, flip) so streams are reproducible.
pub fn sample_augment_params(rng: &mut Rng, h: usize, w: usize) -> CropParams {
    let area_frac: f64 = rng.random_range(0.5..=1.0);
    let aspect: f64 = rng.random_range(0.75..=(4.0 / 3.0));
    let target = area_frac * (h * w) as f64;
    let ch = ((target / aspect).sqrt().round() as usize).clamp(1, h);
    let cw = ((target * aspect).sqrt().round() as usize).clamp(1, w);
    let top = if ch < h { rng.random_range(0..=(h - ch)) } else { 0 };
    let left = if cw < w { rng.random_range(0..=(w - cw)) } else { 0 };
    let flip = rng.random_bool(0.5);
    CropParams { top, left, h: ch, w: cw, flip }
}

/// Crop, bilinear-resize back to the frame size, then optionally flip.
pub fn apply_augment(frame: &ImageBuf, p: &CropParams) -> ImageBuf {
    let cropped = frame
        .crop(p.top, p.left, p.h, p.w)
        .expect("sampled crop params lie inside the frame");
    let resized = cropped.resize_bilinear(frame.h, frame.w);
    if p.flip {
        resized.flip_horizontal()
    } else {
        resized
    }
}

/// Sample-and-apply convenience used by the training loops.
pub fn augment_frame(frame: &ImageBuf, rng: &mut Rng) -> ImageBuf {
    let p = sample_augment_params(rng, frame.h, frame.w);
    apply_augment(frame, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn test_frame() -> ImageBuf {
        let mut img = ImageBuf::zeros(16, 16);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = ((i * 31 % 97) as f32) / 97.0;
        }
        img
    }

    #[test]
    fn full_crop_no_flip_is_identity() {
        let frame = test_frame();
        let out = apply_augment(&frame, &CropParams::identity(16, 16));
        assert_eq!(out.data, frame.data);
    }

    #[test]
    fn flip_twice_with_same_crop_restores_the_crop() {
        let frame = test_frame();
        let p = CropParams { top: 2, left: 3, h: 10, w: 11, flip: true };
        let once = apply_augment(&frame, &p);
        let twice = once.flip_horizontal();
        let unflipped = apply_augment(&frame, &CropParams { flip: false, ..p });
        assert_eq!(twice.data, unflipped.data);
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let frame = test_frame();
        let a = augment_frame(&frame, &mut rng_from_seed(3));
        let b = augment_frame(&frame, &mut rng_from_seed(3));
        assert_eq!(
            a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn sampled_crops_stay_in_bounds_and_area_range() {
        let mut rng = rng_from_seed(17);
        for _ in 0..200 {
            let p = sample_augment_params(&mut rng, 224, 224);
            assert!(p.top + p.h <= 224 && p.left + p.w <= 224);
            let frac = (p.h * p.w) as f64 / (224.0 * 224.0);
            // rounding of the sampled rectangle can nudge the fraction a bit
            assert!(frac > 0.33 && frac <= 1.01, "area fraction {frac}");
        }
    }
}
