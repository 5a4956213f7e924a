//! Turn raw video/audio into the pipeline's image-like inputs: clip
//! partitioning, mel spectrograms, augmentation, and synthetic paired data.

pub mod augment;
pub mod mel;
pub mod records;
pub mod synth;

pub use augment::{apply_augment, augment_frame, sample_augment_params, CropParams};
pub use mel::{compute_mel, log_mel_energies, stft_magnitude, MelConfig, MelImage};
pub use records::{list_records, read_record, write_record, VideoRecord};
pub use synth::{synth_pair, SyntheticSpec};

use crate::error::{Error, Result};
use crate::image::ImageBuf;

/// Per-clip raw material: the mid-frame image and the aligned waveform slice.
#[derive(Debug, Clone)]
pub struct ClipPair {
    pub clip_index: usize,
    /// H x W x 3 frame in [0, 1].
    pub frame: ImageBuf,
    /// 16-bit-range samples, `round(clip_seconds * sample_rate)` of them.
    pub waveform: Vec<f32>,
}

/// Split a duration into `n_clips` equal clips and return their temporal
/// midpoints: clip k covers `[k*t, (k+1)*t)` with `t = duration / n_clips`,
/// midpoint `(k + 0.5) * t`.
pub fn partition_clips(duration_s: f64, n_clips: usize) -> Result<Vec<f64>> {
    if !(duration_s > 0.0) {
        return Err(Error::Input(format!("duration must be positive, got {duration_s}")));
    }
    if n_clips == 0 {
        return Err(Error::Input("n_clips must be >= 1".into()));
    }
    let t = duration_s / n_clips as f64;
    Ok((0..n_clips).map(|k| (k as f64 + 0.5) * t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn partition_examples() {
        let mids = partition_clips(60.0, 8).unwrap();
        let expect: Vec<f64> = (0..8).map(|k| (k as f64 + 0.5) * 7.5).collect();
        assert_eq!(mids, expect);
        assert_eq!(mids[0], 3.75);
        assert_eq!(mids[7], 56.25);

        assert_eq!(partition_clips(10.0, 1).unwrap(), vec![5.0]);

        let mids = partition_clips(10.0, 8).unwrap();
        for (k, m) in mids.iter().enumerate() {
            assert!((m - (k as f64 + 0.5) * 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_rejects_bad_input() {
        assert!(matches!(partition_clips(0.0, 4), Err(Error::Input(_))));
        assert!(matches!(partition_clips(-3.0, 4), Err(Error::Input(_))));
        assert!(matches!(partition_clips(10.0, 0), Err(Error::Input(_))));
    }

    #[test]
    fn stft_frame_count_for_default_clip() {
        // 2.6 s at 16 kHz, 400-sample window, 160 hop, no padding:
        // 1 + floor((41600 - 400) / 160) = 258 frames.
        let wf = vec![0.0f32; 41_600];
        let (frames, bins, _) = stft_magnitude(&wf, 400, 160, 512).unwrap();
        assert_eq!(frames, 258);
        assert_eq!(bins, 257);
    }

    #[test]
    fn short_waveform_is_input_error() {
        let wf = vec![0.0f32; 399];
        assert!(matches!(stft_magnitude(&wf, 400, 160, 512), Err(Error::Input(_))));
        let cfg = MelConfig::default();
        assert!(matches!(compute_mel(&wf, &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn zero_waveform_normalizes_to_zero() {
        let cfg = MelConfig { image_size: 32, ..Default::default() };
        let mel = compute_mel(&vec![0.0f32; 41_600], &cfg).unwrap();
        assert!(mel.image.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_440_peaks_at_analytic_mel_bin() {
        let cfg = MelConfig::default();
        let sr = cfg.sample_rate as f64;
        let wf: Vec<f32> = (0..41_600)
            .map(|i| (std::f64::consts::TAU * 440.0 * i as f64 / sr).sin() as f32)
            .collect();
        let (n_mels, n_frames, logmel) = log_mel_energies(&wf, &cfg).unwrap();
        // argmax over mel bins of peak energy across frames
        let peak_of = |m: usize| {
            logmel[m * n_frames..(m + 1) * n_frames]
                .iter()
                .copied()
                .fold(f32::NEG_INFINITY, f32::max)
        };
        let argmax = (0..n_mels)
            .max_by(|&a, &b| peak_of(a).partial_cmp(&peak_of(b)).unwrap())
            .unwrap();
        // independent oracle: filter centers straight from the mel formula;
        // filter m peaks at point m+1 of n_mels+2 equally spaced mel points
        let mel_of = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let hz_of = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let top = mel_of(sr / 2.0);
        let center = |m: usize| hz_of(top * (m as f64 + 1.0) / (cfg.n_mels + 1) as f64);
        let expected = (0..cfg.n_mels)
            .min_by(|&a, &b| {
                (center(a) - 440.0)
                    .abs()
                    .partial_cmp(&(center(b) - 440.0).abs())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(argmax, expected, "440 Hz landed in mel bin {argmax}, analytic center bin {expected}");
    }

    #[test]
    fn stft_energy_grows_linearly_with_duration() {
        let sr = 16_000usize;
        let energy = |secs: usize| {
            let wf: Vec<f32> = (0..secs * sr)
                .map(|i| (std::f64::consts::TAU * 440.0 * i as f64 / sr as f64).sin() as f32)
                .collect();
            let (nf, nb, mag) = stft_magnitude(&wf, 400, 160, 512).unwrap();
            let _ = nf;
            mag.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / nb as f64
        };
        let e1 = energy(1);
        for d in 2..=5 {
            let ratio = energy(d) / e1;
            assert!(
                (ratio / d as f64 - 1.0).abs() < 0.02,
                "duration {d}: energy ratio {ratio}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn mel_image_channels_equal_and_unit_range(seed in 0u64..1000) {
            let mut rng = crate::rng::rng_from_seed(seed);
            use rand::Rng as _;
            let wf: Vec<f32> = (0..1600).map(|_| rng.random_range(-30000.0f32..30000.0)).collect();
            let cfg = MelConfig { image_size: 16, ..Default::default() };
            let mel = compute_mel(&wf, &cfg).unwrap();
            for px in mel.image.data.chunks(3) {
                prop_assert_eq!(px[0], px[1]);
                prop_assert_eq!(px[1], px[2]);
                prop_assert!((0.0..=1.0).contains(&px[0]));
            }
            // deterministic
            let again = compute_mel(&wf, &cfg).unwrap();
            prop_assert_eq!(mel.image.data, again.image.data);
        }
    }
}
