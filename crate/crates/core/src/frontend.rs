//! STFT analysis and assembly of the network input tensor.
//!
//! Geometry is fixed: 16 kHz input, 512-sample periodic Hann frames, 160-sample
//! hop (100 frames per second), and bins 4..=256 (125 Hz to 8 kHz) retained.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::numcore::Tensor;

pub const SAMPLE_RATE: f64 = 16_000.0;
pub const FRAME_LEN: usize = 512;
pub const HOP: usize = 160;
pub const BIN_LO: usize = 4;
pub const BIN_HI: usize = 256;
pub const N_BINS: usize = BIN_HI - BIN_LO + 1;
pub const FRAME_RATE: f64 = SAMPLE_RATE / HOP as f64;
pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FrontendError {
    #[error("signal of {0} samples is shorter than one {FRAME_LEN}-sample frame")]
    TooShort(usize),
    #[error("channels have unequal lengths")]
    RaggedChannels,
    #[error("expected 2 microphones, got {0}")]
    MicCount(usize),
}

/// Number of STFT frames for `n` samples, `None` when `n < FRAME_LEN`.
pub fn frame_count(n: usize) -> Option<usize> {
    (n >= FRAME_LEN).then(|| 1 + (n - FRAME_LEN) / HOP)
}

/// Centre frequency of FFT bin `k`.
pub fn bin_frequency(k: usize) -> f64 {
    k as f64 * SAMPLE_RATE / FRAME_LEN as f64
}

/// Frequencies of the retained bins, lowest first.
pub fn retained_frequencies() -> Vec<f64> {
    (BIN_LO..=BIN_HI).map(bin_frequency).collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex STFT values indexed `[mic][frame][bin]` over the retained bins.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    mics: usize,
    frames: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn new(mics: usize, frames: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), mics * frames * N_BINS, "spectrogram size");
        Self { mics, frames, data }
    }

    pub fn mics(&self) -> usize {
        self.mics
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        N_BINS
    }

    pub fn frame(&self, mic: usize, frame: usize) -> &[Complex64] {
        let start = (mic * self.frames + frame) * N_BINS;
        &self.data[start..start + N_BINS]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Reusable analysis state: window and a planned 512-point FFT.
pub struct Stft {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        Self {
            window: hann(FRAME_LEN),
            fft: FftPlanner::new().plan_fft_forward(FRAME_LEN),
        }
    }

    /// All 512 bins of the windowed frame starting at `start`.
    pub fn full_frame(&self, signal: &[f64], start: usize) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = signal[start..start + FRAME_LEN]
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex64::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf
    }

    pub fn analyze(&self, wave: &[Vec<f64>]) -> Result<ComplexSpectrogram, FrontendError> {
        let n = wave.first().map_or(0, Vec::len);
        if wave.iter().any(|ch| ch.len() != n) {
            return Err(FrontendError::RaggedChannels);
        }
        let frames = frame_count(n).ok_or(FrontendError::TooShort(n))?;
        let mut data = Vec::with_capacity(wave.len() * frames * N_BINS);
        for ch in wave {
            for f in 0..frames {
                let full = self.full_frame(ch, f * HOP);
                data.extend_from_slice(&full[BIN_LO..=BIN_HI]);
            }
        }
        Ok(ComplexSpectrogram::new(wave.len(), frames, data))
    }
}

pub fn stft(wave: &[Vec<f64>]) -> Result<ComplexSpectrogram, FrontendError> {
    Stft::new().analyze(wave)
}

/// Network input: `[4][frame][bin]` ordered Re(m1), Im(m1), Re(m2), Im(m2),
/// with every value divided by `normalizer`.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub tensor: Tensor,
    pub normalizer: f64,
}

impl Features {
    /// Same values laid out `[frame][bin][channel]`.
    pub fn frames_bins_channels(&self) -> Tensor {
        let s = self.tensor.shape();
        let (c, t, f) = (s[0], s[1], s[2]);
        let src = self.tensor.data();
        let mut out = vec![0.0; src.len()];
        for ci in 0..c {
            for ti in 0..t {
                for fi in 0..f {
                    out[(ti * f + fi) * c + ci] = src[(ci * t + ti) * f + fi];
                }
            }
        }
        Tensor::new(vec![t, f, c], out).expect("same size")
    }
}

/// Interleaves real and imaginary parts per microphone and divides by the
/// mean magnitude of microphone 1 (1 when that is zero).
pub fn assemble_features(spec: &ComplexSpectrogram) -> Result<Features, FrontendError> {
    if spec.mics != 2 {
        return Err(FrontendError::MicCount(spec.mics));
    }
    let per_mic = spec.frames * N_BINS;
    let mean_mag = spec.data[..per_mic].iter().map(|z| z.norm()).sum::<f64>() / per_mic as f64;
    let normalizer = if mean_mag > 0.0 { mean_mag } else { 1.0 };
    let mut out = Vec::with_capacity(4 * per_mic);
    for m in 0..2 {
        let zs = &spec.data[m * per_mic..(m + 1) * per_mic];
        out.extend(zs.iter().map(|z| z.re / normalizer));
        out.extend(zs.iter().map(|z| z.im / normalizer));
    }
    let tensor = Tensor::new(vec![4, spec.frames, N_BINS], out).expect("feature size");
    Ok(Features { tensor, normalizer })
}

/// Inverse of [`assemble_features`].
pub fn disassemble_features(features: &Features) -> ComplexSpectrogram {
    let s = features.tensor.shape();
    let frames = s[1];
    let per_mic = frames * N_BINS;
    let d = features.tensor.data();
    let mut data = Vec::with_capacity(2 * per_mic);
    for m in 0..2 {
        let re = &d[2 * m * per_mic..(2 * m + 1) * per_mic];
        let im = &d[(2 * m + 1) * per_mic..(2 * m + 2) * per_mic];
        data.extend(
            re.iter()
                .zip(im)
                .map(|(&r, &i)| Complex64::new(r * features.normalizer, i * features.normalizer)),
        );
    }
    ComplexSpectrogram::new(2, frames, data)
}

/// Arrival time at mic 2 minus arrival time at mic 1 for a far-field source
/// at `azimuth_deg`, measured from the axis pointing from mic 2 to mic 1.
pub fn analytic_tdoa(azimuth_deg: f64, spacing: f64, c: f64) -> f64 {
    spacing * azimuth_deg.to_radians().cos() / c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE).cos())
            .collect()
    }

    #[test]
    fn bin_bookkeeping() {
        assert_eq!(N_BINS, 253);
        assert_eq!(frame_count(511), None);
        assert_eq!(frame_count(512), Some(1));
        assert_eq!(frame_count(672), Some(2));
        assert_eq!(frame_count(64_000), Some(397));
        assert_eq!(bin_frequency(BIN_LO), 125.0);
        assert_eq!(bin_frequency(BIN_HI), 8000.0);
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let spec = stft(&[cosine(1000.0, 2048)]).unwrap();
        for f in 0..spec.frames() {
            let frame = spec.frame(0, f);
            let peak = (0..N_BINS)
                .max_by(|&a, &b| frame[a].norm().total_cmp(&frame[b].norm()))
                .unwrap();
            assert_eq!(peak + BIN_LO, 32);
        }
    }

    #[test]
    fn too_short_is_rejected() {
        assert_eq!(stft(&[vec![0.0; 100]]), Err(FrontendError::TooShort(100)));
        assert_eq!(
            stft(&[vec![0.0; 600], vec![0.0; 700]]),
            Err(FrontendError::RaggedChannels)
        );
    }

    #[test]
    fn tdoa_examples() {
        assert!(analytic_tdoa(90.0, 0.08, 343.0).abs() < 1e-18);
        assert!((analytic_tdoa(0.0, 0.08, 343.0) - 233.236e-6).abs() < 1e-9);
        assert!((analytic_tdoa(60.0, 0.08, 343.0) - 0.5 * 0.08 / 343.0).abs() < 1e-15);
    }
}
