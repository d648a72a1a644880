//! Frame activity detection and SNR-controlled mixing.

use super::SimError;
use crate::frontend::{frame_count, FRAME_LEN, HOP};

/// Dynamic range below the loudest frame that still counts as active.
pub const VAD_RANGE_DB: f64 = 40.0;

/// Per-STFT-frame activity: RMS within `VAD_RANGE_DB` of the loudest frame.
pub fn vad_mask(signal: &[f64]) -> Vec<bool> {
    let frames = frame_count(signal.len()).unwrap_or(0);
    let rms: Vec<f64> = (0..frames)
        .map(|f| {
            let s = &signal[f * HOP..f * HOP + FRAME_LEN];
            (s.iter().map(|v| v * v).sum::<f64>() / FRAME_LEN as f64).sqrt()
        })
        .collect();
    let max = rms.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![false; frames];
    }
    let floor = max * 10f64.powf(-VAD_RANGE_DB / 20.0);
    rms.iter().map(|&r| r >= floor).collect()
}

/// Samples covered by at least one active frame.
pub fn active_samples(mask: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; n];
    for (f, _) in mask.iter().enumerate().filter(|(_, &a)| a) {
        let lo = (f * HOP).min(n);
        let hi = (f * HOP + FRAME_LEN).min(n);
        out[lo..hi].iter_mut().for_each(|v| *v = true);
    }
    out
}

fn active_power(x: &[f64], active: &[bool]) -> f64 {
    let (sum, count) = x
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// SNR in dB of channel 1 over the active samples.
pub fn measured_snr(clean: &[f64], noise: &[f64], active: &[bool]) -> f64 {
    10.0 * (active_power(clean, active) / active_power(noise, active)).log10()
}

/// Scales `noise` so the channel-1 SNR over active samples equals `snr_db`
/// and adds it to `clean`. Returns the mixture and the noise gain.
pub fn mix_snr(
    clean: &[Vec<f64>; 2],
    noise: &[Vec<f64>; 2],
    snr_db: f64,
    mask: &[bool],
) -> Result<([Vec<f64>; 2], f64), SimError> {
    let n = clean[0].len();
    if clean[1].len() != n || noise.iter().any(|c| c.len() != n) {
        return Err(SimError::Length("clean and noise channels differ in length".into()));
    }
    let active = active_samples(mask, n);
    let pc = active_power(&clean[0], &active);
    if pc <= 0.0 {
        return Err(SimError::ZeroPower("clean"));
    }
    let pn = active_power(&noise[0], &active);
    if pn <= 0.0 {
        return Err(SimError::ZeroPower("noise"));
    }
    let gain = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let mix = [0, 1].map(|c| clean[c].iter().zip(&noise[c]).map(|(s, v)| s + gain * v).collect());
    Ok((mix, gain))
}
