//! Spherically isotropic diffuse noise for a two-microphone pair.

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::frontend::hann;

const FFT: usize = 512;
const HOP: usize = 128;

/// Target spatial coherence `sin(x)/x` with `x = 2πf·d/c`.
pub fn diffuse_coherence(freq: f64, spacing: f64, c: f64) -> f64 {
    let x = 2.0 * std::f64::consts::PI * freq * spacing / c;
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Weighted overlap-add analysis and resynthesis with a Hann window on both
/// sides; `modify` may rewrite each frame's full spectrum in place.
fn wola(x: &[f64], mut modify: impl FnMut(&mut [Complex64], &mut [Complex64]), y: &[f64]) -> [Vec<f64>; 2] {
    let n = x.len();
    let win = hann(FFT);
    // hop FFT/4 makes Σ w² = 1.5 at every sample
    let norm = 1.5;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(FFT);
    let inv = planner.plan_fft_inverse(FFT);
    let padded = n + 2 * FFT;
    let pad = |s: &[f64]| {
        let mut v = vec![0.0; padded];
        v[FFT..FFT + n].copy_from_slice(s);
        v
    };
    let (px, py) = (pad(x), pad(y));
    let mut out = [vec![0.0; padded], vec![0.0; padded]];
    let mut start = 0;
    while start + FFT <= padded {
        let frame = |s: &[f64]| -> Vec<Complex64> {
            s[start..start + FFT]
                .iter()
                .zip(&win)
                .map(|(v, w)| Complex64::new(v * w, 0.0))
                .collect()
        };
        let (mut a, mut b) = (frame(&px), frame(&py));
        fwd.process(&mut a);
        fwd.process(&mut b);
        modify(&mut a, &mut b);
        for (spec, o) in [a, b].iter_mut().zip(out.iter_mut()) {
            inv.process(spec);
            for (k, z) in spec.iter().enumerate() {
                o[start + k] += z.re / FFT as f64 * win[k] / norm;
            }
        }
        start += HOP;
    }
    out.map(|o| o[FFT..FFT + n].to_vec())
}

/// Two-channel diffuse noise of length `len` from a mono recording.
///
/// Channel 1 carries the noise itself; channel 2 mixes it with an
/// independent copy (a long circular shift of the same recording) per
/// frequency so that the inter-channel coherence is `sin(x)/x`.
pub fn diffuse_noise<R: Rng>(mono: &[f64], len: usize, spacing: f64, c: f64, fs: f64, rng: &mut R) -> [Vec<f64>; 2] {
    assert!(mono.len() >= len, "noise recording shorter than target");
    let total = mono.len();
    let shift = if total >= 4 {
        rng.gen_range(total / 4..=3 * total / 4)
    } else {
        0
    };
    let a = mono[..len].to_vec();
    let b: Vec<f64> = (0..len).map(|i| mono[(i + shift) % total]).collect();
    let gains: Vec<(f64, f64)> = (0..FFT)
        .map(|k| {
            let f = k.min(FFT - k) as f64 * fs / FFT as f64;
            let g = diffuse_coherence(f, spacing, c);
            (g, (1.0 - g * g).max(0.0).sqrt())
        })
        .collect();
    wola(
        &a,
        |x, y| {
            for (k, (g, r)) in gains.iter().enumerate() {
                y[k] = x[k] * g + y[k] * r;
            }
        },
        &b,
    )
}

/// Welch estimate of the complex coherence between two signals at each
/// of the `FFT/2 + 1` non-negative frequency bins.
pub fn welch_coherence(x: &[f64], y: &[f64]) -> Vec<Complex64> {
    let win = hann(FFT);
    let fwd = FftPlanner::new().plan_fft_forward(FFT);
    let bins = FFT / 2 + 1;
    let mut sxx = vec![0.0; bins];
    let mut syy = vec![0.0; bins];
    let mut sxy = vec![Complex64::new(0.0, 0.0); bins];
    let mut start = 0;
    while start + FFT <= x.len().min(y.len()) {
        let frame = |s: &[f64]| -> Vec<Complex64> {
            s[start..start + FFT]
                .iter()
                .zip(&win)
                .map(|(v, w)| Complex64::new(v * w, 0.0))
                .collect()
        };
        let (mut a, mut b) = (frame(x), frame(y));
        fwd.process(&mut a);
        fwd.process(&mut b);
        for k in 0..bins {
            sxx[k] += a[k].norm_sqr();
            syy[k] += b[k].norm_sqr();
            sxy[k] += a[k] * b[k].conj();
        }
        start += FFT / 2;
    }
    (0..bins)
        .map(|k| {
            let d = (sxx[k] * syy[k]).sqrt();
            if d > 0.0 {
                sxy[k] / d
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Frequency of bin `k` of the coherence estimate.
pub fn welch_frequency(k: usize, fs: f64) -> f64 {
    k as f64 * fs / FFT as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn coherence_is_one_at_dc() {
        assert_eq!(diffuse_coherence(0.0, 0.08, 343.0), 1.0);
        assert!(diffuse_coherence(10.0, 0.08, 343.0) > 0.9999);
    }

    #[test]
    fn unit_gains_reconstruct_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let [a, b] = wola(&x, |_, _| {}, &x);
        for i in 0..x.len() {
            assert!((a[i] - x[i]).abs() < 1e-10 && (b[i] - x[i]).abs() < 1e-10);
        }
    }
}
