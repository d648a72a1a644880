//! Synthetic stand-ins for speech and noise recordings.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Voiced/unvoiced syllables separated by pauses, after a silent lead-in of
/// `lead_in` seconds. Peak amplitude is 0.5.
pub fn speech_like<R: Rng>(rng: &mut R, n: usize, fs: f64, lead_in: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut t = (lead_in * fs) as usize;
    while t < n {
        let dur = (rng.gen_range(0.12..0.35) * fs) as usize;
        let f0 = rng.gen_range(90.0..240.0);
        let glide = rng.gen_range(-0.25..0.25);
        let noise_level = rng.gen_range(0.1..0.5);
        let harmonics = ((4000.0 / f0) as usize).max(1);
        let gains: Vec<f64> = (1..=harmonics).map(|k| rng.gen_range(0.3..1.0) / k as f64).collect();
        let mut phase = 0.0;
        for i in 0..dur.min(n - t) {
            let s = i as f64 / dur as f64;
            let env = (PI * s).sin().powi(2);
            let f = f0 * (1.0 + glide * s);
            phase += 2.0 * PI * f / fs;
            let voiced: f64 = gains
                .iter()
                .enumerate()
                .map(|(k, g)| g * ((k + 1) as f64 * phase).sin())
                .sum();
            let hiss: f64 = StandardNormal.sample(rng);
            out[t + i] = env * (voiced + noise_level * hiss);
        }
        t += dur;
        let gap = if rng.gen_bool(0.15) {
            rng.gen_range(0.25..0.5)
        } else {
            rng.gen_range(0.02..0.12)
        };
        t += (gap * fs) as usize;
    }
    normalize_peak(&mut out, 0.5);
    out
}

/// Gaussian white noise with unit variance.
pub fn white_noise<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Sum of several independent talkers without lead-in.
pub fn babble<R: Rng>(rng: &mut R, n: usize, fs: f64, talkers: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for _ in 0..talkers {
        let s = speech_like(rng, n, fs, 0.0);
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    normalize_peak(&mut out, 0.5);
    out
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lead_in_is_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = speech_like(&mut rng, 16_000, 16_000.0, 0.3);
        assert!(s[..4800].iter().all(|&v| v == 0.0));
        assert!(s[4800..].iter().any(|&v| v != 0.0));
        let peak = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
    }
}
