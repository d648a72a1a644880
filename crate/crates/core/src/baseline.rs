//! Classical two-microphone localisation: GCC-PHAT delay estimation and
//! SRP-PHAT steered response power over the 181-point azimuth grid.

use rustfft::num_complex::Complex64;

use crate::frontend::{analytic_tdoa, retained_frequencies, ComplexSpectrogram, FRAME_RATE, N_BINS, SAMPLE_RATE};
use crate::net::{SpatialSpectrum, N_DOA};

/// Floor on the PHAT denominator.
pub const PHAT_EPS: f64 = 1e-12;
/// Lags returned by [`gcc_phat`], in samples either side of zero.
pub const MAX_LAG: i32 = 8;

/// Per-azimuth, per-bin phasors `exp(-j·2πf·τ(θ))`, `[181][bins]`.
#[derive(Clone, Debug)]
pub struct SteeringGrid {
    pub azimuths: Vec<f64>,
    pub phasors: Vec<Complex64>,
}

impl SteeringGrid {
    pub fn new(spacing: f64, c: f64) -> Self {
        let freqs = retained_frequencies();
        let azimuths: Vec<f64> = (0..N_DOA).map(|k| k as f64).collect();
        let mut phasors = Vec::with_capacity(N_DOA * N_BINS);
        for &az in &azimuths {
            let tau = analytic_tdoa(az, spacing, c);
            phasors.extend(
                freqs
                    .iter()
                    .map(|&f| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * tau)),
            );
        }
        Self { azimuths, phasors }
    }

    pub fn row(&self, az_index: usize) -> &[Complex64] {
        &self.phasors[az_index * N_BINS..(az_index + 1) * N_BINS]
    }
}

/// Whitened cross-spectrum `X1·conj(X2) / |X1·conj(X2)|` of one frame.
pub fn phat(spec: &ComplexSpectrogram, frame: usize) -> Vec<Complex64> {
    let (a, b) = (spec.frame(0, frame), spec.frame(1, frame));
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let p = x * y.conj();
            p / p.norm().max(PHAT_EPS)
        })
        .collect()
}

/// Generalised cross-correlation with phase transform over integer lags
/// `-MAX_LAG..=MAX_LAG`; a positive lag means mic 2 lags mic 1.
pub fn gcc_phat(spec: &ComplexSpectrogram, frame: usize) -> Vec<f64> {
    let p = phat(spec, frame);
    let freqs = retained_frequencies();
    (-MAX_LAG..=MAX_LAG)
        .map(|lag| {
            let w = -2.0 * std::f64::consts::PI * lag as f64 / SAMPLE_RATE;
            p.iter()
                .zip(&freqs)
                .map(|(z, f)| (z * Complex64::from_polar(1.0, w * f)).re)
                .sum::<f64>()
                / N_BINS as f64
        })
        .collect()
}

/// Steered response power with PHAT weighting, normalised to `[-1, 1]`.
pub fn srp_phat(spec: &ComplexSpectrogram, grid: &SteeringGrid) -> SpatialSpectrum {
    let mut values = Vec::with_capacity(spec.frames() * N_DOA);
    for f in 0..spec.frames() {
        let p = phat(spec, f);
        for k in 0..N_DOA {
            let s: f64 = p.iter().zip(grid.row(k)).map(|(a, b)| (a * b).re).sum();
            values.push(s / N_BINS as f64);
        }
    }
    SpatialSpectrum::new(values, FRAME_RATE)
}

/// Running median over `width` frames, window shrinking at the edges.
pub fn median_filter(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            let mut w = x[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            let m = w.len();
            if m % 2 == 1 {
                w[m / 2]
            } else {
                0.5 * (w[m / 2 - 1] + w[m / 2])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steering_is_unit_and_broadside_is_flat() {
        let g = SteeringGrid::new(0.08, 343.0);
        assert!(g.phasors.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(g.row(90).iter().all(|z| (z.re - 1.0).abs() < 1e-12));
    }

    #[test]
    fn median_examples() {
        assert_eq!(
            median_filter(&[1.0, 9.0, 2.0, 3.0, 100.0], 3),
            vec![5.0, 2.0, 3.0, 3.0, 51.5]
        );
        assert_eq!(median_filter(&[], 5), Vec::<f64>::new());
    }
}
