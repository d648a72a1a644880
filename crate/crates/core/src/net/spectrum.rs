//! 181-point azimuth maps, their Gaussian training targets, and peak picking.

use serde::{Deserialize, Serialize};

use super::NetError;

pub const N_DOA: usize = 181;

/// Per-frame likelihood over azimuths 0°..=180° at 1° spacing, `[frame][181]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialSpectrum {
    pub values: Vec<f64>,
    pub frame_rate: f64,
}

impl SpatialSpectrum {
    pub fn new(values: Vec<f64>, frame_rate: f64) -> Self {
        assert_eq!(values.len() % N_DOA, 0, "spectrum length must be a multiple of {N_DOA}");
        Self { values, frame_rate }
    }

    pub fn frames(&self) -> usize {
        self.values.len() / N_DOA
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * N_DOA..(i + 1) * N_DOA]
    }
}

/// Gaussian bump `exp(-(θ - θ_src)² / σ²)` for each active frame, zeros
/// for inactive ones.
pub fn encode_target(
    azimuths: &[f64],
    active: &[bool],
    sigma: f64,
    frame_rate: f64,
) -> Result<SpatialSpectrum, NetError> {
    let mut values = vec![0.0; azimuths.len() * N_DOA];
    for (f, (&az, &on)) in azimuths.iter().zip(active).enumerate() {
        if !(0.0..=180.0).contains(&az) {
            return Err(NetError::AzimuthRange(az));
        }
        if !on {
            continue;
        }
        for (k, v) in values[f * N_DOA..(f + 1) * N_DOA].iter_mut().enumerate() {
            let d = k as f64 - az;
            *v = (-(d * d) / (sigma * sigma)).exp();
        }
    }
    Ok(SpatialSpectrum::new(values, frame_rate))
}

/// Argmax per frame in degrees; ties go to the lower index.
pub fn decode_doa(s: &SpatialSpectrum) -> Vec<f64> {
    (0..s.frames())
        .map(|f| {
            let row = s.frame(f);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best as f64
        })
        .collect()
}

/// Mean squared error over the unmasked frames.
pub fn mse_loss(pred: &SpatialSpectrum, target: &SpatialSpectrum, mask: &[bool]) -> Result<f64, NetError> {
    if pred.frames() != target.frames() || mask.len() != pred.frames() {
        return Err(NetError::Shape(format!(
            "pred {} frames, target {}, mask {}",
            pred.frames(),
            target.frames(),
            mask.len()
        )));
    }
    let kept = mask.iter().filter(|&&m| m).count();
    if kept == 0 {
        return Err(NetError::AllMasked);
    }
    let mut sum = 0.0;
    for f in (0..pred.frames()).filter(|&f| mask[f]) {
        sum += pred
            .frame(f)
            .iter()
            .zip(target.frame(f))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    Ok(sum / (kept * N_DOA) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_shape() {
        let s = encode_target(&[90.0, 0.0], &[true, true], 8.0, 25.0).unwrap();
        let a = s.frame(0);
        assert_eq!(a[90], 1.0);
        assert!((a[82] - (-1f64).exp()).abs() < 1e-15 && (a[98] - a[82]).abs() < 1e-15);
        assert!(s.frame(1).windows(2).all(|w| w[1] < w[0]));
        assert!(encode_target(&[181.0], &[true], 8.0, 25.0).is_err());
        let off = encode_target(&[45.0], &[false], 8.0, 25.0).unwrap();
        assert!(off.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_ties_and_peaks() {
        let mut v = vec![0.0; N_DOA];
        v[37] = 1.0;
        assert_eq!(decode_doa(&SpatialSpectrum::new(v, 25.0)), vec![37.0]);
        assert_eq!(decode_doa(&SpatialSpectrum::new(vec![0.3; N_DOA], 25.0)), vec![0.0]);
    }

    #[test]
    fn mse_examples() {
        let t = encode_target(&[30.0, 60.0], &[true, true], 8.0, 25.0).unwrap();
        assert_eq!(mse_loss(&t, &t, &[true, true]).unwrap(), 0.0);
        let p = SpatialSpectrum::new(t.values.iter().map(|v| v + 0.1).collect(), 25.0);
        assert!((mse_loss(&p, &t, &[true, true]).unwrap() - 0.01).abs() < 1e-12);
        let mut q = t.clone();
        q.values[N_DOA..].iter_mut().for_each(|v| *v += 5.0);
        assert_eq!(mse_loss(&q, &t, &[true, false]).unwrap(), 0.0);
        assert_eq!(mse_loss(&t, &t, &[false, false]), Err(NetError::AllMasked));
    }
}
