//! Piecewise-static rendering of a moving source.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::rir::ism_rir;
use super::room::{waypoint_count, RoomSpec, Trajectory, WAYPOINT_SPACING};
use super::SimError;

/// Crossfade length between adjacent segments, in samples (10 ms).
pub const CROSSFADE: usize = 160;

/// Linear convolution via FFT, full length `x.len() + h.len() - 1`.
pub fn fft_convolve(planner: &mut FftPlanner<f64>, x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut b: Vec<Complex64> = v.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        b.resize(n, Complex64::new(0.0, 0.0));
        b
    };
    let (mut a, mut b) = (pad(x), pad(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..out_len].iter().map(|z| z.re * scale).collect()
}

/// Weight of segment `i` at sample `t`; weights of all segments sum to one.
fn segment_weight(i: usize, segments: usize, seg: usize, t: usize) -> f64 {
    let ramp = |boundary: usize| {
        // rises from 0 to 1 across [boundary - R/2, boundary + R/2)
        let x = (t as f64 - boundary as f64 + CROSSFADE as f64 / 2.0 + 0.5) / CROSSFADE as f64;
        x.clamp(0.0, 1.0)
    };
    let up = if i == 0 { 1.0 } else { ramp(i * seg) };
    let down = if i + 1 == segments {
        1.0
    } else {
        1.0 - ramp((i + 1) * seg)
    };
    up * down
}

/// Renders `signal` through per-waypoint RIR pairs. Output has the input's
/// length on both channels.
pub fn moving_convolve(signal: &[f64], traj: &Trajectory, room: &RoomSpec) -> Result<[Vec<f64>; 2], SimError> {
    let n = signal.len();
    let segments = waypoint_count(n);
    if traj.waypoints.len() < segments {
        return Err(SimError::TrajectoryTooShort {
            waypoints: traj.waypoints.len(),
            needed: segments,
        });
    }
    let seg = (WAYPOINT_SPACING * room.fs).round() as usize;
    let mut planner = FftPlanner::new();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    if n == 0 {
        return Ok(out);
    }
    let mut cache: Option<(super::room::Point, [Vec<f64>; 2])> = None;
    for i in 0..segments {
        let lo = (i * seg).saturating_sub(CROSSFADE / 2);
        let hi = ((i + 1) * seg + CROSSFADE / 2).min(n);
        if lo >= hi {
            continue;
        }
        let piece: Vec<f64> = (lo..hi)
            .map(|t| signal[t] * segment_weight(i, segments, seg, t))
            .collect();
        if piece.iter().all(|&v| v == 0.0) {
            continue;
        }
        let src = traj.waypoints[i];
        let rirs = match &cache {
            Some((p, r)) if *p == src => r.clone(),
            _ => {
                let r = [ism_rir(room, src, room.mics[0])?, ism_rir(room, src, room.mics[1])?];
                cache = Some((src, r.clone()));
                r
            }
        };
        for (ch, h) in out.iter_mut().zip(&rirs) {
            let y = fft_convolve(&mut planner, &piece, h);
            for (o, v) in ch[lo..].iter_mut().zip(y) {
                *o += v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity() {
        let (segments, seg) = (5, 1600);
        for t in 0..segments * seg {
            let s: f64 = (0..segments).map(|i| segment_weight(i, segments, seg, t)).sum();
            assert!((s - 1.0).abs() < 1e-15, "t={t} sum={s}");
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let h = [0.25, 0.0, -1.0];
        let y = fft_convolve(&mut FftPlanner::new(), &x, &h);
        let mut d = vec![0.0; 6];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                d[i + j] += a * b;
            }
        }
        for (a, b) in y.iter().zip(&d) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
