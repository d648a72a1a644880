//! Image-source room impulse responses with windowed-sinc fractional delays,
//! and Schroeder decay analysis.

use std::f64::consts::PI;

use super::room::{Point, RoomSpec};
use super::SimError;

/// Width of the fractional-delay kernel, in taps.
pub const SINC_TAPS: usize = 81;

/// Samples needed for `rt60`, never shorter than the direct path plus the
/// fractional-delay kernel.
pub fn rir_length(room: &RoomSpec, src: Point, mic: Point) -> usize {
    let reverb = (1.25 * room.rt60 * room.fs).ceil() as usize;
    let direct = super::room::dist(src, mic) / room.c * room.fs;
    reverb.max(direct.ceil() as usize + SINC_TAPS / 2 + 1)
}

/// Per-axis image coordinates relative to the microphone, with the number
/// of wall reflections each one implies.
fn axis_images(src: f64, mic: f64, len: f64, reach: f64) -> Vec<(f64, i32)> {
    let n_max = (reach / (2.0 * len)).ceil() as i64 + 1;
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        for parity in 0..2i64 {
            let pos = (1 - 2 * parity) as f64 * src + 2.0 * n as f64 * len;
            let d = pos - mic;
            if d.abs() <= reach {
                let refl = (n - parity).abs() + n.abs();
                out.push((d, refl as i32));
            }
        }
    }
    out
}

/// Bin width of the energy histogram used to match decay times, in samples.
const ENERGY_BIN: usize = 16;

/// Image energy `1/d²` binned by arrival time and reflection count, direct
/// path excluded. Returns `table[bin][reflections]`.
fn energy_table(dims: Point, src: Point, mic: Point, len: usize, fs: f64, c: f64) -> Vec<Vec<f64>> {
    let reach = len as f64 / fs * c;
    let axes: Vec<Vec<(f64, i32)>> = (0..3).map(|i| axis_images(src[i], mic[i], dims[i], reach)).collect();
    let max_refl = axes
        .iter()
        .map(|a| a.iter().map(|x| x.1).max().unwrap_or(0))
        .sum::<i32>() as usize;
    let bins = len.div_ceil(ENERGY_BIN);
    let mut table = vec![vec![0.0; max_refl + 1]; bins];
    let reach2 = reach * reach;
    for &(dx, rx) in &axes[0] {
        for &(dy, ry) in &axes[1] {
            let dxy = dx * dx + dy * dy;
            if dxy > reach2 {
                continue;
            }
            for &(dz, rz) in &axes[2] {
                let d2 = dxy + dz * dz;
                let r = (rx + ry + rz) as usize;
                if d2 > reach2 || r == 0 {
                    continue;
                }
                let bin = ((d2.sqrt() / c * fs) as usize / ENERGY_BIN).min(bins - 1);
                table[bin][r] += 1.0 / d2;
            }
        }
    }
    table
}

/// Decay time of the binned reverberant energy for reflection coefficient `beta`.
fn table_rt60(table: &[Vec<f64>], beta: f64, fs: f64) -> Option<f64> {
    let b2 = beta * beta;
    let energy: Vec<f64> = table
        .iter()
        .map(|row| {
            let mut g = 1.0;
            let mut e = 0.0;
            for &w in row {
                e += w * g;
                g *= b2;
            }
            e
        })
        .collect();
    let rt = schroeder_rt60(
        &energy.iter().map(|e| e.sqrt()).collect::<Vec<_>>(),
        fs / ENERGY_BIN as f64,
    )?;
    Some(rt)
}

/// Reflection coefficient for which the image-source reverberant tail of a
/// `dims` room decays with time constant `rt60`, found by bisection.
///
/// Specular image sums in a shoebox decay more slowly than statistical
/// formulas predict, so those formulas only bracket the search.
pub fn matched_reflection_coefficient(dims: Point, rt60: f64, fs: f64, c: f64) -> f64 {
    if rt60 <= 0.0 {
        return 0.0;
    }
    let src = [dims[0] * 0.5, dims[1] * 0.5, dims[2] * 0.5];
    let mic = [dims[0] * 0.3, dims[1] * 0.4, dims[2] * 0.45];
    let len = (1.25 * rt60 * fs).ceil() as usize;
    let table = energy_table(dims, src, mic, len, fs, c);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match table_rt60(&table, mid, fs) {
            Some(t) if t > rt60 => hi = mid,
            _ => lo = mid,
        }
    }
    0.5 * (lo + hi)
}

/// Adds `amp · sinc(n - delay) · hann(n - delay)` for the taps around `delay`.
fn deposit(h: &mut [f64], delay: f64, amp: f64, cos_tab: &[f64], sin_tab: &[f64]) {
    let half = (SINC_TAPS / 2) as i64;
    let n0 = delay.round() as i64;
    let frac = n0 as f64 - delay;
    let s0 = (PI * frac).sin();
    let w = 2.0 * PI / SINC_TAPS as f64;
    let (cf, sf) = ((w * frac).cos(), (w * frac).sin());
    for k in -half..=half {
        let idx = n0 + k;
        if idx < 0 || idx as usize >= h.len() {
            continue;
        }
        let t = k as f64 + frac;
        let sinc = if t == 0.0 {
            1.0
        } else {
            let s = if k % 2 == 0 { s0 } else { -s0 };
            s / (PI * t)
        };
        let ki = (k + half) as usize;
        // cos(w·(k + frac)) by angle addition from the tap tables
        let cos = cos_tab[ki] * cf - sin_tab[ki] * sf;
        h[idx as usize] += amp * sinc * 0.5 * (1.0 + cos);
    }
}

/// Allen–Berkley image-source response from `src` to `mic`, covering
/// `1.25·rt60` of propagation.
pub fn ism_rir(room: &RoomSpec, src: Point, mic: Point) -> Result<Vec<f64>, SimError> {
    if !room.contains(src, 0.0) {
        return Err(SimError::OutsideRoom(src));
    }
    if !room.contains(mic, 0.0) {
        return Err(SimError::OutsideRoom(mic));
    }
    let len = rir_length(room, src, mic);
    let mut h = vec![0.0; len];
    let reach = len as f64 / room.fs * room.c;
    let half = (SINC_TAPS / 2) as i64;
    let w = 2.0 * PI / SINC_TAPS as f64;
    let cos_tab: Vec<f64> = (-half..=half).map(|k| (w * k as f64).cos()).collect();
    let sin_tab: Vec<f64> = (-half..=half).map(|k| (w * k as f64).sin()).collect();
    let axes: Vec<Vec<(f64, i32)>> = (0..3)
        .map(|i| axis_images(src[i], mic[i], room.dims[i], reach))
        .collect();
    let max_refl = axes
        .iter()
        .map(|a| a.iter().map(|x| x.1).max().unwrap_or(0))
        .sum::<i32>();
    let pow: Vec<f64> = (0..=max_refl).map(|r| room.beta.powi(r)).collect();
    let reach2 = reach * reach;
    let scale = room.fs / room.c;
    for &(dx, rx) in &axes[0] {
        for &(dy, ry) in &axes[1] {
            let dxy = dx * dx + dy * dy;
            if dxy > reach2 {
                continue;
            }
            for &(dz, rz) in &axes[2] {
                let d2 = dxy + dz * dz;
                if d2 > reach2 {
                    continue;
                }
                let g = pow[(rx + ry + rz) as usize];
                if g == 0.0 {
                    continue;
                }
                let d = d2.sqrt();
                deposit(&mut h, d * scale, g / (4.0 * PI * d), &cos_tab, &sin_tab);
            }
        }
    }
    highpass_100hz(&mut h, room.fs);
    Ok(h)
}

/// Allen and Berkley's second-order high-pass at 100 Hz. Every image has
/// positive amplitude, so without it the low-frequency part of the tail
/// sums coherently and decays far more slowly than the broadband energy.
pub fn highpass_100hz(h: &mut [f64], fs: f64) {
    let w = 2.0 * PI * 100.0 / fs;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0; 3];
    for v in h.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

/// Energy decay curve in dB, normalised to 0 dB at `t = 0`.
pub fn schroeder_curve(h: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    let e0 = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|&e| 10.0 * (e / e0).log10()).collect()
}

/// RT60 extrapolated from a least-squares fit of the decay curve between
/// -5 dB and -25 dB.
pub fn schroeder_rt60(h: &[f64], fs: f64) -> Option<f64> {
    let curve = schroeder_curve(h);
    let start = curve.iter().position(|&v| v <= -5.0)?;
    let end = curve.iter().position(|&v| v <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    let n = (end - start + 1) as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in curve.iter().enumerate().take(end + 1).skip(start) {
        let x = i as f64 / fs;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope < 0.0).then(|| -60.0 / slope)
}
