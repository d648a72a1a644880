//! Room geometry, absorption from reverberation time, microphone placement
//! and source trajectories.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SimConfig, SimError};
use crate::frontend::{FRAME_LEN, HOP, SAMPLE_RATE};

pub type Point = [f64; 3];

/// How the uniform reflection coefficient is derived from RT60.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsorptionModel {
    Eyring,
    Sabine,
    /// Matched to the decay of the image-source energy itself.
    Matched,
}

/// Shoebox room with a two-microphone array whose axis is parallel to x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dims: Point,
    pub rt60: f64,
    /// Pressure reflection coefficient shared by all six walls.
    pub beta: f64,
    pub mics: [Point; 2],
    pub c: f64,
    pub fs: f64,
}

/// Uniform wall reflection coefficient that yields `rt60` under `model`.
pub fn reflection_coefficient(dims: Point, rt60: f64, model: AbsorptionModel) -> f64 {
    if rt60 <= 0.0 {
        return 0.0;
    }
    if model == AbsorptionModel::Matched {
        return super::rir::matched_reflection_coefficient(dims, rt60, SAMPLE_RATE, crate::frontend::SPEED_OF_SOUND);
    }
    let [lx, ly, lz] = dims;
    let volume = lx * ly * lz;
    let surface = 2.0 * (lx * ly + lx * lz + ly * lz);
    let x = 0.161 * volume / (surface * rt60);
    let alpha = match model {
        AbsorptionModel::Eyring => 1.0 - (-x).exp(),
        AbsorptionModel::Sabine | AbsorptionModel::Matched => x.min(1.0),
    };
    (1.0 - alpha).max(0.0).sqrt()
}

impl RoomSpec {
    /// Array centred at `center`, mic 1 on the +x side.
    pub fn new(dims: Point, rt60: f64, model: AbsorptionModel, center: Point, spacing: f64) -> Self {
        let h = spacing / 2.0;
        Self {
            dims,
            rt60,
            beta: reflection_coefficient(dims, rt60, model),
            mics: [
                [center[0] + h, center[1], center[2]],
                [center[0] - h, center[1], center[2]],
            ],
            c: crate::frontend::SPEED_OF_SOUND,
            fs: SAMPLE_RATE,
        }
    }

    pub fn center(&self) -> Point {
        let [a, b] = self.mics;
        [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
    }

    pub fn spacing(&self) -> f64 {
        dist(self.mics[0], self.mics[1])
    }

    pub fn contains(&self, p: Point, margin: f64) -> bool {
        (0..3).all(|i| p[i] >= margin && p[i] <= self.dims[i] - margin)
    }

    /// Azimuth in degrees of `p` relative to the array axis (0° toward mic 1).
    pub fn azimuth(&self, p: Point) -> f64 {
        let c = self.center();
        let axis = sub(self.mics[0], self.mics[1]);
        let r = sub(p, c);
        let cos = dot(axis, r) / (norm(axis) * norm(r));
        cos.clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Point at horizontal distance `r` and azimuth `deg` from the array
    /// centre, on the +y (`side > 0`) or -y side.
    pub fn point_at(&self, deg: f64, r: f64, side: f64) -> Point {
        let c = self.center();
        let t = deg.to_radians();
        [c[0] + r * t.cos(), c[1] + side.signum() * r * t.sin(), c[2]]
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws room size, RT60 and an array position that keeps both mics at
/// least `wall_margin` from every wall.
pub fn sample_room<R: Rng>(rng: &mut R, cfg: &SimConfig) -> Result<RoomSpec, SimError> {
    for _ in 0..1000 {
        let dims = [
            uniform(rng, [cfg.room_min[0], cfg.room_max[0]]),
            uniform(rng, [cfg.room_min[1], cfg.room_max[1]]),
            uniform(rng, [cfg.room_min[2], cfg.room_max[2]]),
        ];
        let rt60 = uniform(rng, cfg.rt60);
        let m = cfg.wall_margin;
        let h = cfg.mic_spacing / 2.0;
        let lo = [m + h, m, m];
        let hi = [dims[0] - m - h, dims[1] - m, dims[2] - m];
        if (0..3).any(|i| hi[i] < lo[i]) {
            continue;
        }
        let zr = [cfg.mic_height[0].max(lo[2]), cfg.mic_height[1].min(hi[2])];
        if zr[1] < zr[0] {
            continue;
        }
        let center = [
            uniform(rng, [lo[0], hi[0]]),
            uniform(rng, [lo[1], hi[1]]),
            uniform(rng, zr),
        ];
        let room = RoomSpec::new(dims, rt60, cfg.absorption, center, cfg.mic_spacing);
        if room.mics.iter().all(|&p| room.contains(p, m)) {
            return Ok(room);
        }
    }
    Err(SimError::Placement(
        "no valid room/array placement in 1000 draws".into(),
    ))
}

/// Source path sampled at `WAYPOINT_SPACING`; waypoint `i` is the position
/// during `[i·0.1 s, (i+1)·0.1 s)` and is attributed to the middle of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Point>,
}

pub const WAYPOINT_SPACING: f64 = 0.1;

impl Trajectory {
    pub fn fixed(p: Point, n: usize) -> Self {
        Self { waypoints: vec![p; n] }
    }

    /// Linear interpolation between waypoint midpoints, clamped at the ends.
    pub fn position(&self, t: f64) -> Point {
        let w = &self.waypoints;
        let s = t / WAYPOINT_SPACING - 0.5;
        if s <= 0.0 {
            return w[0];
        }
        let i = s.floor() as usize;
        if i + 1 >= w.len() {
            return w[w.len() - 1];
        }
        let f = s - i as f64;
        [0, 1, 2].map(|k| w[i][k] + f * (w[i + 1][k] - w[i][k]))
    }

    /// Ground-truth azimuth at the centre of each STFT frame.
    pub fn frame_azimuths(&self, room: &RoomSpec, frames: usize) -> Vec<f64> {
        (0..frames)
            .map(|f| {
                let t = (f * HOP + FRAME_LEN / 2) as f64 / SAMPLE_RATE;
                room.azimuth(self.position(t))
            })
            .collect()
    }
}

/// Waypoints needed to cover `n` samples.
pub fn waypoint_count(n: usize) -> usize {
    let seg = (WAYPOINT_SPACING * SAMPLE_RATE).round() as usize;
    n.div_ceil(seg).max(1)
}

/// Straight line with a sinusoidal wobble, in the array's horizontal plane.
/// `amplitude` overrides the random wobble amplitude (per axis) when given.
pub fn generate_trajectory<R: Rng>(
    room: &RoomSpec,
    rng: &mut R,
    cfg: &SimConfig,
    n_samples: usize,
    amplitude: Option<f64>,
) -> Result<Trajectory, SimError> {
    let n = waypoint_count(n_samples);
    let m = cfg.wall_margin;
    let z = room.center()[2];
    let frames = crate::frontend::frame_count(n_samples).unwrap_or(1);
    for _ in 0..1000 {
        let mut pick = || [uniform(rng, [m, room.dims[0] - m]), uniform(rng, [m, room.dims[1] - m])];
        let (a, b) = (pick(), pick());
        let amp = [0, 1].map(|_| amplitude.unwrap_or_else(|| uniform(rng, [0.0, cfg.max_perturbation])));
        let osc = uniform(rng, cfg.oscillations);
        let phase = [0, 1].map(|_| uniform(rng, [0.0, 2.0 * std::f64::consts::PI]));
        let waypoints: Vec<Point> = (0..n)
            .map(|i| {
                let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                let wob = |k: usize| amp[k] * (2.0 * std::f64::consts::PI * osc * s + phase[k]).sin();
                [
                    (a[0] + s * (b[0] - a[0]) + wob(0)).clamp(m, room.dims[0] - m),
                    (a[1] + s * (b[1] - a[1]) + wob(1)).clamp(m, room.dims[1] - m),
                    z,
                ]
            })
            .collect();
        let c = room.center();
        if waypoints.iter().any(|&p| dist(p, c) < cfg.min_source_distance) {
            continue;
        }
        let traj = Trajectory { waypoints };
        let az = traj.frame_azimuths(room, frames);
        if az.windows(2).all(|w| (w[1] - w[0]).abs() < cfg.max_frame_step_deg) {
            return Ok(traj);
        }
    }
    Err(SimError::Placement(
        "no trajectory satisfied the distance and smoothness limits".into(),
    ))
}
