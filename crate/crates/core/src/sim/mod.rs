//! Dataset synthesis: rooms, moving-source trajectories, image-source RIRs,
//! moving-source rendering, diffuse noise and SNR mixing.

mod mix;
mod noise;
mod render;
mod rir;
mod room;
mod source;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mix::{active_samples, measured_snr, mix_snr, vad_mask, VAD_RANGE_DB};
pub use noise::{diffuse_coherence, diffuse_noise, welch_coherence, welch_frequency};
pub use render::{fft_convolve, moving_convolve, CROSSFADE};
pub use rir::{ism_rir, matched_reflection_coefficient, rir_length, schroeder_curve, schroeder_rt60, SINC_TAPS};
pub use room::{
    generate_trajectory, reflection_coefficient, sample_room, waypoint_count, AbsorptionModel, Point, RoomSpec,
    Trajectory, WAYPOINT_SPACING,
};
pub use source::{babble, speech_like, white_noise};

use crate::frontend::{frame_count, SAMPLE_RATE};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SimError {
    #[error("point {0:?} lies outside the room")]
    OutsideRoom(Point),
    #[error("trajectory has {waypoints} waypoints, signal needs {needed}")]
    TrajectoryTooShort { waypoints: usize, needed: usize },
    #[error("{0} power is zero over the active region")]
    ZeroPower(&'static str),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("placement failed: {0}")]
    Placement(String),
    #[error("invalid simulator configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    White,
    Babble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub room_min: Point,
    pub room_max: Point,
    pub rt60: [f64; 2],
    pub absorption: AbsorptionModel,
    /// Render every room without reflections.
    pub anechoic: bool,
    pub mic_spacing: f64,
    pub wall_margin: f64,
    pub mic_height: [f64; 2],
    pub max_perturbation: f64,
    pub oscillations: [f64; 2],
    pub min_source_distance: f64,
    pub max_frame_step_deg: f64,
    pub duration: f64,
    pub lead_in: [f64; 2],
    pub snr_db: [f64; 2],
    pub noise: NoiseKind,
    pub babble_talkers: usize,
    /// Render moving sources.
    pub moving: bool,
    /// Render static sources on the 5° azimuth grid. With `moving` also
    /// set, odd utterance indices are static.
    pub static_grid: bool,
    pub static_distance: [f64; 2],
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            room_min: [4.0, 2.0, 2.0],
            room_max: [10.0, 8.0, 5.0],
            rt60: [0.2, 0.6],
            absorption: AbsorptionModel::Matched,
            anechoic: false,
            mic_spacing: 0.08,
            wall_margin: 0.1,
            mic_height: [1.0, 2.0],
            max_perturbation: 0.5,
            oscillations: [1.0, 3.0],
            min_source_distance: 1.0,
            max_frame_step_deg: 5.0,
            duration: 4.0,
            lead_in: [0.1, 0.4],
            snr_db: [-10.0, 10.0],
            noise: NoiseKind::Babble,
            babble_talkers: 6,
            moving: true,
            static_grid: false,
            static_distance: [1.0, 2.5],
            n_train: 200,
            n_val: 40,
            n_test: 40,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        let ordered = |r: [f64; 2]| r[0] <= r[1];
        if (0..3).any(|i| self.room_min[i] > self.room_max[i] || self.room_min[i] <= 0.0) {
            return bad("room_min must be positive and not exceed room_max");
        }
        if !ordered(self.rt60) || self.rt60[0] < 0.0 {
            return bad("rt60 range must be ordered and non-negative");
        }
        if !ordered(self.snr_db) || !ordered(self.static_distance) || !ordered(self.lead_in) {
            return bad("ranges must be ordered");
        }
        if !ordered(self.oscillations) || !ordered(self.mic_height) {
            return bad("ranges must be ordered");
        }
        if self.mic_spacing <= 0.0 || self.duration * SAMPLE_RATE < crate::frontend::FRAME_LEN as f64 {
            return bad("mic_spacing must be positive and duration at least one frame");
        }
        if !self.moving && !self.static_grid {
            return bad("enable moving or static_grid rendering");
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.duration * SAMPLE_RATE).round() as usize
    }
}

/// Mono recordings to draw from instead of synthetic signals.
#[derive(Clone, Debug, Default)]
pub struct Assets {
    pub sources: Vec<Vec<f64>>,
    pub noises: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub room: RoomSpec,
    pub snr_db: Option<f64>,
    pub static_doa: Option<f64>,
    pub trajectory: Trajectory,
}

/// One rendered two-channel example with its per-frame labels. The
/// mixture equals `clean + noise` sample by sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub seed: u64,
    pub mixture: [Vec<f64>; 2],
    pub clean: [Vec<f64>; 2],
    pub noise: [Vec<f64>; 2],
    pub azimuth: Vec<f64>,
    pub vad: Vec<bool>,
    pub meta: UtteranceMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of utterance `index` in `split`, independent of rendering order.
pub fn utterance_seed(global: u64, split: Split, index: usize) -> u64 {
    splitmix64(splitmix64(global ^ split.tag().rotate_left(56)) ^ index as u64)
}

/// Static azimuth for utterance `index`: walks the 37-point 5° grid with a
/// stride coprime to 37 so short runs still spread across the half circle.
pub fn static_grid_doa(index: usize) -> f64 {
    ((index * 7) % 37) as f64 * 5.0
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn pick_crop<R: Rng>(rng: &mut R, pool: &[Vec<f64>], n: usize) -> Option<Vec<f64>> {
    let rec = pool.get(rng.gen_range(0..pool.len().max(1)))?;
    if rec.is_empty() {
        return None;
    }
    let start = if rec.len() > n {
        rng.gen_range(0..=rec.len() - n)
    } else {
        0
    };
    Some((0..n).map(|i| rec.get(start + i).copied().unwrap_or(0.0)).collect())
}

/// Renders one utterance. `static_doa` places a fixed source at that
/// azimuth; otherwise the source moves along a random trajectory.
pub fn render_utterance(
    cfg: &SimConfig,
    seed: u64,
    static_doa: Option<f64>,
    assets: &Assets,
) -> Result<Utterance, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.samples();
    let source = match pick_crop(&mut rng, &assets.sources, n) {
        Some(s) => s,
        None => {
            let lead = uniform(&mut rng, cfg.lead_in);
            speech_like(&mut rng, n, SAMPLE_RATE, lead)
        }
    };
    let (room, traj) = match static_doa {
        Some(doa) => {
            if !(0.0..=180.0).contains(&doa) {
                return Err(SimError::Config(format!("static azimuth {doa} outside [0, 180]")));
            }
            let mut placed = None;
            for _ in 0..1000 {
                let room = sample_room(&mut rng, cfg)?;
                let r = uniform(&mut rng, cfg.static_distance);
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let p = room.point_at(doa, r, side);
                if room.contains(p, cfg.wall_margin) {
                    placed = Some((room, p));
                    break;
                }
            }
            let (room, p) = placed.ok_or_else(|| SimError::Placement(format!("static source at {doa}°")))?;
            (room, Trajectory::fixed(p, waypoint_count(n)))
        }
        None => {
            let room = sample_room(&mut rng, cfg)?;
            let traj = generate_trajectory(&room, &mut rng, cfg, n, None)?;
            (room, traj)
        }
    };
    let mut room = room;
    if cfg.anechoic {
        room.rt60 = 0.0;
        room.beta = 0.0;
    }
    let clean = moving_convolve(&source, &traj, &room)?;
    let frames = frame_count(n).expect("validated duration");
    let vad = vad_mask(&source);
    let azimuth = traj.frame_azimuths(&room, frames);
    let (noise, snr_db) = match cfg.noise {
        NoiseKind::None => ([vec![0.0; n], vec![0.0; n]], None),
        kind => {
            let mono = match pick_crop(&mut rng, &assets.noises, n) {
                Some(m) => m,
                None if kind == NoiseKind::White => white_noise(&mut rng, n),
                None => babble(&mut rng, n, SAMPLE_RATE, cfg.babble_talkers),
            };
            let field = diffuse_noise(&mono, n, room.spacing(), room.c, room.fs, &mut rng);
            let snr = uniform(&mut rng, cfg.snr_db);
            let (_, gain) = mix_snr(&clean, &field, snr, &vad)?;
            (field.map(|c| c.into_iter().map(|v| v * gain).collect()), Some(snr))
        }
    };
    let peak = (0..n).fold(0.0f64, |a, i| {
        a.max((clean[0][i] + noise[0][i]).abs())
            .max((clean[1][i] + noise[1][i]).abs())
    });
    let scale = if peak > 0.0 { 0.5 / peak } else { 1.0 };
    let rescale = |x: [Vec<f64>; 2]| x.map(|c| c.into_iter().map(|v| v * scale).collect::<Vec<f64>>());
    let (clean, noise) = (rescale(clean), rescale(noise));
    let mixture = [0, 1].map(|c| clean[c].iter().zip(&noise[c]).map(|(a, b)| a + b).collect::<Vec<f64>>());
    Ok(Utterance {
        seed,
        mixture,
        clean,
        noise,
        azimuth,
        vad,
        meta: UtteranceMeta {
            room,
            snr_db,
            static_doa,
            trajectory: traj,
        },
    })
}

/// Static azimuth used for utterance `index` under `cfg`, if any.
pub fn planned_static_doa(cfg: &SimConfig, index: usize) -> Option<f64> {
    match (cfg.moving, cfg.static_grid) {
        (_, false) => None,
        (false, true) => Some(static_grid_doa(index)),
        (true, true) => (index % 2 == 1).then(|| static_grid_doa(index / 2)),
    }
}

pub fn split_size(cfg: &SimConfig, split: Split) -> usize {
    match split {
        Split::Train => cfg.n_train,
        Split::Val => cfg.n_val,
        Split::Test => cfg.n_test,
    }
}

/// Renders every utterance of `split`; output order is index order no
/// matter how work is scheduled.
pub fn render_split(
    cfg: &SimConfig,
    global_seed: u64,
    split: Split,
    assets: &Assets,
) -> Result<Vec<Utterance>, SimError> {
    (0..split_size(cfg, split))
        .into_par_iter()
        .map(|i| {
            render_utterance(
                cfg,
                utterance_seed(global_seed, split, i),
                planned_static_doa(cfg, i),
                assets,
            )
        })
        .collect()
}
