//! On-disk formats: 16-bit PCM WAV, line-delimited JSON manifests, labels,
//! predictions and reports, and the TOML run configuration.

use std::collections::HashSet;
use std::io::Cursor;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::metrics::EvalReport;
use crate::net::NetConfig;
use crate::numcore::OptimConfig;
use crate::sim::{RoomSpec, SimConfig};
use crate::train::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("wav: {0}")]
    Wav(String),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("duplicate utterance id {0}")]
    DuplicateId(String),
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let wrap = |source| IoError::File {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(wrap)?;
    }
    std::fs::write(path, bytes).map_err(wrap)
}

/// Full-scale 16-bit quantisation with clipping.
fn to_i16(x: f64) -> i16 {
    (x * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Interleaved 16-bit PCM WAV bytes for equal-length channels.
pub fn encode_wav(channels: &[Vec<f64>], sample_rate: u32) -> Result<Vec<u8>, IoError> {
    let n = channels.first().map_or(0, Vec::len);
    if channels.is_empty() || channels.iter().any(|c| c.len() != n) {
        return Err(IoError::Wav("channels must be non-empty and of equal length".into()));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).map_err(|e| IoError::Wav(e.to_string()))?;
        for i in 0..n {
            for c in channels {
                w.write_sample(to_i16(c[i])).map_err(|e| IoError::Wav(e.to_string()))?;
            }
        }
        w.finalize().map_err(|e| IoError::Wav(e.to_string()))?;
    }
    Ok(buf.into_inner())
}

/// De-interleaved channels scaled to `[-1, 1)` and the sample rate. Only
/// 16-bit integer PCM is accepted.
pub fn decode_wav(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, u32), IoError> {
    let mut r = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| IoError::Wav(e.to_string()))?;
    let spec = r.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(IoError::Wav(format!(
            "expected 16-bit integer PCM, got {} bits {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let nc = spec.channels as usize;
    if nc == 0 {
        return Err(IoError::Wav("zero channels".into()));
    }
    let mut out = vec![Vec::new(); nc];
    for (i, s) in r.samples::<i16>().enumerate() {
        let s = s.map_err(|e| IoError::Wav(e.to_string()))?;
        out[i % nc].push(f64::from(s) / 32768.0);
    }
    if out.iter().any(|c| c.len() != out[0].len()) {
        return Err(IoError::Wav("truncated final frame".into()));
    }
    Ok((out, spec.sample_rate))
}

/// One JSON object per line, each terminated by `\n`.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s += &serde_json::to_string(r).expect("records serialize");
        s.push('\n');
    }
    s
}

/// Parses line-delimited JSON, skipping blank lines.
pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Record {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    /// Paths relative to the manifest's directory.
    pub wav: String,
    pub labels: String,
    pub seed: u64,
    pub split: String,
    pub snr_db: Option<f64>,
    pub static_doa: Option<f64>,
    pub room: RoomSpec,
}

/// Parses a manifest and rejects duplicate ids.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, IoError> {
    let recs: Vec<ManifestRecord> = from_jsonl(text)?;
    let mut seen = HashSet::new();
    for r in &recs {
        if !seen.insert(r.id.as_str()) {
            return Err(IoError::DuplicateId(r.id.clone()));
        }
    }
    Ok(recs)
}

/// Ground truth of one STFT frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub frame: usize,
    pub time: f64,
    pub azimuth: f64,
    pub active: bool,
}

/// Parses labels; frames must be numbered `0, 1, 2, ...` and azimuths lie
/// in `[0, 180]`.
pub fn parse_labels(text: &str) -> Result<Vec<LabelRecord>, IoError> {
    let recs: Vec<LabelRecord> = from_jsonl(text)?;
    for (i, r) in recs.iter().enumerate() {
        if r.frame != i {
            return Err(IoError::Record {
                line: i + 1,
                message: format!("expected frame {i}, found {}", r.frame),
            });
        }
        if !(0.0..=180.0).contains(&r.azimuth) || !r.time.is_finite() {
            return Err(IoError::Record {
                line: i + 1,
                message: format!("azimuth {} or time {} out of range", r.azimuth, r.time),
            });
        }
    }
    Ok(recs)
}

/// One output frame of a spatial spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub frame: usize,
    pub values: Vec<f64>,
}

/// One line of `locate` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocateRecord {
    pub time: f64,
    pub azimuth: f64,
    pub peak: f64,
}

#[derive(Serialize)]
struct ReportLine<'a> {
    id: &'a str,
    mae_deg: f64,
    acc10: f64,
    acc15: f64,
    n_frames: usize,
}

/// Per-utterance lines followed by an `overall` line.
pub fn report_jsonl(r: &EvalReport) -> String {
    let mut lines: Vec<ReportLine> = r
        .per_utterance
        .iter()
        .map(|u| ReportLine {
            id: &u.id,
            mae_deg: u.mae_deg,
            acc10: u.acc10,
            acc15: u.acc15,
            n_frames: u.n_frames,
        })
        .collect();
    lines.push(ReportLine {
        id: "overall",
        mae_deg: r.mae_deg,
        acc10: r.acc10,
        acc15: r.acc15,
        n_frames: r.n_frames,
    });
    to_jsonl(&lines)
}

/// Every tunable of a run; sections default independently and unknown keys
/// are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub net: NetConfig,
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
    pub assets: AssetConfig,
}

/// Directories of mono 16 kHz WAV files used in place of synthetic signals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssetConfig {
    pub source_dir: Option<String>,
    pub noise_dir: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Also write the clean and noise components next to each mixture.
    pub write_stems: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        self.sim.validate().map_err(|e| IoError::Config(e.to_string()))?;
        self.net.validate().map_err(|e| IoError::Config(e.to_string()))?;
        if self.train.batch_size == 0 {
            return Err(IoError::Config("train.batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, IoError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| IoError::Config(e.to_string().trim().replace('\n', " ")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_within_quantisation() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin() * 0.5).collect();
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        let bytes = encode_wav(&[a.clone(), b], 16_000).unwrap();
        let (ch, fs) = decode_wav(&bytes).unwrap();
        assert_eq!((ch.len(), fs), (2, 16_000));
        assert!(ch[0].iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-4));
        assert!(decode_wav(b"RIFF").is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(parse_run_config("seed = 3\n[net]\nmodel_width = 8\n").is_ok());
        assert!(parse_run_config("bogus = 1\n").is_err());
        assert!(parse_run_config("[net]\nwidth = 8\n").is_err());
        let c = RunConfig::default();
        assert_eq!(parse_run_config(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn labels_must_be_sequential() {
        let ok = "{\"frame\":0,\"time\":0.016,\"azimuth\":90.0,\"active\":true}\n";
        assert_eq!(parse_labels(ok).unwrap().len(), 1);
        let bad = "{\"frame\":1,\"time\":0.016,\"azimuth\":90.0,\"active\":true}\n";
        assert!(parse_labels(bad).is_err());
    }
}
