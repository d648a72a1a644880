//! Command implementations behind the `tfbimamba` binary.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tfbimamba::frontend::{frame_count, FRAME_LEN, HOP, SAMPLE_RATE};
use tfbimamba::io::{
    decode_wav, encode_wav, parse_labels, parse_manifest, parse_run_config, read_file, report_jsonl, to_jsonl,
    write_file, IoError, LabelRecord, LocateRecord, ManifestRecord, PredictionRecord, RunConfig,
};
use tfbimamba::metrics::{score_utterances, EvalReport, Scored};
use tfbimamba::net::{NetConfig, SpatialSpectrum, TfMamba};
use tfbimamba::numcore::{Checkpoint, ParamStore};
use tfbimamba::pipeline::{predict_network, predict_srp, prepare_example, Example};
use tfbimamba::sim::{planned_static_doa, render_utterance, split_size, utterance_seed, Assets, Split};
use tfbimamba::train::{EpochLog, Trainer};

/// Error with a short machine-readable category.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] IoError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Io(IoError::Config(_)) | CliError::Config(_) => "config",
            CliError::Io(IoError::File { .. }) => "io",
            CliError::Io(_) | CliError::Data(_) => "data",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Numeric(_) => "numeric",
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

/// Localisation method selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Network,
    SrpPhat,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tfmamba" | "model" => Ok(Method::Network),
            "srp-phat" | "srp" => Ok(Method::SrpPhat),
            _ => Err(format!("unknown method {s:?} (expected tfmamba or srp-phat)")),
        }
    }
}

/// Defaults, overlaid by the config file, overlaid by `--seed`.
pub fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = String::from_utf8(read_file(p)?).map_err(|_| CliError::Config("config is not utf-8".into()))?;
            parse_run_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_mono_dir(dir: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| IoError::File {
            path: dir.to_string(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let (ch, fs) = decode_wav(&read_file(p)?)?;
            if fs != SAMPLE_RATE as u32 {
                return Err(data(format!("{}: sample rate {fs}, expected 16000", p.display())));
            }
            Ok(ch.into_iter().next().unwrap_or_default())
        })
        .collect()
}

pub fn load_assets(cfg: &RunConfig) -> Result<Assets, CliError> {
    let mut a = Assets::default();
    if let Some(d) = &cfg.assets.source_dir {
        a.sources = load_mono_dir(d)?;
    }
    if let Some(d) = &cfg.assets.noise_dir {
        a.noises = load_mono_dir(d)?;
    }
    Ok(a)
}

fn labels_of(azimuth: &[f64], vad: &[bool]) -> Vec<LabelRecord> {
    azimuth
        .iter()
        .zip(vad)
        .enumerate()
        .map(|(frame, (&az, &active))| LabelRecord {
            frame,
            time: (frame * HOP + FRAME_LEN / 2) as f64 / SAMPLE_RATE,
            azimuth: az,
            active,
        })
        .collect()
}

/// Renders the requested splits under `out`, writes `manifest.jsonl` and the
/// resolved `config.toml`, and returns the manifest records.
pub fn simulate(cfg: &RunConfig, out: &Path, splits: &[Split]) -> Result<Vec<ManifestRecord>, CliError> {
    cfg.validate()?;
    let assets = load_assets(cfg)?;
    write_file(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let mut records = Vec::new();
    for &split in splits {
        let n = split_size(&cfg.sim, split);
        // Bounded chunks keep at most a few utterances in memory at once.
        for chunk in (0..n).collect::<Vec<_>>().chunks(16) {
            let rendered: Vec<Result<ManifestRecord, CliError>> = chunk
                .par_iter()
                .map(|&i| {
                    let seed = utterance_seed(cfg.seed, split, i);
                    let u = render_utterance(&cfg.sim, seed, planned_static_doa(&cfg.sim, i), &assets).map_err(data)?;
                    let id = format!("{}-{i:05}", split.name());
                    let wav = format!("{}/{id}.wav", split.name());
                    let labels = format!("{}/{id}.labels.jsonl", split.name());
                    write_file(&out.join(&wav), &encode_wav(&u.mixture, SAMPLE_RATE as u32)?)?;
                    write_file(&out.join(&labels), to_jsonl(&labels_of(&u.azimuth, &u.vad)).as_bytes())?;
                    if cfg.output.write_stems {
                        write_file(
                            &out.join(format!("{}/{id}.clean.wav", split.name())),
                            &encode_wav(&u.clean, SAMPLE_RATE as u32)?,
                        )?;
                        write_file(
                            &out.join(format!("{}/{id}.noise.wav", split.name())),
                            &encode_wav(&u.noise, SAMPLE_RATE as u32)?,
                        )?;
                    }
                    Ok(ManifestRecord {
                        id,
                        wav,
                        labels,
                        seed,
                        split: split.name().to_string(),
                        snr_db: u.meta.snr_db,
                        static_doa: u.meta.static_doa,
                        room: u.meta.room,
                    })
                })
                .collect();
            for r in rendered {
                records.push(r?);
            }
        }
    }
    write_file(&out.join("manifest.jsonl"), to_jsonl(&records).as_bytes())?;
    Ok(records)
}

/// Manifest records plus the directory their paths are relative to; every
/// referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<(PathBuf, Vec<ManifestRecord>), CliError> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| data("manifest is not utf-8"))?;
    let records = parse_manifest(&text)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for r in &records {
        for f in [&r.wav, &r.labels] {
            if !dir.join(f).is_file() {
                return Err(data(format!("{}: referenced file {f} does not exist", r.id)));
            }
        }
    }
    Ok((dir, records))
}

/// Two-channel 16 kHz recording.
pub fn read_stereo(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let (ch, fs) = decode_wav(&read_file(path)?)?;
    if fs != SAMPLE_RATE as u32 {
        return Err(data(format!("{}: sample rate {fs}, expected 16000", path.display())));
    }
    if ch.len() != 2 {
        return Err(data(format!("{}: {} channels, expected 2", path.display(), ch.len())));
    }
    Ok(ch)
}

/// A manifest entry read back from disk.
pub struct Loaded {
    pub record: ManifestRecord,
    pub wave: Vec<Vec<f64>>,
    pub azimuth: Vec<f64>,
    pub active: Vec<bool>,
}

pub fn load_split(dir: &Path, records: &[ManifestRecord], split: Split) -> Result<Vec<Loaded>, CliError> {
    records
        .par_iter()
        .filter(|r| r.split == split.name())
        .map(|r| {
            let wave = read_stereo(&dir.join(&r.wav))?;
            let text = String::from_utf8(read_file(&dir.join(&r.labels))?).map_err(|_| data("labels are not utf-8"))?;
            let labels = parse_labels(&text)?;
            if Some(labels.len()) != frame_count(wave[0].len()) {
                return Err(data(format!(
                    "{}: {} labels for {} samples",
                    r.id,
                    labels.len(),
                    wave[0].len()
                )));
            }
            Ok(Loaded {
                record: r.clone(),
                wave,
                azimuth: labels.iter().map(|l| l.azimuth).collect(),
                active: labels.iter().map(|l| l.active).collect(),
            })
        })
        .collect()
}

pub fn examples(loaded: &[Loaded], net: &NetConfig) -> Result<Vec<Example>, CliError> {
    loaded
        .par_iter()
        .map(|l| prepare_example(&l.record.id, &l.wave, &l.azimuth, &l.active, net).map_err(data))
        .collect()
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::from_bytes(&read_file(path)?).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Summary returned by [`train`].
pub struct TrainOutcome {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub log: Vec<EpochLog>,
}

/// Trains on the `train` split, monitoring `val`; writes `last.ckpt`,
/// `best.ckpt`, `config.toml` and `train_log.jsonl` under `out`.
pub fn train(cfg: &RunConfig, manifest: &Path, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let (dir, records) = load_manifest(manifest)?;
    let train_set = examples(&load_split(&dir, &records, Split::Train)?, &cfg.net)?;
    if train_set.is_empty() {
        return Err(data("train split is empty"));
    }
    let val_set = examples(&load_split(&dir, &records, Split::Val)?, &cfg.net)?;
    let model = TfMamba::new(cfg.net.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut trainer = match resume {
        Some(p) => {
            let best = p.with_file_name("best.ckpt");
            let best = if best.is_file() && best != p {
                Some(read_checkpoint(&best)?.params)
            } else {
                None
            };
            Trainer::resume(model, cfg.train.clone(), read_checkpoint(p)?, best)
                .map_err(|e| CliError::Checkpoint(e.to_string()))?
        }
        None => {
            Trainer::new(model, cfg.train.clone(), cfg.optim.clone()).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    write_file(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let mut log_text = String::new();
    let mut write_err = None;
    trainer
        .fit(&train_set, &val_set, |e, t| {
            eprintln!(
                "epoch {:>4} lr {:.2e} train {:.6} val {}{}",
                e.epoch,
                e.lr,
                e.train_loss,
                e.val_loss.map_or("-".to_string(), |v| format!("{v:.6}")),
                if e.improved { " *" } else { "" }
            );
            log_text += &to_jsonl(std::slice::from_ref(e));
            let res = write_file(&out.join("last.ckpt"), &t.checkpoint().to_bytes())
                .and_then(|_| write_file(&out.join("train_log.jsonl"), log_text.as_bytes()))
                .and_then(|_| {
                    if e.improved {
                        write_file(&out.join("best.ckpt"), &best_checkpoint(&t.best_params).to_bytes())
                    } else {
                        Ok(())
                    }
                });
            if let Err(err) = res {
                write_err.get_or_insert(err);
            }
        })
        .map_err(|e| match e {
            tfbimamba::train::TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => data(other),
        })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    Ok(TrainOutcome {
        epochs: trainer.epoch,
        best_epoch: trainer.best_epoch,
        best_loss: trainer.best_loss,
        log: trainer.log,
    })
}

fn best_checkpoint(params: &ParamStore) -> Checkpoint {
    Checkpoint {
        params: params.clone(),
        optim: None,
        meta: Default::default(),
    }
}

/// Network and parameters from a checkpoint and the `config.toml` stored
/// beside it; `expected` must agree with the stored network section.
pub fn load_model(checkpoint: &Path, expected: Option<&NetConfig>) -> Result<(TfMamba, ParamStore), CliError> {
    let cfg_path = checkpoint.with_file_name("config.toml");
    let stored = resolve_config(Some(&cfg_path), None)?;
    if let Some(e) = expected {
        if *e != stored.net {
            return Err(CliError::Config(format!(
                "network section differs from {}",
                cfg_path.display()
            )));
        }
    }
    let model = TfMamba::new(stored.net).map_err(|e| CliError::Config(e.to_string()))?;
    let params = read_checkpoint(checkpoint)?.params;
    let want = model.init(0);
    for (k, t) in &want {
        match params.get(k) {
            Some(p) if p.shape() == t.shape() => {}
            _ => return Err(CliError::Checkpoint(format!("parameter {k} missing or misshapen"))),
        }
    }
    if params.len() != want.len() {
        return Err(CliError::Checkpoint(
            "checkpoint has parameters the network does not use".into(),
        ));
    }
    Ok((model, params))
}

/// Estimates for one recording with either method, at the method's output
/// frame rate.
pub fn run_method(
    method: Method,
    wave: &[Vec<f64>],
    spacing: f64,
    model: Option<&(TfMamba, ParamStore)>,
    pool: usize,
) -> Result<(SpatialSpectrum, Vec<f64>), CliError> {
    match method {
        Method::SrpPhat => predict_srp(wave, spacing, pool).map_err(data),
        Method::Network => {
            let (m, p) = model.ok_or_else(|| CliError::Config("the tfmamba method needs --checkpoint".into()))?;
            let frames = frame_count(wave[0].len()).ok_or_else(|| data("recording shorter than one frame"))?;
            let ex = prepare_example("", wave, &vec![90.0; frames], &vec![false; frames], &m.config).map_err(data)?;
            predict_network(m, p, &ex).map_err(|e| CliError::Numeric(e.to_string()))
        }
    }
}

/// Scores `method` on one split; writes `report.jsonl` and
/// `predictions.jsonl` under `out` when given.
pub fn evaluate(
    method: Method,
    checkpoint: Option<&Path>,
    expected_net: Option<&NetConfig>,
    manifest: &Path,
    split: Split,
    out: Option<&Path>,
) -> Result<EvalReport, CliError> {
    let model = match (method, checkpoint) {
        (Method::Network, Some(c)) => Some(load_model(c, expected_net)?),
        (Method::Network, None) => return Err(CliError::Config("the tfmamba method needs --checkpoint".into())),
        _ => None,
    };
    let pool = model
        .as_ref()
        .map_or(expected_net.map_or(4, |n| n.pool_factor), |(m, _)| m.config.pool_factor);
    let (dir, records) = load_manifest(manifest)?;
    let loaded = load_split(&dir, &records, split)?;
    if loaded.is_empty() {
        return Err(data(format!("{} split is empty", split.name())));
    }
    let results: Vec<Result<(Scored, SpatialSpectrum), CliError>> = loaded
        .par_iter()
        .map(|l| {
            let (s, pred) = run_method(method, &l.wave, l.record.room.spacing(), model.as_ref(), pool)?;
            let (gt, mask) = tfbimamba::metrics::pooled_labels(&l.azimuth, &l.active, pool);
            let n = pred.len().min(gt.len());
            Ok((
                Scored {
                    id: l.record.id.clone(),
                    pred: pred[..n].to_vec(),
                    gt: gt[..n].to_vec(),
                    mask: mask[..n].to_vec(),
                },
                s,
            ))
        })
        .collect();
    let mut items = Vec::new();
    let mut predictions = Vec::new();
    for r in results {
        let (it, s) = r?;
        for f in 0..s.frames() {
            predictions.push(PredictionRecord {
                id: it.id.clone(),
                frame: f,
                values: s.frame(f).to_vec(),
            });
        }
        items.push(it);
    }
    let report = score_utterances(&items).map_err(data)?;
    if let Some(o) = out {
        write_file(&o.join("report.jsonl"), report_jsonl(&report).as_bytes())?;
        write_file(&o.join("predictions.jsonl"), to_jsonl(&predictions).as_bytes())?;
    }
    Ok(report)
}

/// Per-output-frame `(time, azimuth, peak)` for one recording.
pub fn locate(
    wav: &Path,
    method: Method,
    checkpoint: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Vec<LocateRecord>, CliError> {
    let wave = read_stereo(wav)?;
    let model = match checkpoint {
        Some(c) if method == Method::Network => Some(load_model(c, None)?),
        _ => None,
    };
    let pool = model
        .as_ref()
        .map_or(cfg.net.pool_factor, |(m, _)| m.config.pool_factor);
    let (s, doa) = run_method(method, &wave, cfg.sim.mic_spacing, model.as_ref(), pool)?;
    Ok(doa
        .iter()
        .enumerate()
        .map(|(j, &az)| LocateRecord {
            time: ((j * pool + pool / 2) * HOP + FRAME_LEN / 2) as f64 / SAMPLE_RATE,
            azimuth: az,
            peak: s.frame(j)[az as usize],
        })
        .collect())
}
