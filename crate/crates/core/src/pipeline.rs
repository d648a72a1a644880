//! Glue between rendered audio, network inputs and scored estimates.

use crate::baseline::{srp_phat, SteeringGrid};
use crate::frontend::{assemble_features, stft, FrontendError, SPEED_OF_SOUND};
use crate::metrics::{pooled_labels, score_utterances, EvalReport, MetricsError, Scored};
use crate::net::{decode_doa, encode_target, NetConfig, NetError, SpatialSpectrum, TfMamba, N_DOA};
use crate::numcore::{ParamStore, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One utterance prepared for training or scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    /// `[frames][bins][4]` network input at the STFT frame rate.
    pub features: Tensor,
    /// Labels and activity at the output frame rate.
    pub azimuth: Vec<f64>,
    pub active: Vec<bool>,
    pub target: SpatialSpectrum,
}

impl Example {
    pub fn frames(&self) -> usize {
        self.features.shape()[0]
    }
}

/// Builds an example from a two-channel waveform and per-STFT-frame labels.
pub fn prepare_example(
    id: &str,
    wave: &[Vec<f64>],
    azimuth: &[f64],
    vad: &[bool],
    net: &NetConfig,
) -> Result<Example, PipelineError> {
    let spec = stft(wave)?;
    let features = assemble_features(&spec)?.frames_bins_channels();
    let (azimuth, active) = pooled_labels(azimuth, vad, net.pool_factor);
    let target = encode_target(&azimuth, &active, net.target_sigma, net.output_rate())?;
    Ok(Example {
        id: id.to_string(),
        features,
        azimuth,
        active,
        target,
    })
}

/// Averages every `factor` consecutive frames of a spectrum, dropping a
/// partial tail.
pub fn pool_spectrum(s: &SpatialSpectrum, factor: usize) -> SpatialSpectrum {
    let n = s.frames() / factor;
    let mut values = vec![0.0; n * N_DOA];
    for j in 0..n {
        let out = &mut values[j * N_DOA..(j + 1) * N_DOA];
        for f in j * factor..(j + 1) * factor {
            for (o, v) in out.iter_mut().zip(s.frame(f)) {
                *o += v / factor as f64;
            }
        }
    }
    SpatialSpectrum::new(values, s.frame_rate / factor as f64)
}

/// Network estimate for one example, one azimuth per output frame.
pub fn predict_network(
    model: &TfMamba,
    params: &ParamStore,
    ex: &Example,
) -> Result<(SpatialSpectrum, Vec<f64>), PipelineError> {
    let s = model.predict(params, &ex.features)?;
    let doa = decode_doa(&s);
    Ok((s, doa))
}

/// SRP-PHAT spectra integrated over the same windows as the network's
/// pooling, so both methods are scored on identical frames.
pub fn predict_srp(wave: &[Vec<f64>], spacing: f64, pool: usize) -> Result<(SpatialSpectrum, Vec<f64>), PipelineError> {
    let spec = stft(wave)?;
    let s = pool_spectrum(&srp_phat(&spec, &SteeringGrid::new(spacing, SPEED_OF_SOUND)), pool);
    let doa = decode_doa(&s);
    Ok((s, doa))
}

pub fn evaluate_network(
    model: &TfMamba,
    params: &ParamStore,
    examples: &[Example],
) -> Result<EvalReport, PipelineError> {
    let mut items = Vec::with_capacity(examples.len());
    for ex in examples {
        let (_, pred) = predict_network(model, params, ex)?;
        items.push(Scored {
            id: ex.id.clone(),
            pred,
            gt: ex.azimuth.clone(),
            mask: ex.active.clone(),
        });
    }
    Ok(score_utterances(&items)?)
}
