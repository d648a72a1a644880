//! The time-frequency network: feature encoder, stacked TF blocks with
//! inter-block skips, and the spatial-spectrum decoder.

mod model;
mod spectrum;

pub use model::{width_nearest_param_count, NetConfig, Skips, Stage, TfMamba, DEFAULT_WIDTH};

pub use spectrum::{decode_doa, encode_target, mse_loss, SpatialSpectrum, N_DOA};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetError {
    #[error("azimuth {0} outside [0, 180]")]
    AzimuthRange(f64),
    #[error("every frame is masked")]
    AllMasked,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Num(#[from] crate::numcore::NumError),
}
