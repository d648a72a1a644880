//! Selective state-space core: discretisation, sequential and tree scans, the
//! time-invariant convolution kernel, and the bidirectional layer.

mod bimamba;
mod scan;

pub use bimamba::{bimamba_forward, BiMamba, BiMambaConfig, Direction};
pub use scan::{
    causal_convolve, discretize, scan_parallel, scan_sequential, ssm_kernel, Discretized, ScanInputs, ScanShape,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SsmError {
    #[error("step size must be positive, got {value} at {index}")]
    NonPositiveDelta { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite state at step {index}")]
    NonFinite { index: usize },
    #[error("kernel length must be at least 1")]
    EmptyKernel,
}
