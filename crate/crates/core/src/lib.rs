//! Two-microphone sound source localization with a time-frequency
//! bidirectional selective state-space network.

pub mod baseline;
pub mod frontend;
pub mod io;
pub mod metrics;
pub mod net;
pub mod numcore;
pub mod pipeline;
pub mod sim;
pub mod ssm;
pub mod train;
