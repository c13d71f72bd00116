//! Allocation-sweep experiments on frozen or pre-trained representations.

pub mod allocation;
pub mod encoder;
pub mod metrics;
pub mod probe;
pub mod sweep;

pub use allocation::{resample, AllocationSpec};
pub use encoder::{embed, pretrain_encoder, EncoderConfig, EncoderParams};
pub use probe::{train_probe, Probe, ProbeConfig};
pub use sweep::{holdout, run_sweep, run_sweep_with, GroupMetrics, RunRecord, SweepResult};
