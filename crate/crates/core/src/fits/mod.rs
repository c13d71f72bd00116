//! Sensitivity summaries fitted to sweep output.

pub mod correlate;
pub mod linear;
pub mod powerlaw;

pub use correlate::{correlate, CorrelationReport, SeparationAxis};
pub use linear::{delta_endpoint, fit_linear, EndpointGap, SensitivityFit};
pub use powerlaw::{fit_powerlaw, fit_powerlaw_sweep, PowerLawBounds, PowerLawFit, PowerLawParams, PowerLawPoint};
