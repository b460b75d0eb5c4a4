pub mod error;
pub mod gridio;
pub mod harness;
pub mod noise;
pub mod oracle;
pub mod params;
pub mod phasespace;
pub mod pool;
pub mod quadrature;
pub mod transfer;

pub use error::{Error, Result};
pub use harness::{run_sweep, Report, ReportRow, SweepAxis, SweepGrid, SweepSpec};
pub use noise::{NoiseCovariance, NoiseModel, SpectrumComponents, VarianceBreakdown};
pub use oracle::{
    estimate_psd, sample_variance, simulate, simulate_ensemble, PsdEstimate, SampleMoments,
    TraceRecord, TrajectoryConfig,
};
pub use params::{
    derive, validate, DerivedParams, Diagnostic, GainPolicy, GainRule, Severity, SystemConfig,
};
pub use phasespace::{
    fidelity, transfer_wigner, wigner_state, Fidelity, GainHandling, GridSpec, PhaseSpaceGrid,
    StateKind, StateSpec,
};
pub use transfer::{gains_analytic, gains_numeric, Gains, ResponseModel};
