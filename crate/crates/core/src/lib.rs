//! Downlink zero-forcing MU-MIMO under per-terminal spatial correlation.
//!
//! The crate builds correlation matrices (exponential, Clerckx, one-ring),
//! drops terminals in a single cell, evaluates the exact ZF SNR by Monte
//! Carlo and compares it with a closed-form approximation that depends on
//! the correlation set only through Tr[R̄²], the squared Frobenius norm of
//! the average correlation matrix.
//!
//! ```
//! use corrdiv::{build_exponential, expected_zf_snr_closed_form};
//!
//! let r = build_exponential(64, 0.9).unwrap();
//! let snr = expected_zf_snr_closed_form(1.0, 64, 6, r.trace_of_square(), 1.0, 1.0).unwrap();
//! assert!(snr > 0.0);
//! ```

pub mod corr;
pub mod error;
pub mod montecarlo;
pub mod propagation;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod zf;

pub use corr::{
    average_correlation, build_clerckx, build_exponential, build_one_ring, factor, AverageCorrelation,
    CorrelationFactor, CorrelationMatrix, CorrelationModelSpec, DoaSpec, SpreadSpec, TerminalCorrelation,
};
pub use error::{Error, Result};
pub use montecarlo::{
    median_gain_db, run_drop, run_scenario, DropResult, Percentiles, RunSummary, Scenario, ScenarioResult,
};
pub use propagation::{
    calibrate_attenuation_constant, sample_angular_params, sample_link_gain, sample_terminal_geometry, Calibration,
    GeometryConfig, MeasuredAngularModel, TerminalProfile,
};
pub use stats::{empirical_cdf, EmpiricalCdf};
pub use zf::{
    expected_sum_se_closed_form, expected_zf_snr_closed_form, moment_trace_gram_squared, neumann_trace_inverse,
    sample_channel, zf_eta_exact, zf_snr_instantaneous, ChannelMatrix, ClosedFormVariant, SnrReport,
};

/// 10·log10 of a power ratio.
#[inline]
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[inline]
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
