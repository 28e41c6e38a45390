//! Drops × fading-trial orchestration and run summaries.
//!
//! A drop fixes terminal geometry, shadowing and correlation matrices. Within
//! a drop the ZF SNR is averaged over `n_fading` channel realizations and
//! compared to the closed form built from the same matrices and link gains.
//! Drops are independent and may run on any number of workers; every random
//! draw comes from a stream addressed by (seed, drop, trial), so results do
//! not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::{average_correlation, factor, CorrelationFactor, CorrelationModelSpec};
use crate::error::{Error, Result};
use crate::propagation::{
    sample_correlation_params, sample_link_gain, sample_terminal_geometry, GeometryConfig, MeasuredAngularModel,
    TerminalProfile,
};
use crate::rng::{substream, StreamKind};
use crate::stats::empirical_cdf;
use crate::zf::{expected_zf_snr_closed_form_variant, sample_channel, trace_gram_inverse, ClosedFormVariant};
use crate::{from_db, to_db};

/// A drop is aborted when more than this fraction of its trials is rejected.
pub const MAX_REJECTED_FRACTION: f64 = 0.05;
/// A run fails when more than this fraction of its drops aborts.
pub const MAX_ABORTED_DROP_FRACTION: f64 = 0.01;

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Base station antennas.
    pub m: usize,
    /// Served terminals.
    pub l: usize,
    pub rho_t_db: f64,
    pub sigma2: f64,
    pub model: CorrelationModelSpec,
    pub geometry: GeometryConfig,
    /// Angular-parameter fit used by measured one-ring draws. Defaults apply when absent.
    pub measured_model: Option<MeasuredAngularModel>,
    pub n_drops: usize,
    pub n_fading: usize,
    pub seed: u64,
    pub closed_form: ClosedFormVariant,
}

impl Scenario {
    /// M = 64, L = 6, ρ_t = 5 dB, exponential ξ = 0.9, 200 drops × 500 trials.
    pub fn baseline() -> Self {
        Self {
            m: 64,
            l: 6,
            rho_t_db: 5.0,
            sigma2: 1.0,
            model: CorrelationModelSpec::Exponential { xi: 0.9 },
            geometry: GeometryConfig::default(),
            measured_model: None,
            n_drops: 200,
            n_fading: 500,
            seed: 1,
            closed_form: ClosedFormVariant::Derived,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m", "number of antennas must be at least 1"));
        }
        if self.l == 0 || self.l > self.m {
            return Err(Error::invalid("l", format!("need 1 <= L <= M, got L = {}, M = {}", self.l, self.m)));
        }
        if !self.rho_t_db.is_finite() {
            return Err(Error::invalid("rho_t_db", "transmit SNR must be finite"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid("sigma2", format!("noise power must be positive, got {}", self.sigma2)));
        }
        if self.n_drops == 0 {
            return Err(Error::invalid("n_drops", "need at least one drop"));
        }
        if self.n_fading == 0 || self.n_fading > u32::MAX as usize {
            return Err(Error::invalid("n_fading", "need between 1 and 2^32-1 fading trials"));
        }
        self.model.validate()?;
        self.geometry.validate()?;
        self.measured_model().validate()?;
        Ok(())
    }

    pub fn measured_model(&self) -> MeasuredAngularModel {
        self.measured_model.unwrap_or_default()
    }

    pub fn rho_t_linear(&self) -> f64 {
        from_db(self.rho_t_db)
    }

    /// Scenarios are comparable when they share dimensions, seed and geometry,
    /// so drops line up one-to-one.
    pub fn check_comparable(&self, other: &Scenario) -> Result<()> {
        let mismatch = |what: &str| Error::invalid("scenario", format!("scenarios differ in {what}"));
        if self.m != other.m {
            return Err(mismatch("m"));
        }
        if self.l != other.l {
            return Err(mismatch("l"));
        }
        if self.seed != other.seed {
            return Err(mismatch("seed"));
        }
        if self.geometry != other.geometry {
            return Err(mismatch("geometry"));
        }
        Ok(())
    }
}

/// Fading-averaged outcome of one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropResult {
    pub drop_index: u64,
    pub terminals: Vec<TerminalProfile>,
    /// 10·log10(ρβ_ℓ/σ² · mean over trials of 1/η).
    pub per_terminal_expected_snr_db: Vec<f64>,
    pub per_terminal_closed_form_snr_db: Vec<f64>,
    pub sum_se_sim_bits: f64,
    pub sum_se_cf_bits: f64,
    /// Tr[R̄²] of this drop's correlation matrices.
    pub trace_sq: f64,
    /// Mean of Tr[(HHᴴ)⁻¹] over accepted trials.
    pub mean_trace_inverse: f64,
    /// Coefficient of variation of η across trials.
    pub eta_cv: f64,
    pub rejected_trials: usize,
}

impl DropResult {
    /// Simulated minus closed-form expected SNR in dB. Link gains cancel, so
    /// the gap is common to all terminals of the drop.
    pub fn gap_db(&self) -> f64 {
        self.per_terminal_expected_snr_db[0] - self.per_terminal_closed_form_snr_db[0]
    }
}

struct DropSetup {
    terminals: Vec<TerminalProfile>,
    factors: Vec<CorrelationFactor>,
    trace_sq: f64,
}

fn setup_drop(scenario: &Scenario, drop_index: u64) -> Result<DropSetup> {
    let measured = scenario.measured_model();
    let mut geo_rng = substream(scenario.seed, StreamKind::Geometry, drop_index, 0);
    let mut corr_rng = substream(scenario.seed, StreamKind::Correlation, drop_index, 0);
    let mut terminals = Vec::with_capacity(scenario.l);
    let mut matrices = Vec::with_capacity(scenario.l);
    for _ in 0..scenario.l {
        let (distance_m, azimuth_deg) = sample_terminal_geometry(&scenario.geometry, &mut geo_rng);
        let (shadowing_linear, link_gain) = sample_link_gain(&scenario.geometry, distance_m, &mut geo_rng);
        let correlation = sample_correlation_params(&scenario.model, &measured, &mut corr_rng);
        matrices.push(correlation.build(scenario.m)?);
        terminals.push(TerminalProfile { distance_m, azimuth_deg, shadowing_linear, link_gain, correlation });
    }
    // Fixed-profile models share one matrix, so factor it once.
    let factors = if matches!(scenario.model, CorrelationModelSpec::Identity | CorrelationModelSpec::Exponential { .. }) {
        vec![factor(&matrices[0])?; scenario.l]
    } else {
        matrices.iter().map(factor).collect::<Result<Vec<_>>>()?
    };
    let trace_sq = average_correlation(&matrices)?.trace_sq;
    Ok(DropSetup { terminals, factors, trace_sq })
}

/// Runs the fading trials of a drop, returning Tr[(HHᴴ)⁻¹] per accepted
/// trial and the number of rejected draws. Rejected draws are replaced by
/// further draws from the same trial stream.
fn trace_inverse_trials(scenario: &Scenario, drop_index: u64, factors: &[CorrelationFactor]) -> Result<(Vec<f64>, usize)> {
    let max_rejected = (MAX_REJECTED_FRACTION * scenario.n_fading as f64).floor() as usize;
    let mut traces = Vec::with_capacity(scenario.n_fading);
    let mut rejected = 0;
    for trial in 0..scenario.n_fading {
        let mut rng = substream(scenario.seed, StreamKind::Fading, drop_index, trial as u32);
        loop {
            let h = sample_channel(factors, &mut rng)?;
            match trace_gram_inverse(&h) {
                Ok(t) => {
                    traces.push(t);
                    break;
                }
                Err(Error::IllConditioned { .. }) => {
                    rejected += 1;
                    if rejected > max_rejected {
                        return Err(Error::ExcessRejections {
                            drop_index,
                            rejected,
                            attempted: trial + 1,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok((traces, rejected))
}

/// Simulates one drop. Deterministic in (scenario, drop_index).
pub fn run_drop(scenario: &Scenario, drop_index: u64) -> Result<DropResult> {
    scenario.validate()?;
    run_drop_unchecked(scenario, drop_index)
}

fn run_drop_unchecked(scenario: &Scenario, drop_index: u64) -> Result<DropResult> {
    let setup = setup_drop(scenario, drop_index)?;
    let (traces, rejected_trials) = trace_inverse_trials(scenario, drop_index, &setup.factors)?;

    let l = scenario.l as f64;
    let rho = scenario.rho_t_linear();
    let sigma2 = scenario.sigma2;
    let n = traces.len() as f64;
    let etas: Vec<f64> = traces.iter().map(|t| t / l).collect();
    let mean_inv_eta = etas.iter().map(|e| 1.0 / e).sum::<f64>() / n;
    let mean_eta = etas.iter().sum::<f64>() / n;
    let var_eta = etas.iter().map(|e| (e - mean_eta).powi(2)).sum::<f64>() / n;

    let betas: Vec<f64> = setup.terminals.iter().map(|t| t.link_gain).collect();
    let sum_se_sim_bits = etas
        .iter()
        .map(|eta| betas.iter().map(|b| (1.0 + rho * b / (sigma2 * eta)).log2()).sum::<f64>())
        .sum::<f64>()
        / n;

    let mut sim_db = Vec::with_capacity(scenario.l);
    let mut cf_db = Vec::with_capacity(scenario.l);
    let mut sum_se_cf_bits = 0.0;
    for &b in &betas {
        sim_db.push(to_db(rho * b / sigma2 * mean_inv_eta));
        let cf = expected_zf_snr_closed_form_variant(
            scenario.closed_form,
            b,
            scenario.m,
            scenario.l,
            setup.trace_sq,
            rho,
            sigma2,
        )?;
        cf_db.push(to_db(cf));
        sum_se_cf_bits += (1.0 + cf).log2();
    }

    Ok(DropResult {
        drop_index,
        terminals: setup.terminals,
        per_terminal_expected_snr_db: sim_db,
        per_terminal_closed_form_snr_db: cf_db,
        sum_se_sim_bits,
        sum_se_cf_bits,
        trace_sq: setup.trace_sq,
        mean_trace_inverse: traces.iter().sum::<f64>() / n,
        eta_cv: var_eta.sqrt() / mean_eta,
        rejected_trials,
    })
}

/// Pooled instantaneous ZF SNR samples (linear) over all drops, trials and
/// terminals, plus the total number of rejected trials. Single-threaded.
pub fn instantaneous_snr_samples(scenario: &Scenario) -> Result<(Vec<f64>, usize)> {
    scenario.validate()?;
    let rho = scenario.rho_t_linear();
    let l = scenario.l as f64;
    let mut samples = Vec::with_capacity(scenario.n_drops * scenario.n_fading * scenario.l);
    let mut rejected = 0;
    for d in 0..scenario.n_drops as u64 {
        let setup = setup_drop(scenario, d)?;
        let (traces, r) = trace_inverse_trials(scenario, d, &setup.factors)?;
        rejected += r;
        for t in traces {
            let eta = t / l;
            samples.extend(setup.terminals.iter().map(|p| rho * p.link_gain / (scenario.sigma2 * eta)));
        }
    }
    Ok((samples, rejected))
}

/// Mean, median and tail percentiles of a pooled quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of(samples: &[f64]) -> Result<Self> {
        let cdf = empirical_cdf(samples)?;
        Ok(Self { mean: cdf.mean(), median: cdf.median(), p5: cdf.percentile(5.0), p95: cdf.percentile(95.0) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub drops: usize,
    pub aborted_drops: usize,
    /// Simulated expected SNR (dB), pooled over drops and terminals.
    pub expected_snr_db: Percentiles,
    pub closed_form_snr_db: Percentiles,
    pub sum_se_sim_bits: Percentiles,
    pub sum_se_cf_bits: Percentiles,
    /// Per-drop |simulated − closed-form| expected SNR in dB.
    pub mean_abs_gap_db: f64,
    pub median_abs_gap_db: f64,
    pub mean_trace_sq: f64,
    pub mean_eta_cv: f64,
    pub rejected_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    /// Completed drops in index order.
    pub drops: Vec<DropResult>,
    pub aborted: Vec<(u64, Error)>,
    pub summary: RunSummary,
}

impl ScenarioResult {
    pub fn expected_snr_db(&self) -> Vec<f64> {
        self.drops.iter().flat_map(|d| d.per_terminal_expected_snr_db.iter().copied()).collect()
    }

    pub fn closed_form_snr_db(&self) -> Vec<f64> {
        self.drops.iter().flat_map(|d| d.per_terminal_closed_form_snr_db.iter().copied()).collect()
    }
}

/// Runs every drop of a scenario. `workers = 0` uses the default thread pool
/// size. The result is identical for any worker count.
pub fn run_scenario(scenario: &Scenario, workers: usize) -> Result<ScenarioResult> {
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    let outcomes: Vec<(u64, Result<DropResult>)> = pool.install(|| {
        (0..scenario.n_drops as u64)
            .into_par_iter()
            .map(|d| (d, run_drop_unchecked(scenario, d)))
            .collect()
    });

    let mut drops = Vec::with_capacity(scenario.n_drops);
    let mut aborted = Vec::new();
    for (d, outcome) in outcomes {
        match outcome {
            Ok(r) => drops.push(r),
            Err(e) => aborted.push((d, e)),
        }
    }
    if aborted.len() as f64 > MAX_ABORTED_DROP_FRACTION * scenario.n_drops as f64 || drops.is_empty() {
        return Err(Error::RunFailed {
            failed: aborted.len(),
            total: scenario.n_drops,
            first: Box::new(aborted[0].1.clone()),
        });
    }
    let summary = summarize(&drops, aborted.len())?;
    Ok(ScenarioResult { drops, aborted, summary })
}

pub fn summarize(drops: &[DropResult], aborted_drops: usize) -> Result<RunSummary> {
    let pooled = |f: fn(&DropResult) -> &Vec<f64>| -> Vec<f64> { drops.iter().flat_map(|d| f(d).iter().copied()).collect() };
    let per_drop = |f: fn(&DropResult) -> f64| -> Vec<f64> { drops.iter().map(f).collect() };
    let gaps = per_drop(|d| d.gap_db().abs());
    let n = drops.len() as f64;
    Ok(RunSummary {
        drops: drops.len(),
        aborted_drops,
        expected_snr_db: Percentiles::of(&pooled(|d| &d.per_terminal_expected_snr_db))?,
        closed_form_snr_db: Percentiles::of(&pooled(|d| &d.per_terminal_closed_form_snr_db))?,
        sum_se_sim_bits: Percentiles::of(&per_drop(|d| d.sum_se_sim_bits))?,
        sum_se_cf_bits: Percentiles::of(&per_drop(|d| d.sum_se_cf_bits))?,
        mean_abs_gap_db: gaps.iter().sum::<f64>() / n,
        median_abs_gap_db: empirical_cdf(&gaps)?.median(),
        mean_trace_sq: drops.iter().map(|d| d.trace_sq).sum::<f64>() / n,
        mean_eta_cv: drops.iter().map(|d| d.eta_cv).sum::<f64>() / n,
        rejected_trials: drops.iter().map(|d| d.rejected_trials).sum(),
    })
}

/// Median expected-SNR gain of `to` over `from`, in dB.
pub fn median_gain_db(from: &RunSummary, to: &RunSummary) -> f64 {
    to.expected_snr_db.median - from.expected_snr_db.median
}
