//! Terminal drops, link gains and the measured angular-parameter model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corr::{CorrelationModelSpec, DoaSpec, SpreadSpec, TerminalCorrelation};
use crate::error::{Error, Result};
use crate::montecarlo::{self, Scenario};
use crate::stats::percentile;
use crate::{from_db, to_db};

/// Single-cell geometry and large-scale propagation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub cell_radius_m: f64,
    pub reference_distance_m: f64,
    pub attenuation_exponent: f64,
    pub shadowing_std_db: f64,
    /// Unit-less attenuation at the reference distance (A).
    pub attenuation_constant: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            cell_radius_m: 500.0,
            reference_distance_m: 50.0,
            attenuation_exponent: 3.67,
            shadowing_std_db: 6.0,
            attenuation_constant: 1.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let r0 = self.reference_distance_m;
        let rc = self.cell_radius_m;
        if !(r0 > 0.0 && r0 < rc && rc.is_finite()) {
            return Err(Error::invalid(
                "reference_distance_m",
                format!("need 0 < reference distance < cell radius, got {r0} and {rc}"),
            ));
        }
        if !(self.attenuation_exponent > 0.0 && self.attenuation_exponent.is_finite()) {
            return Err(Error::invalid("alpha", format!("attenuation exponent must be positive, got {}", self.attenuation_exponent)));
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return Err(Error::invalid("sigma_sh_db", format!("shadowing deviation must be non-negative, got {}", self.shadowing_std_db)));
        }
        if !(self.attenuation_constant > 0.0 && self.attenuation_constant.is_finite()) {
            return Err(Error::invalid(
                "attenuation_constant",
                format!("attenuation constant must be positive, got {}", self.attenuation_constant),
            ));
        }
        Ok(())
    }

    /// β = A·ζ·(r₀/r)^α.
    pub fn link_gain(&self, distance_m: f64, shadowing_linear: f64) -> f64 {
        self.attenuation_constant
            * shadowing_linear
            * (self.reference_distance_m / distance_m).powf(self.attenuation_exponent)
    }
}

/// Fitted distributions of the departure angular spread and mean DOA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredAngularModel {
    pub spread_mean_deg: f64,
    pub spread_std_deg: f64,
    pub doa_low_deg: f64,
    pub doa_high_deg: f64,
    /// Spread draws below this value are redrawn.
    pub spread_floor_deg: f64,
}

impl Default for MeasuredAngularModel {
    fn default() -> Self {
        Self {
            spread_mean_deg: 14.02,
            spread_std_deg: 6.45,
            doa_low_deg: -180.0,
            doa_high_deg: 180.0,
            spread_floor_deg: 1.0,
        }
    }
}

/// Upper limit of a one-ring half-width.
const MAX_SPREAD_DEG: f64 = 180.0;

impl MeasuredAngularModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.spread_floor_deg > 0.0 && self.spread_floor_deg < MAX_SPREAD_DEG) {
            return Err(Error::invalid("spread_floor_deg", format!("floor must lie in (0, 180), got {}", self.spread_floor_deg)));
        }
        if !(self.spread_std_deg >= 0.0 && self.spread_std_deg.is_finite()) {
            return Err(Error::invalid("spread_std_deg", format!("standard deviation must be non-negative, got {}", self.spread_std_deg)));
        }
        // Keep the accepted region reachable so redrawing terminates quickly.
        let sd = self.spread_std_deg.max(1e-300);
        let lo = (self.spread_floor_deg - self.spread_mean_deg) / sd;
        let hi = (MAX_SPREAD_DEG - self.spread_mean_deg) / sd;
        let reachable = if self.spread_std_deg == 0.0 {
            self.spread_mean_deg >= self.spread_floor_deg && self.spread_mean_deg <= MAX_SPREAD_DEG
        } else {
            lo < 4.0 && hi > -4.0
        };
        if !reachable || !self.spread_mean_deg.is_finite() {
            return Err(Error::invalid(
                "spread_mean_deg",
                format!("spread distribution N({}, {}²) barely reaches [{}, 180]", self.spread_mean_deg, self.spread_std_deg, self.spread_floor_deg),
            ));
        }
        if !(self.doa_low_deg.is_finite() && self.doa_high_deg.is_finite() && self.doa_low_deg <= self.doa_high_deg) {
            return Err(Error::invalid("doa_low_deg", "DOA interval must be finite with low <= high"));
        }
        Ok(())
    }
}

/// One terminal's large-scale state for a drop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalProfile {
    pub distance_m: f64,
    pub azimuth_deg: f64,
    pub shadowing_linear: f64,
    pub link_gain: f64,
    pub correlation: TerminalCorrelation,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, low: f64, high: f64) -> f64 {
    low + (high - low) * rng.random::<f64>()
}

/// Distance uniform over the annulus area between r₀ and R_c, azimuth
/// uniform on [-180°, 180°].
pub fn sample_terminal_geometry<R: Rng + ?Sized>(config: &GeometryConfig, rng: &mut R) -> (f64, f64) {
    let r0 = config.reference_distance_m;
    let rc = config.cell_radius_m;
    let u: f64 = rng.random();
    let distance = (r0 * r0 + u * (rc * rc - r0 * r0)).sqrt().clamp(r0, rc);
    let azimuth = uniform(rng, -180.0, 180.0);
    (distance, azimuth)
}

/// Lognormal shadowing draw and the resulting link gain.
pub fn sample_link_gain<R: Rng + ?Sized>(config: &GeometryConfig, distance_m: f64, rng: &mut R) -> (f64, f64) {
    let z: f64 = rng.sample(StandardNormal);
    let shadowing = from_db(config.shadowing_std_db * z);
    (shadowing, config.link_gain(distance_m, shadowing))
}

/// Angular spread from a normal fit truncated to [floor, 180°] by redrawing,
/// and a uniform mean DOA.
pub fn sample_angular_params<R: Rng + ?Sized>(model: &MeasuredAngularModel, rng: &mut R) -> (f64, f64) {
    let spread = sample_spread(model, rng);
    let doa = uniform(rng, model.doa_low_deg, model.doa_high_deg);
    (spread, doa)
}

fn sample_spread<R: Rng + ?Sized>(model: &MeasuredAngularModel, rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let s = model.spread_mean_deg + model.spread_std_deg * z;
        if (model.spread_floor_deg..=MAX_SPREAD_DEG).contains(&s) {
            return s;
        }
    }
}

/// Resolves the per-terminal correlation parameters of a model.
pub fn sample_correlation_params<R: Rng + ?Sized>(
    spec: &CorrelationModelSpec,
    measured: &MeasuredAngularModel,
    rng: &mut R,
) -> TerminalCorrelation {
    match *spec {
        CorrelationModelSpec::Identity => TerminalCorrelation::Identity,
        CorrelationModelSpec::Exponential { xi } => TerminalCorrelation::Exponential { xi },
        CorrelationModelSpec::Clerckx { xi, phase_range_deg: (lo, hi) } => {
            TerminalCorrelation::Clerckx { xi, phase_deg: uniform(rng, lo, hi) }
        }
        CorrelationModelSpec::OneRing { angular_spread, mean_doa, spacing_wavelengths } => {
            let angular_spread_deg = match angular_spread {
                SpreadSpec::Fixed(s) => s,
                SpreadSpec::Measured => sample_spread(measured, rng),
            };
            let mean_doa_deg = match mean_doa {
                DoaSpec::Fixed(d) => d,
                DoaSpec::Uniform { low_deg, high_deg } => uniform(rng, low_deg, high_deg),
                DoaSpec::Measured => uniform(rng, measured.doa_low_deg, measured.doa_high_deg),
            };
            TerminalCorrelation::OneRing { angular_spread_deg, mean_doa_deg, spacing_wavelengths }
        }
    }
}

/// Result of calibrating the attenuation constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub attenuation_constant: f64,
    /// 5th percentile of instantaneous SNR (dB) with the calibrated constant.
    pub achieved_percentile_db: f64,
    /// 5th percentile of instantaneous SNR (dB) with A = 1.
    pub unit_gain_percentile_db: f64,
    pub samples: usize,
    pub rejected_trials: usize,
}

/// Percentile (in %) of instantaneous ZF SNR that calibration pins.
pub const CALIBRATION_PERCENTILE: f64 = 5.0;
/// Target SNR at the calibration percentile.
pub const CALIBRATION_TARGET_DB: f64 = 0.0;

/// Chooses A so that the 5th percentile of per-terminal instantaneous ZF SNR,
/// pooled over drops and fading, equals 0 dB at a transmit SNR of 0 dB.
///
/// SNR is linear in A, so one Monte Carlo pass at A = 1 followed by a rescale
/// is exact. The rescaled constant is cross-checked against a bisection on the
/// same samples.
pub fn calibrate_attenuation_constant(baseline: &Scenario) -> Result<Calibration> {
    let mut unit = baseline.clone();
    unit.geometry.attenuation_constant = 1.0;
    unit.rho_t_db = 0.0;
    let (samples, rejected_trials) = montecarlo::instantaneous_snr_samples(&unit)?;
    let p_unit = percentile(&samples, CALIBRATION_PERCENTILE)?;
    if !(p_unit > 0.0 && p_unit.is_finite()) {
        return Err(Error::NonConvergence("attenuation calibration"));
    }
    let a = from_db(CALIBRATION_TARGET_DB) / p_unit;
    let a_bisect = calibrate_by_bisection(&samples, CALIBRATION_TARGET_DB)?;
    if ((a - a_bisect) / a).abs() > 1e-6 {
        return Err(Error::NonConvergence("attenuation calibration cross-check"));
    }
    let scaled: Vec<f64> = samples.iter().map(|s| s * a).collect();
    Ok(Calibration {
        attenuation_constant: a,
        achieved_percentile_db: to_db(percentile(&scaled, CALIBRATION_PERCENTILE)?),
        unit_gain_percentile_db: to_db(p_unit),
        samples: samples.len(),
        rejected_trials,
    })
}

/// Bisection on log10(A) over [-30, 30] for the constant that moves the 5th
/// percentile of `unit_gain_samples·A` to `target_db`.
pub fn calibrate_by_bisection(unit_gain_samples: &[f64], target_db: f64) -> Result<f64> {
    let mut sorted = unit_gain_samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p_at = |log_a: f64| -> Result<f64> {
        let a = 10f64.powf(log_a);
        let scaled: Vec<f64> = sorted.iter().map(|s| s * a).collect();
        Ok(to_db(percentile(&scaled, CALIBRATION_PERCENTILE)?))
    };
    let (mut lo, mut hi) = (-30.0, 30.0);
    if p_at(lo)? > target_db || p_at(hi)? < target_db {
        return Err(Error::NonConvergence("attenuation bisection (target not bracketed)"));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let p = p_at(mid)?;
        if (p - target_db).abs() < 1e-12 {
            return Ok(10f64.powf(mid));
        }
        if p < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if (p_at(mid)? - target_db).abs() < 1e-9 {
        Ok(10f64.powf(mid))
    } else {
        Err(Error::NonConvergence("attenuation bisection"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn degenerate_annulus_pins_distance() {
        let cfg = GeometryConfig { reference_distance_m: 500.0 - 1e-9, ..Default::default() };
        let mut r = rng();
        for _ in 0..1000 {
            let (d, _) = sample_terminal_geometry(&cfg, &mut r);
            assert!((d - 500.0).abs() < 1e-6);
        }
    }

    #[test]
    fn link_gain_formula() {
        let cfg = GeometryConfig { shadowing_std_db: 0.0, attenuation_constant: 3.0, ..Default::default() };
        let mut r = rng();
        let (z, b) = sample_link_gain(&cfg, 50.0, &mut r);
        assert_eq!(z, 1.0);
        assert_eq!(b, 3.0);
        let (_, b) = sample_link_gain(&cfg, 100.0, &mut r);
        assert!((b / 3.0 - 2f64.powf(-3.67)).abs() < 1e-15);
        assert!((2f64.powf(-3.67) - 0.0785).abs() < 1e-4);
    }

    #[test]
    fn link_gain_decreases_with_distance() {
        let cfg = GeometryConfig::default();
        let mut prev = f64::INFINITY;
        for i in 0..=45 {
            let b = cfg.link_gain(50.0 + 10.0 * i as f64, 1.7);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn zero_std_spread_is_constant() {
        let model = MeasuredAngularModel { spread_std_deg: 0.0, ..Default::default() };
        let mut r = rng();
        for _ in 0..100 {
            assert_eq!(sample_angular_params(&model, &mut r).0, 14.02);
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(GeometryConfig::default().validate().is_ok());
        assert!(GeometryConfig { reference_distance_m: 600.0, ..Default::default() }.validate().is_err());
        assert!(GeometryConfig { attenuation_exponent: 0.0, ..Default::default() }.validate().is_err());
        assert!(GeometryConfig { shadowing_std_db: -1.0, ..Default::default() }.validate().is_err());
        assert!(GeometryConfig { attenuation_constant: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn measured_model_validation() {
        assert!(MeasuredAngularModel::default().validate().is_ok());
        assert!(MeasuredAngularModel { spread_floor_deg: 0.0, ..Default::default() }.validate().is_err());
        assert!(MeasuredAngularModel { spread_mean_deg: -100.0, ..Default::default() }.validate().is_err());
        assert!(MeasuredAngularModel { spread_std_deg: 0.0, spread_mean_deg: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn clerckx_phase_within_range() {
        let spec = CorrelationModelSpec::Clerckx { xi: 0.9, phase_range_deg: (0.0, 14.0) };
        let mut r = rng();
        for _ in 0..1000 {
            match sample_correlation_params(&spec, &MeasuredAngularModel::default(), &mut r) {
                TerminalCorrelation::Clerckx { xi, phase_deg } => {
                    assert_eq!(xi, 0.9);
                    assert!((0.0..=14.0).contains(&phase_deg));
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn bisection_matches_rescale() {
        let samples: Vec<f64> = (1..=1000).map(|i| i as f64 * 1e-3).collect();
        let p = percentile(&samples, 5.0).unwrap();
        let a = calibrate_by_bisection(&samples, 0.0).unwrap();
        assert!((a * p - 1.0).abs() < 1e-9);
        let a3 = calibrate_by_bisection(&samples, 3.0).unwrap();
        assert!((to_db(a3 / a) - 3.0).abs() < 1e-9);
    }
}
