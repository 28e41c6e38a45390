//! Spatial correlation matrices for a uniform linear array at the base station.
//!
//! Three families are provided: exponential (identical profile for every
//! terminal), Clerckx (exponential magnitudes with a terminal-specific phase)
//! and one-ring (uniform angular window around a mean direction). All
//! constructors return Hermitian matrices with an exactly unit diagonal.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Eigenvalues in `[-PSD_TOLERANCE, 0)` are treated as rounding noise.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Maximum entrywise error allowed for `B·Bᴴ` against the source matrix.
pub const FACTOR_TOLERANCE: f64 = 1e-8;

const QUAD_START_ORDER: usize = 32;
const QUAD_MAX_ORDER: usize = 4096;
const QUAD_TOLERANCE: f64 = 1e-10;

/// An M×M Hermitian correlation matrix with unit diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    order: usize,
    entries: Vec<Complex64>,
}

impl CorrelationMatrix {
    /// Identity correlation (spatially white channel).
    pub fn identity(order: usize) -> Result<Self> {
        check_order(order)?;
        Ok(Self::from_upper_lags(&vec_with_unit_head(order)))
    }

    /// Validates a caller-supplied matrix: Hermitian, unit diagonal and
    /// off-diagonal moduli at most one.
    pub fn try_from_entries(order: usize, entries: Vec<Complex64>) -> Result<Self> {
        check_order(order)?;
        if entries.len() != order * order {
            return Err(Error::DimensionMismatch { expected: order * order, found: entries.len() });
        }
        for i in 0..order {
            if entries[i * order + i] != Complex64::new(1.0, 0.0) {
                return Err(Error::invalid("entries", format!("diagonal entry {i} is not 1")));
            }
            for j in (i + 1)..order {
                let upper = entries[i * order + j];
                if upper != entries[j * order + i].conj() {
                    return Err(Error::invalid("entries", format!("entry ({i}, {j}) breaks Hermitian symmetry")));
                }
                if upper.norm() > 1.0 + 1e-12 {
                    return Err(Error::invalid("entries", format!("entry ({i}, {j}) has modulus above 1")));
                }
            }
        }
        Ok(Self { order, entries })
    }

    /// Hermitian Toeplitz matrix with `entry(i, i + k) = lags[k]` and the
    /// conjugate mirror below the diagonal. `lags[0]` must be 1.
    fn from_upper_lags(lags: &[Complex64]) -> Self {
        let order = lags.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); order * order];
        for i in 0..order {
            entries[i * order + i] = Complex64::new(1.0, 0.0);
            for j in (i + 1)..order {
                let v = lags[j - i];
                entries[i * order + j] = v;
                entries[j * order + i] = v.conj();
            }
        }
        Self { order, entries }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.order + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.order, self.order, &self.entries)
    }

    /// Tr[R²] by the direct product sum Σᵢ Σₖ R(i,k)·R(k,i).
    pub fn trace_of_square(&self) -> f64 {
        let n = self.order;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.get(i, k) * self.get(k, i);
            }
        }
        acc.re
    }

    pub fn is_hermitian(&self) -> bool {
        (0..self.order).all(|i| {
            (i..self.order).all(|j| self.get(i, j) == self.get(j, i).conj())
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.to_dmatrix().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

fn vec_with_unit_head(order: usize) -> Vec<Complex64> {
    let mut lags = vec![Complex64::new(0.0, 0.0); order];
    lags[0] = Complex64::new(1.0, 0.0);
    lags
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::invalid("m", "number of antennas must be at least 1"));
    }
    Ok(())
}

fn check_xi(xi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::invalid("xi", format!("correlation magnitude must lie in [0, 1], got {xi}")));
    }
    Ok(())
}

/// `entry(i, j) = xi^|i-j|`.
pub fn build_exponential(order: usize, xi: f64) -> Result<CorrelationMatrix> {
    check_order(order)?;
    check_xi(xi)?;
    let lags: Vec<Complex64> = (0..order).map(|k| Complex64::new(xi.powi(k as i32), 0.0)).collect();
    Ok(CorrelationMatrix::from_upper_lags(&lags))
}

/// `entry(i, j) = (xi·e^{jΔ})^(j-i)` on and above the diagonal, conjugate below.
pub fn build_clerckx(order: usize, xi: f64, phase_rad: f64) -> Result<CorrelationMatrix> {
    check_order(order)?;
    check_xi(xi)?;
    if !phase_rad.is_finite() {
        return Err(Error::invalid("phase", "phase must be finite"));
    }
    let lags: Vec<Complex64> = (0..order)
        .map(|k| Complex64::from_polar(xi.powi(k as i32), k as f64 * phase_rad))
        .collect();
    Ok(CorrelationMatrix::from_upper_lags(&lags))
}

/// One-ring correlation:
/// `entry(i, j) = 1/(2Δ) ∫_{φ₀-Δ}^{φ₀+Δ} exp(-j2π·s·(i-j)·sin φ) dφ`
/// with half-width Δ = `angular_spread_rad`, mean direction φ₀ and spacing
/// s = d/λ. Each lag is integrated with Gauss-Legendre, doubling the order
/// from 32 until successive estimates differ by less than 1e-10.
pub fn build_one_ring(
    order: usize,
    angular_spread_rad: f64,
    mean_doa_rad: f64,
    spacing_wavelengths: f64,
) -> Result<CorrelationMatrix> {
    check_order(order)?;
    if !(angular_spread_rad > 0.0 && angular_spread_rad <= std::f64::consts::PI) {
        return Err(Error::invalid(
            "angular_spread_deg",
            format!("angular spread must lie in (0, 180] degrees, got {}", angular_spread_rad.to_degrees()),
        ));
    }
    if !(spacing_wavelengths > 0.0 && spacing_wavelengths.is_finite()) {
        return Err(Error::invalid("spacing_wavelengths", format!("element spacing must be positive, got {spacing_wavelengths}")));
    }
    if !mean_doa_rad.is_finite() {
        return Err(Error::invalid("mean_doa", "mean direction must be finite"));
    }

    let mut lags = vec_with_unit_head(order);
    for (k, lag) in lags.iter_mut().enumerate().skip(1) {
        // entry(i, i+k): d(i, j) = -s·k, so the integrand is exp(+j2π·s·k·sin φ).
        let freq = 2.0 * std::f64::consts::PI * spacing_wavelengths * k as f64;
        let integrand = |x: f64| {
            let phi = mean_doa_rad + angular_spread_rad * x;
            Complex64::from_polar(1.0, freq * phi.sin())
        };
        let mut prev = apply_rule(rule_at_level(0), &integrand);
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        for level in 1..QUAD_LEVELS {
            let cur = apply_rule(rule_at_level(level), &integrand);
            last_change = (cur - prev).norm();
            // Entries are bounded by one in modulus, so the relative test is
            // floored at unit scale for near-zero lags.
            if last_change <= QUAD_TOLERANCE * cur.norm().max(1.0) {
                *lag = cur;
                converged = true;
                break;
            }
            prev = cur;
        }
        if !converged {
            return Err(Error::QuadratureNonconvergence { lag: k, order: QUAD_MAX_ORDER, last_change });
        }
    }
    Ok(CorrelationMatrix::from_upper_lags(&lags))
}

/// Orders 32, 64, ..., 4096.
const QUAD_LEVELS: usize = (QUAD_MAX_ORDER / QUAD_START_ORDER).ilog2() as usize + 1;

fn rule_at_level(level: usize) -> &'static GaussLegendre {
    static RULES: [OnceLock<GaussLegendre>; QUAD_LEVELS] = [const { OnceLock::new() }; QUAD_LEVELS];
    RULES[level].get_or_init(|| GaussLegendre::new(QUAD_START_ORDER << level))
}

/// Mean of the integrand over [-1, 1] (half the rule sum).
fn apply_rule(rule: &GaussLegendre, f: &impl Fn(f64) -> Complex64) -> Complex64 {
    let sum: Complex64 = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| f(x) * w).sum();
    sum * 0.5
}

/// Square-root factor `B` with `B·Bᴴ = R`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFactor {
    order: usize,
    entries: Vec<Complex64>,
}

impl CorrelationFactor {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Row `i` of `B`.
    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.order, self.order, &self.entries)
    }

    /// `B·Bᴴ`.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let b = self.to_dmatrix();
        &b * b.adjoint()
    }

    pub fn max_reconstruction_error(&self, r: &CorrelationMatrix) -> f64 {
        let n = self.order;
        let rec = self.reconstruct();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (rec[(i, j)] - r.get(i, j)).norm())
            .fold(0.0, f64::max)
    }
}

/// Eigen-factorization `B = V·diag(√λ₊)`. Eigenvalues in `[-1e-10, 0)` are
/// clamped to zero, anything lower is reported as indefinite.
pub fn factor(r: &CorrelationMatrix) -> Result<CorrelationFactor> {
    let n = r.order();
    let eig = r.to_dmatrix().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(Error::Indefinite { min_eigenvalue: min });
    }
    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for row in 0..n {
            entries[row * n + col] = eig.eigenvectors[(row, col)] * s;
        }
    }
    let f = CorrelationFactor { order: n, entries };
    let error = f.max_reconstruction_error(r);
    if error > FACTOR_TOLERANCE {
        return Err(Error::InaccurateFactor { error });
    }
    Ok(f)
}

/// Entrywise mean of a set of correlation matrices together with Tr[R̄²]
/// evaluated by two independent routes.
#[derive(Debug, Clone)]
pub struct AverageCorrelation {
    pub mean: CorrelationMatrix,
    /// Tr[R̄²] from the matrix product.
    pub trace_sq: f64,
    /// Tr[R̄²] as M + 2·Σ_{i<j} |r̄(i,j)|².
    pub trace_sq_from_moduli: f64,
}

pub fn average_correlation(rs: &[CorrelationMatrix]) -> Result<AverageCorrelation> {
    let first = rs.first().ok_or(Error::EmptyInput("correlation matrix list"))?;
    let n = first.order();
    let mut sum = vec![Complex64::new(0.0, 0.0); n * n];
    for r in rs {
        if r.order() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.order() });
        }
        for (acc, v) in sum.iter_mut().zip(r.entries()) {
            *acc += v;
        }
    }
    let count = rs.len() as f64;
    let mut mean = CorrelationMatrix { order: n, entries: sum.into_iter().map(|v| v / count).collect() };
    // Exact unit diagonal and exact Hermitian mirror regardless of summation rounding.
    for i in 0..n {
        mean.entries[i * n + i] = Complex64::new(1.0, 0.0);
        for j in (i + 1)..n {
            mean.entries[j * n + i] = mean.entries[i * n + j].conj();
        }
    }
    let trace_sq = mean.trace_of_square();
    let off: f64 = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| mean.get(i, j).norm_sqr())
        .sum();
    let trace_sq_from_moduli = n as f64 + 2.0 * off;
    Ok(AverageCorrelation { mean, trace_sq, trace_sq_from_moduli })
}

/// Per-terminal correlation parameters after any random draws are resolved.
/// Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TerminalCorrelation {
    Identity,
    Exponential { xi: f64 },
    Clerckx { xi: f64, phase_deg: f64 },
    OneRing { angular_spread_deg: f64, mean_doa_deg: f64, spacing_wavelengths: f64 },
}

impl TerminalCorrelation {
    pub fn build(&self, order: usize) -> Result<CorrelationMatrix> {
        match *self {
            TerminalCorrelation::Identity => CorrelationMatrix::identity(order),
            TerminalCorrelation::Exponential { xi } => build_exponential(order, xi),
            TerminalCorrelation::Clerckx { xi, phase_deg } => build_clerckx(order, xi, phase_deg.to_radians()),
            TerminalCorrelation::OneRing { angular_spread_deg, mean_doa_deg, spacing_wavelengths } => build_one_ring(
                order,
                angular_spread_deg.to_radians(),
                mean_doa_deg.to_radians(),
                spacing_wavelengths,
            ),
        }
    }
}

/// One-ring angular spread: a fixed value or a draw from the measured fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpreadSpec {
    Fixed(f64),
    Measured,
}

/// One-ring mean direction of arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DoaSpec {
    Fixed(f64),
    Uniform { low_deg: f64, high_deg: f64 },
    /// Uniform over the measured model's DOA interval.
    Measured,
}

/// Which correlation family a scenario uses and how its per-terminal
/// parameters are drawn. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CorrelationModelSpec {
    /// Uncorrelated antennas (R = I for every terminal).
    Identity,
    Exponential { xi: f64 },
    /// Terminal phase drawn uniformly from `phase_range_deg`.
    Clerckx { xi: f64, phase_range_deg: (f64, f64) },
    OneRing { angular_spread: SpreadSpec, mean_doa: DoaSpec, spacing_wavelengths: f64 },
}

impl CorrelationModelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CorrelationModelSpec::Identity => Ok(()),
            CorrelationModelSpec::Exponential { xi } => check_xi(xi),
            CorrelationModelSpec::Clerckx { xi, phase_range_deg: (lo, hi) } => {
                check_xi(xi)?;
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::invalid("phase_range_deg", format!("expected finite [low, high] with low <= high, got [{lo}, {hi}]")));
                }
                Ok(())
            }
            CorrelationModelSpec::OneRing { angular_spread, mean_doa, spacing_wavelengths } => {
                if let SpreadSpec::Fixed(s) = angular_spread {
                    if !(s > 0.0 && s <= 180.0) {
                        return Err(Error::invalid("angular_spread_deg", format!("angular spread must lie in (0, 180] degrees, got {s}")));
                    }
                }
                match mean_doa {
                    DoaSpec::Fixed(d) if !d.is_finite() => {
                        return Err(Error::invalid("mean_doa", "mean direction must be finite"));
                    }
                    DoaSpec::Uniform { low_deg, high_deg } if !(low_deg.is_finite() && high_deg.is_finite() && low_deg <= high_deg) => {
                        return Err(Error::invalid("mean_doa", format!("expected finite [low, high] with low <= high, got [{low_deg}, {high_deg}]")));
                    }
                    _ => {}
                }
                if !(spacing_wavelengths > 0.0 && spacing_wavelengths.is_finite()) {
                    return Err(Error::invalid("spacing_wavelengths", format!("element spacing must be positive, got {spacing_wavelengths}")));
                }
                Ok(())
            }
        }
    }

    /// True when every terminal receives the same matrix in every drop.
    pub fn is_fixed_profile(&self) -> bool {
        match *self {
            CorrelationModelSpec::Identity | CorrelationModelSpec::Exponential { .. } => true,
            CorrelationModelSpec::Clerckx { phase_range_deg: (lo, hi), .. } => lo == hi,
            CorrelationModelSpec::OneRing { angular_spread, mean_doa, .. } => {
                matches!(angular_spread, SpreadSpec::Fixed(_)) && matches!(mean_doa, DoaSpec::Fixed(_))
            }
        }
    }
}
