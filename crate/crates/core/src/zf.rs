//! Zero-forcing SNR: exact evaluation through the Gram-matrix trace and the
//! Neumann-series / closed-form approximations.
//!
//! The precoder G = Hᴴ(HHᴴ)⁻¹ is never formed. Its normalization
//! η = ‖G‖²_F / L equals Tr[(HHᴴ)⁻¹] / L, which is all the SNR needs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corr::{average_correlation, CorrelationFactor, CorrelationMatrix};
use crate::error::{Error, Result};

/// Gram matrices with condition number above this are rejected.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// L×M small-scale fading matrix, row-major. Row ℓ is terminal ℓ's channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn from_rows(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: entries.len() });
        }
        if rows == 0 || rows > cols {
            return Err(Error::invalid("l", format!("need 1 <= L <= M, got L = {rows}, M = {cols}")));
        }
        Ok(Self { rows, cols, entries })
    }

    /// Colors white samples: row ℓ is `w_ℓ·B_ℓᴴ`, so E{h_ℓᴴh_ℓ} = B_ℓB_ℓᴴ.
    /// `white` holds L·M samples, row-major.
    pub fn from_white(factors: &[CorrelationFactor], white: &[Complex64]) -> Result<Self> {
        let (l, m) = check_factors(factors)?;
        if white.len() != l * m {
            return Err(Error::DimensionMismatch { expected: l * m, found: white.len() });
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); l * m];
        for (ell, b) in factors.iter().enumerate() {
            color_row(b, &white[ell * m..(ell + 1) * m], &mut entries[ell * m..(ell + 1) * m]);
        }
        Ok(Self { rows: l, cols: m, entries })
    }

    pub fn terminals(&self) -> usize {
        self.rows
    }

    pub fn antennas(&self) -> usize {
        self.cols
    }

    pub fn row(&self, ell: usize) -> &[Complex64] {
        &self.entries[ell * self.cols..(ell + 1) * self.cols]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|v| v * c).collect() }
    }

    /// HHᴴ (L×L, Hermitian).
    pub fn gram(&self) -> DMatrix<Complex64> {
        let l = self.rows;
        let mut g = DMatrix::zeros(l, l);
        for a in 0..l {
            for b in a..l {
                let v: Complex64 = self.row(a).iter().zip(self.row(b)).map(|(x, y)| x * y.conj()).sum();
                g[(a, b)] = v;
                g[(b, a)] = v.conj();
            }
        }
        for a in 0..l {
            g[(a, a)].im = 0.0;
        }
        g
    }
}

fn check_factors(factors: &[CorrelationFactor]) -> Result<(usize, usize)> {
    let first = factors.first().ok_or(Error::EmptyInput("correlation factors"))?;
    let m = first.order();
    for f in factors {
        if f.order() != m {
            return Err(Error::DimensionMismatch { expected: m, found: f.order() });
        }
    }
    if factors.len() > m {
        return Err(Error::invalid("l", format!("need L <= M, got L = {}, M = {m}", factors.len())));
    }
    Ok((factors.len(), m))
}

#[inline]
fn color_row(b: &CorrelationFactor, w: &[Complex64], out: &mut [Complex64]) {
    // h_j = Σ_k w_k·conj(B(j, k))
    for (j, h) in out.iter_mut().enumerate() {
        *h = b.row(j).iter().zip(w).map(|(bjk, wk)| wk * bjk.conj()).sum();
    }
}

/// Standard circularly-symmetric complex normal sample, CN(0, 1).
#[inline]
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws H with independent rows h_ℓ ~ CN(0, R_ℓ).
pub fn sample_channel<R: Rng + ?Sized>(factors: &[CorrelationFactor], rng: &mut R) -> Result<ChannelMatrix> {
    let (l, m) = check_factors(factors)?;
    let mut white = vec![Complex64::new(0.0, 0.0); m];
    let mut entries = vec![Complex64::new(0.0, 0.0); l * m];
    for (ell, b) in factors.iter().enumerate() {
        for w in white.iter_mut() {
            *w = sample_cn(rng);
        }
        color_row(b, &white, &mut entries[ell * m..(ell + 1) * m]);
    }
    Ok(ChannelMatrix { rows: l, cols: m, entries })
}

/// η = Tr[(HHᴴ)⁻¹] / L through a Cholesky factorization of HHᴴ.
pub fn zf_eta_exact(h: &ChannelMatrix) -> Result<f64> {
    Ok(trace_gram_inverse(h)? / h.terminals() as f64)
}

/// Tr[(HHᴴ)⁻¹].
pub fn trace_gram_inverse(h: &ChannelMatrix) -> Result<f64> {
    let g = h.gram();
    let eig = g.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    if !(min > 0.0) || max / min > MAX_CONDITION_NUMBER {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::IllConditioned { condition });
    }
    let chol = g.cholesky().ok_or(Error::IllConditioned { condition: max / min })?;
    // Tr[G⁻¹] = ‖L⁻¹‖²_F for G = L·Lᴴ.
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(h.terminals(), h.terminals()))
        .ok_or(Error::IllConditioned { condition: max / min })?;
    Ok(l_inv.iter().map(|v| v.norm_sqr()).sum())
}

/// Per-terminal instantaneous ZF SNR and sum spectral efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    pub per_terminal_snr_linear: Vec<f64>,
    pub eta: f64,
    pub sum_se_bits: f64,
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

/// SNR_ℓ = ρ_t·β_ℓ / (σ²·η) with linear ρ_t.
pub fn zf_snr_instantaneous(h: &ChannelMatrix, betas: &[f64], rho_t: f64, sigma2: f64) -> Result<SnrReport> {
    if betas.len() != h.terminals() {
        return Err(Error::DimensionMismatch { expected: h.terminals(), found: betas.len() });
    }
    check_positive("rho_t", rho_t)?;
    check_positive("sigma2", sigma2)?;
    for &b in betas {
        check_positive("beta", b)?;
    }
    let eta = zf_eta_exact(h)?;
    Ok(snr_report_from_eta(eta, betas, rho_t, sigma2))
}

pub(crate) fn snr_report_from_eta(eta: f64, betas: &[f64], rho_t: f64, sigma2: f64) -> SnrReport {
    let per_terminal_snr_linear: Vec<f64> = betas.iter().map(|b| rho_t * b / (sigma2 * eta)).collect();
    let sum_se_bits = per_terminal_snr_linear.iter().map(|s| (1.0 + s).log2()).sum();
    SnrReport { per_terminal_snr_linear, eta, sum_se_bits }
}

/// Order-N Neumann approximation of Tr[(HHᴴ)⁻¹] around M·I:
/// (1/M)·Σ_{n=0}^{N} Σ_{q=0}^{n} C(n,q)·(-1/M)^q·Tr[(HHᴴ)^q]. Orders 1 to 3.
pub fn neumann_trace_inverse(h: &ChannelMatrix, order: usize) -> Result<f64> {
    if !(1..=3).contains(&order) {
        return Err(Error::invalid("order", format!("Neumann order must be 1, 2 or 3, got {order}")));
    }
    let m = h.antennas() as f64;
    let l = h.terminals();
    let g = h.gram();
    let mut power = DMatrix::<Complex64>::identity(l, l);
    let mut total = 0.0;
    for q in 0..=order {
        let trace_q = power.trace().re;
        let coeff: f64 = (q..=order).map(|n| binomial(n, q)).sum::<f64>() * (-1.0 / m).powi(q as i32);
        total += coeff * trace_q;
        if q < order {
            power = &power * &g;
        }
    }
    Ok(total / m)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Which denominator to use for the closed-form expected SNR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormVariant {
    /// ρβM³ / (σ²(M² + L·Tr[R̄²])), consistent with the second-order trace expansion.
    #[default]
    Derived,
    /// ρβM³ / (σ²·L·(M² + L·Tr[R̄²])), an extra factor L in the denominator.
    Literal,
}

/// Second-order approximation E{Tr[(HHᴴ)⁻¹]} ≈ (L/M³)(M² + L·Tr[R̄²]).
pub fn expected_trace_inverse_approx(m: usize, l: usize, trace_sq: f64) -> f64 {
    let (mf, lf) = (m as f64, l as f64);
    lf / mf.powi(3) * (mf * mf + lf * trace_sq)
}

fn check_closed_form_inputs(m: usize, l: usize, trace_sq: f64) -> Result<()> {
    if l == 0 || l > m {
        return Err(Error::invalid("l", format!("need 1 <= L <= M, got L = {l}, M = {m}")));
    }
    let mf = m as f64;
    if !(trace_sq >= mf * (1.0 - 1e-9) && trace_sq <= mf * mf * (1.0 + 1e-9)) {
        return Err(Error::invalid("trace_sq", format!("Tr[R̄²] must lie in [M, M²] = [{mf}, {}], got {trace_sq}", mf * mf)));
    }
    Ok(())
}

/// Closed-form expected ZF SNR (linear) of a terminal with link gain `beta`.
pub fn expected_zf_snr_closed_form(beta: f64, m: usize, l: usize, trace_sq: f64, rho_t: f64, sigma2: f64) -> Result<f64> {
    expected_zf_snr_closed_form_variant(ClosedFormVariant::Derived, beta, m, l, trace_sq, rho_t, sigma2)
}

pub fn expected_zf_snr_closed_form_variant(
    variant: ClosedFormVariant,
    beta: f64,
    m: usize,
    l: usize,
    trace_sq: f64,
    rho_t: f64,
    sigma2: f64,
) -> Result<f64> {
    check_closed_form_inputs(m, l, trace_sq)?;
    check_positive("beta", beta)?;
    check_positive("rho_t", rho_t)?;
    check_positive("sigma2", sigma2)?;
    let (mf, lf) = (m as f64, l as f64);
    let base = mf * mf + lf * trace_sq;
    let denom = match variant {
        ClosedFormVariant::Derived => base,
        ClosedFormVariant::Literal => lf * base,
    };
    Ok(rho_t * beta * mf.powi(3) / (sigma2 * denom))
}

/// Σ_ℓ log₂(1 + closed-form SNR_ℓ).
pub fn expected_sum_se_closed_form(betas: &[f64], m: usize, trace_sq: f64, rho_t: f64, sigma2: f64) -> Result<f64> {
    expected_sum_se_closed_form_variant(ClosedFormVariant::Derived, betas, m, trace_sq, rho_t, sigma2)
}

pub fn expected_sum_se_closed_form_variant(
    variant: ClosedFormVariant,
    betas: &[f64],
    m: usize,
    trace_sq: f64,
    rho_t: f64,
    sigma2: f64,
) -> Result<f64> {
    let l = betas.len();
    betas.iter().try_fold(0.0, |acc, &b| {
        let snr = expected_zf_snr_closed_form_variant(variant, b, m, l, trace_sq, rho_t, sigma2)?;
        Ok(acc + (1.0 + snr).log2())
    })
}

/// E{Tr[(HHᴴ)²]} = L·(M² + L·Tr[R̄²]) for rows h_ℓ ~ CN(0, R_ℓ).
pub fn moment_trace_gram_squared(rs: &[CorrelationMatrix]) -> Result<f64> {
    let avg = average_correlation(rs)?;
    let m = avg.mean.order() as f64;
    let l = rs.len() as f64;
    Ok(l * (m * m + l * avg.trace_sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::{build_exponential, factor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn orthogonal_rows_give_inverse_m() {
        // Two rows of a scaled 4-point DFT: orthogonal with squared norm M.
        let m = 4;
        let mut e = Vec::new();
        for row in 0..2 {
            for k in 0..m {
                e.push(Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (row * k) as f64 / m as f64));
            }
        }
        let h = ChannelMatrix::from_rows(2, m, e).unwrap();
        assert!((zf_eta_exact(&h).unwrap() - 0.25).abs() < 1e-15);
        for n in 1..=3 {
            assert!((neumann_trace_inverse(&h, n).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_case() {
        let h = ChannelMatrix::from_rows(1, 2, vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!((zf_eta_exact(&h).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_matches_cofactor_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let factors = vec![factor(&CorrelationMatrix::identity(4).unwrap()).unwrap(); 2];
        for _ in 0..50 {
            let h = sample_channel(&factors, &mut rng).unwrap();
            let g = h.gram();
            // [[a, b], [b*, d]]⁻¹ has trace (a + d) / (ad - |b|²).
            let (a, b, d) = (g[(0, 0)].re, g[(0, 1)], g[(1, 1)].re);
            let oracle = (a + d) / (a * d - b.norm_sqr()) / 2.0;
            let eta = zf_eta_exact(&h).unwrap();
            assert!(((eta - oracle) / oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_scales_inverse_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let factors = vec![factor(&build_exponential(6, 0.5).unwrap()).unwrap(); 3];
        let h = sample_channel(&factors, &mut rng).unwrap();
        let eta = zf_eta_exact(&h).unwrap();
        let eta3 = zf_eta_exact(&h.scaled(3.0)).unwrap();
        assert!((eta / eta3 - 9.0).abs() < 1e-10);
    }

    #[test]
    fn singular_gram_is_rejected() {
        let h = ChannelMatrix::from_rows(2, 2, vec![c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0)]).unwrap();
        assert!(matches!(zf_eta_exact(&h), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn zero_white_noise_gives_zero_channel() {
        let factors = vec![factor(&build_exponential(4, 0.9).unwrap()).unwrap(); 2];
        let h = ChannelMatrix::from_white(&factors, &[c(0.0, 0.0); 8]).unwrap();
        assert!(h.row(0).iter().chain(h.row(1)).all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn unit_snr_case() {
        let r = snr_report_from_eta(1.0, &[1.0], 1.0, 1.0);
        assert_eq!(r.per_terminal_snr_linear, vec![1.0]);
        assert_eq!(r.sum_se_bits, 1.0);
    }

    #[test]
    fn doubling_rho_doubles_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let factors = vec![factor(&CorrelationMatrix::identity(8).unwrap()).unwrap(); 3];
        let h = sample_channel(&factors, &mut rng).unwrap();
        let betas = [0.5, 1.0, 2.0];
        let a = zf_snr_instantaneous(&h, &betas, 1.5, 1.0).unwrap();
        let b = zf_snr_instantaneous(&h, &betas, 3.0, 1.0).unwrap();
        for (x, y) in a.per_terminal_snr_linear.iter().zip(&b.per_terminal_snr_linear) {
            assert!((y / x - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn snr_rejects_bad_inputs() {
        let h = ChannelMatrix::from_rows(1, 2, vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(zf_snr_instantaneous(&h, &[1.0, 2.0], 1.0, 1.0).is_err());
        assert!(zf_snr_instantaneous(&h, &[1.0], 0.0, 1.0).is_err());
        assert!(zf_snr_instantaneous(&h, &[-1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn neumann_order_two_matches_explicit_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let factors = vec![factor(&build_exponential(16, 0.3).unwrap()).unwrap(); 4];
        let h = sample_channel(&factors, &mut rng).unwrap();
        let g = h.gram();
        let m = 16.0;
        let t1 = g.trace().re;
        let t2 = (&g * &g).trace().re;
        let explicit = (3.0 * 4.0 - 3.0 / m * t1 + t2 / (m * m)) / m;
        assert!((neumann_trace_inverse(&h, 2).unwrap() - explicit).abs() < 1e-14);
        assert!(neumann_trace_inverse(&h, 0).is_err());
        assert!(neumann_trace_inverse(&h, 4).is_err());
    }

    #[test]
    fn closed_form_iid_value() {
        let snr = expected_zf_snr_closed_form(1.0, 64, 6, 64.0, 1.0, 1.0).unwrap();
        assert!((snr - 262144.0 / 4480.0).abs() < 1e-12);
        assert!((crate::to_db(snr) - 17.67).abs() < 0.005);
    }

    #[test]
    fn closed_form_fully_correlated_single_terminal() {
        let m = 32;
        let snr = expected_zf_snr_closed_form(1.0, m, 1, (m * m) as f64, 1.0, 1.0).unwrap();
        assert!((snr - m as f64 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_monotone_in_trace() {
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let t = 64.0 + i as f64 * 50.0;
            let s = expected_zf_snr_closed_form(1.0, 64, 6, t, 1.0, 1.0).unwrap();
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn closed_form_rejects_bad_inputs() {
        assert!(expected_zf_snr_closed_form(1.0, 4, 6, 4.0, 1.0, 1.0).is_err());
        assert!(expected_zf_snr_closed_form(1.0, 4, 2, 3.0, 1.0, 1.0).is_err());
        assert!(expected_zf_snr_closed_form(1.0, 4, 2, 17.0, 1.0, 1.0).is_err());
        assert!(expected_zf_snr_closed_form(0.0, 4, 2, 4.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn literal_variant_has_extra_factor_l() {
        let d = expected_zf_snr_closed_form_variant(ClosedFormVariant::Derived, 1.0, 64, 6, 100.0, 1.0, 1.0).unwrap();
        let l = expected_zf_snr_closed_form_variant(ClosedFormVariant::Literal, 1.0, 64, 6, 100.0, 1.0, 1.0).unwrap();
        assert!((d / l - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sum_se_closed_form_symmetry() {
        // L = 1, M = 1, Tr = 1: SNR = ρβ/(2σ²) so ρβ = 2 gives one bit.
        assert!((expected_sum_se_closed_form(&[2.0], 1, 1.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let betas = [0.3; 5];
        let total = expected_sum_se_closed_form(&betas, 32, 80.0, 2.0, 1.0).unwrap();
        let one = expected_zf_snr_closed_form(0.3, 32, 5, 80.0, 2.0, 1.0).unwrap();
        assert!((total - 5.0 * (1.0 + one).log2()).abs() < 1e-12);
    }

    #[test]
    fn moment_single_identity() {
        let r = CorrelationMatrix::identity(5).unwrap();
        assert_eq!(moment_trace_gram_squared(&[r]).unwrap(), 30.0);
    }

    #[test]
    fn moment_identical_profiles() {
        let r = build_exponential(6, 0.7).unwrap();
        let t = r.trace_of_square();
        let v = moment_trace_gram_squared(&[r.clone(), r.clone(), r]).unwrap();
        assert!((v - 3.0 * (36.0 + 3.0 * t)).abs() < 1e-9);
    }
}
