//! Classical least-squares inference, the non-private baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, least_squares_solve, svd, SpdFactor};
use crate::report::{InferencePath, IntervalReport};
use crate::stats::{normal_sf, student_t_quantile, upper_tail_quantile, Dof, TailMass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta_hat: DVector<f64>,
    pub zeta_norm2: f64,
    pub dof: usize,
    pub xtx_inverse_diag: DVector<f64>,
    pub n: usize,
    pub p: usize,
}

pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::Underdetermined { n, p });
    }
    let f = svd(x)?;
    if f.rank() < p {
        return Err(Error::Singular { pivot: f.s[f.s.len() - 1] });
    }
    let ls = least_squares_solve(x, y)?;
    let xtx_inverse_diag = SpdFactor::new(&gram(x))?.inverse_diagonal();
    Ok(OlsFit { beta_hat: ls.beta, zeta_norm2: ls.residual.norm_squared(), dof: n - p, xtx_inverse_diag, n, p })
}

fn check_coordinate(j: usize, p: usize) -> Result<()> {
    if j >= p {
        return Err(Error::InvalidParameter(format!("coordinate {j} out of range for p = {p}")));
    }
    Ok(())
}

impl OlsFit {
    /// √((XᵀX)⁻¹ⱼⱼ · ‖ζ‖²/(n−p))
    pub fn standard_error(&self, j: usize) -> f64 {
        (self.xtx_inverse_diag[j] * self.zeta_norm2 / self.dof as f64).sqrt()
    }

    fn dof(&self) -> Result<Dof> {
        Dof::new(self.dof as u64)
    }
}

pub fn t_value(fit: &OlsFit, j: usize, beta0: f64) -> Result<f64> {
    check_coordinate(j, fit.p)?;
    if !(fit.zeta_norm2 > 0.0) {
        return Err(Error::DegenerateFit("t-value undefined for a perfect fit".into()));
    }
    Ok((fit.beta_hat[j] - beta0) / fit.standard_error(j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileFamily {
    #[default]
    StudentT,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// p₀ = 1 − Φ(|t₀|) compared against α.
    #[default]
    OneTailed,
    /// p₀ = 2(1 − Φ(|t₀|)).
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OlsOptions {
    #[serde(default)]
    pub quantile: QuantileFamily,
    #[serde(default)]
    pub sidedness: Sidedness,
}

/// Point with mass α/2 above it under the chosen family.
pub fn two_sided_critical(alpha: TailMass, family: QuantileFamily, dof: Dof) -> Result<f64> {
    let upper = TailMass::new(alpha.get() / 2.0)?;
    Ok(match family {
        QuantileFamily::StudentT => student_t_quantile(upper.complement(), dof),
        QuantileFamily::Normal => upper_tail_quantile(upper),
    })
}

pub(crate) fn p_value_for(t: f64, sidedness: Sidedness) -> f64 {
    match sidedness {
        Sidedness::OneTailed => normal_sf(t.abs()),
        Sidedness::TwoSided => (2.0 * normal_sf(t.abs())).min(1.0),
    }
}

pub fn confidence_interval(fit: &OlsFit, j: usize, alpha: TailMass) -> Result<IntervalReport> {
    confidence_interval_with(fit, j, alpha, &OlsOptions::default())
}

/// Interval from the T_{n−p} (or normal) quantile, plus the test of βⱼ = 0.
/// A zero residual gives a zero-width interval flagged degenerate.
pub fn confidence_interval_with(fit: &OlsFit, j: usize, alpha: TailMass, opts: &OlsOptions) -> Result<IntervalReport> {
    check_coordinate(j, fit.p)?;
    let mut report = IntervalReport {
        coordinate: j,
        center: fit.beta_hat[j],
        half_width: 0.0,
        alpha,
        t_stat: None,
        p_value: None,
        rejection_threshold: Some(alpha.get()),
        rejected: false,
        path: InferencePath::Ols,
        degenerate: false,
        diagnostic: false,
        notes: vec![],
    };
    if !(fit.zeta_norm2 > 0.0) {
        report.degenerate = true;
        report.notes.push("residual norm is zero".into());
        return Ok(report);
    }
    let c = two_sided_critical(alpha, opts.quantile, fit.dof()?)?;
    report.half_width = c * fit.standard_error(j);
    let t = t_value(fit, j, 0.0)?;
    let p = p_value_for(t, opts.sidedness);
    report.t_stat = Some(t);
    report.p_value = Some(p);
    report.rejected = p < alpha.get();
    Ok(report)
}

pub fn reject_null(fit: &OlsFit, j: usize, alpha: TailMass) -> Result<IntervalReport> {
    reject_null_with(fit, j, alpha, &OlsOptions::default())
}

pub fn reject_null_with(fit: &OlsFit, j: usize, alpha: TailMass, opts: &OlsOptions) -> Result<IntervalReport> {
    t_value(fit, j, 0.0)?;
    confidence_interval_with(fit, j, alpha, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for SampleSizeConstants {
    fn default() -> Self {
        SampleSizeConstants { c1: 25.0, c2: 8.0 }
    }
}

/// How c_α is evaluated when the final dof is not known yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofPolicy {
    #[default]
    NormalApprox,
    Fixed(Dof),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub sigma2: f64,
    pub beta_j: f64,
    pub sigma_min_sigma: f64,
    pub alpha: TailMass,
    pub nu: TailMass,
    pub p: usize,
}

impl PowerParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.beta_j == 0.0 {
            return Err(Error::UndefinedPower);
        }
        if !(self.sigma_min_sigma > 0.0) || !(self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter("sigma2 and sigma_min must be positive".into()));
        }
        Ok(())
    }

    /// σ²/βⱼ² / σ_min(Σ)
    pub(crate) fn signal_ratio(&self) -> f64 {
        self.sigma2 / (self.beta_j * self.beta_j) / self.sigma_min_sigma
    }
}

/// max{C1(p + ln(1/ν)), p + C2·(σ²/βⱼ²)(c_α² + τ_α²)/σ_min(Σ)}, rounded up.
pub fn min_sample_size_baseline(params: &PowerParams, constants: SampleSizeConstants, policy: DofPolicy) -> Result<u64> {
    params.validate()?;
    let c = match policy {
        DofPolicy::NormalApprox => two_sided_critical(params.alpha, QuantileFamily::Normal, Dof::new(1)?)?,
        DofPolicy::Fixed(k) => two_sided_critical(params.alpha, QuantileFamily::StudentT, k)?,
    };
    let tau = upper_tail_quantile(params.alpha);
    let p = params.p as f64;
    let first = (constants.c1 * (p + (1.0 / params.nu.get()).ln())).ceil();
    let second = p + (constants.c2 * params.signal_ratio() * (c * c + tau * tau)).ceil();
    Ok(first.max(second) as u64)
}
