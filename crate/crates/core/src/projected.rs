//! Inference from an unaltered projection release.
//!
//! With M = RX and a = (r−p)/(n−p), the pivot (β̃ⱼ − βⱼ)/√(σ̃²(MᵀM)⁻¹ⱼⱼ)
//! has a density squeezed between e^{−a}·T_{r−p}(x) and e^{a}·T_{r−p}(e^{−a}x).
//! Intervals and tests widen the Student-T answer accordingly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, least_squares_solve, min_singular_value, SpdFactor};
use crate::ols::PowerParams;
use crate::projection::{PrivacyBudget, ProjectionRelease};
use crate::report::{InferencePath, IntervalReport};
use crate::stats::{
    normal_sf, sample_laplace, student_t_cdf, student_t_pdf, student_t_quantile, student_t_sf, upper_tail_quantile,
    Dof, SeededRng, TailMass,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedFit {
    pub beta_tilde: DVector<f64>,
    pub zeta_tilde_norm2: f64,
    pub sigma_tilde2: f64,
    pub dof: usize,
    pub a_ratio: f64,
    pub mtm_inverse_diag: DVector<f64>,
    pub r: usize,
    pub n: usize,
    pub p: usize,
}

impl ProjectedFit {
    /// √(σ̃²·(MᵀM)⁻¹ⱼⱼ)
    pub fn scale(&self, j: usize) -> f64 {
        (self.sigma_tilde2 * self.mtm_inverse_diag[j]).sqrt()
    }

    /// t̃(b) = (β̃ⱼ − b)/scale
    pub fn pivot(&self, j: usize, b: f64) -> f64 {
        (self.beta_tilde[j] - b) / self.scale(j)
    }
}

pub fn fit_projected(release: &ProjectionRelease) -> Result<ProjectedFit> {
    if release.altered {
        return Err(Error::WrongPath { expected: "ridge", found: "altered" });
    }
    let (m, ry) = release.split();
    fit_projected_parts(&m, &ry, release.n_public)
}

/// Fit from the sketch blocks M = RX and Ry directly.
pub fn fit_projected_parts(m: &DMatrix<f64>, ry: &DVector<f64>, n: usize) -> Result<ProjectedFit> {
    let (r, p) = m.shape();
    if r <= p {
        return Err(Error::InsufficientRows { r, p });
    }
    if n <= p {
        return Err(Error::Underdetermined { n, p });
    }
    let ls = least_squares_solve(m, ry)?;
    let rf = r as f64;
    let zeta_tilde_norm2 = ls.residual.norm_squared() / rf;
    let dof = r - p;
    let mtm_inverse_diag = SpdFactor::new(&gram(m))?.inverse_diagonal();
    Ok(ProjectedFit {
        beta_tilde: ls.beta,
        zeta_tilde_norm2,
        sigma_tilde2: rf / dof as f64 * zeta_tilde_norm2,
        dof,
        a_ratio: dof as f64 / (n - p) as f64,
        mtm_inverse_diag,
        r,
        n,
        p,
    })
}

fn a_ratio(r: usize, p: usize, n: usize) -> Result<(f64, Dof)> {
    if n <= p || r <= p {
        return Err(Error::InvalidParameter(format!("need r > p and n > p (r={r}, p={p}, n={n})")));
    }
    Ok(((r - p) as f64 / (n - p) as f64, Dof::new((r - p) as u64)?))
}

/// (e^{−a}·pdf_T(x), e^{a}·pdf_T(e^{−a}x)) with dof r−p.
pub fn sandwich_pdf_bounds(x: f64, r: usize, p: usize, n: usize) -> Result<(f64, f64)> {
    let (a, k) = a_ratio(r, p, n)?;
    Ok(((-a).exp() * student_t_pdf(x, k), a.exp() * student_t_pdf((-a).exp() * x, k)))
}

/// The pdf bounds integrated over (−∞, x] and (x, ∞), turned into bounds
/// on the pivot's CDF at x and clamped to [0, 1].
pub fn sandwich_cdf_bounds(x: f64, r: usize, p: usize, n: usize) -> Result<(f64, f64)> {
    let (a, k) = a_ratio(r, p, n)?;
    let (ea, ema) = (a.exp(), (-a).exp());
    // ∫_{-∞}^{x} e^{a} pdf(e^{-a}t) dt = e^{2a} F(e^{-a}x)
    let (lo, hi) = if x <= 0.0 {
        (ema * student_t_cdf(x, k), ea * ea * student_t_cdf(ema * x, k))
    } else {
        (1.0 - ea * ea * student_t_sf(ema * x, k), 1.0 - ema * student_t_sf(x, k))
    };
    Ok((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMode {
    #[default]
    Exact,
    /// Normal quantiles in place of Student-T.
    NormalShortcut,
}

/// Point with mass `mass` above it under T_k, or the normal if shortcut.
fn upper_point(mass: f64, k: Dof, mode: QuantileMode) -> Result<f64> {
    let m = TailMass::new(mass)?;
    Ok(match mode {
        QuantileMode::Exact => student_t_quantile(m.complement(), k),
        QuantileMode::NormalShortcut => upper_tail_quantile(m),
    })
}

/// c̃_α: the T_{r−p} point with (α/2)e^{−a} mass above it.
pub fn projected_critical(alpha: TailMass, fit: &ProjectedFit, mode: QuantileMode) -> Result<f64> {
    upper_point(0.5 * alpha.get() * (-fit.a_ratio).exp(), Dof::new(fit.dof as u64)?, mode)
}

pub fn projected_ci(fit: &ProjectedFit, j: usize, alpha: TailMass) -> Result<IntervalReport> {
    projected_ci_with(fit, j, alpha, QuantileMode::Exact)
}

/// Half-width e^{a}·c̃_α·√(σ̃²(MᵀM)⁻¹ⱼⱼ), together with the test of βⱼ = 0.
pub fn projected_ci_with(fit: &ProjectedFit, j: usize, alpha: TailMass, mode: QuantileMode) -> Result<IntervalReport> {
    if j >= fit.p {
        return Err(Error::InvalidParameter(format!("coordinate {j} out of range for p = {}", fit.p)));
    }
    let ea = fit.a_ratio.exp();
    let threshold = alpha.get() / ea;
    let mut report = IntervalReport {
        coordinate: j,
        center: fit.beta_tilde[j],
        half_width: 0.0,
        alpha,
        t_stat: None,
        p_value: None,
        rejection_threshold: Some(threshold),
        rejected: false,
        path: InferencePath::Projected,
        degenerate: false,
        diagnostic: false,
        notes: vec![],
    };
    if !(fit.sigma_tilde2 > 0.0) {
        report.degenerate = true;
        report.notes.push("projected residual is zero".into());
        return Ok(report);
    }
    let c = projected_critical(alpha, fit, mode)?;
    report.half_width = ea * c * fit.scale(j);
    let t = fit.pivot(j, 0.0);
    let p = normal_sf(t.abs() / ea);
    report.t_stat = Some(t);
    report.p_value = Some(p);
    report.rejected = p < threshold;
    Ok(report)
}

/// p̃₀ = 1 − Φ(e^{−a}|t̃₀|), rejected when p̃₀ < α·e^{−a}.
pub fn projected_reject_null(fit: &ProjectedFit, j: usize, alpha: TailMass) -> Result<IntervalReport> {
    if !(fit.sigma_tilde2 > 0.0) {
        return Err(Error::DegenerateFit("projected residual is zero".into()));
    }
    projected_ci(fit, j, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPowerConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for ProjectedPowerConstants {
    fn default() -> Self {
        ProjectedPowerConstants { c1: 4.0, c2: 4.0 }
    }
}

/// r ≥ p + max{C1·σ²(c̃² + τ̃²)/(βⱼ²σ_min(Σ)), C2·ln(1/ν)}.
///
/// c̃ carries mass (α/2)e^{−a} and τ̃ mass α·e^{−a} (the p̃₀ test's own
/// threshold); both are scaled by e^{a}. The first pass uses a = 0 and normal
/// quantiles; one refinement then uses dof r₀−p and, if n is known,
/// a = (r₀−p)/(n−p).
pub fn min_r_for_power(
    params: &PowerParams,
    n: Option<usize>,
    constants: ProjectedPowerConstants,
    mode: QuantileMode,
) -> Result<u64> {
    params.validate()?;
    let ratio = params.signal_ratio();
    let alpha = params.alpha.get();
    let floor = constants.c2 * (1.0 / params.nu.get()).ln();
    let bound = |a: f64, k: Option<Dof>| -> Result<u64> {
        let ea = a.exp();
        let c = match k {
            Some(k) => upper_point(0.5 * alpha / ea, k, mode)?,
            None => upper_point(0.5 * alpha / ea, Dof::new(1)?, QuantileMode::NormalShortcut)?,
        };
        let tau = upper_tail_quantile(TailMass::new(alpha / ea)?);
        let term = constants.c1 * ratio * ea * ea * (c * c + tau * tau);
        let need = term.max(floor).ceil();
        if !(need < 1e15) {
            return Err(Error::Infeasible(format!("required sketch size is unbounded ({need:e} rows)")));
        }
        Ok(params.p as u64 + need as u64)
    };
    let r0 = bound(0.0, None)?;
    if let Some(n) = n {
        if r0 > n as u64 {
            return Err(Error::Infeasible(format!("power needs r >= {r0} projected rows but n = {n}")));
        }
    }
    let a = match n {
        Some(n) if n > params.p => (r0 - params.p as u64) as f64 / (n - params.p) as f64,
        Some(n) => return Err(Error::Underdetermined { n, p: params.p }),
        None => 0.0,
    };
    let k = Dof::new(r0 - params.p as u64)?;
    match (mode, n) {
        (QuantileMode::NormalShortcut, None) => Ok(r0),
        _ => bound(a, Some(k)),
    }
}

/// r = ⌊min{n, ε²σ_min²(Σ_A)/(B⁴ ln(1/δ))·(n − ln(1/δ))²}⌋, at least p + 2.
pub fn choose_r(n: usize, p: usize, bound: f64, budget: PrivacyBudget, sigma_min_sigma_a: f64) -> Result<usize> {
    budget.validate()?;
    if !(sigma_min_sigma_a > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_min(Sigma_A) = {sigma_min_sigma_a} must be positive")));
    }
    if !(bound > 0.0) {
        return Err(Error::InvalidParameter("row bound must be positive".into()));
    }
    let l = budget.log_inv_delta();
    let nf = n as f64;
    if nf <= l {
        return Err(Error::Infeasible(format!("n = {n} does not exceed ln(1/delta) = {l:.3}")));
    }
    let b4 = bound.powi(4);
    let second = budget.epsilon.powi(2) * sigma_min_sigma_a.powi(2) / (b4 * l) * (nf - l).powi(2);
    let r = nf.min(second).floor() as usize;
    let r = r.max(p + 2);
    if r > n {
        return Err(Error::Infeasible(format!("r = {r} would exceed n = {n}")));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivateSigmaMin {
    /// σ_min(AᵀA) + Z
    pub noisy: f64,
    /// noisy − 4B² ln(1/ν)/ε, below the true value w.p. ≥ 1 − ν/2
    pub lower: f64,
    /// lower / n, an estimate for σ_min(Σ_A)
    pub per_row: f64,
}

pub fn private_sigma_min_estimate(
    a: &DMatrix<f64>,
    bound: f64,
    budget: PrivacyBudget,
    nu: TailMass,
    rng: &mut SeededRng,
) -> Result<PrivateSigmaMin> {
    budget.validate()?;
    let b2 = bound * bound;
    let lambda = min_singular_value(a)?.powi(2);
    let noisy = lambda + sample_laplace(4.0 * b2 / budget.epsilon, rng)?;
    let lower = noisy - 4.0 * b2 * (1.0 / nu.get()).ln() / budget.epsilon;
    Ok(PrivateSigmaMin { noisy, lower, per_row: lower / a.nrows() as f64 })
}
