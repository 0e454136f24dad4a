//! Inference from an altered release, where the sketch is R·[A; w·I].
//!
//! Solving least squares on the sketch approximates ridge regression with
//! penalty w². The interval below is built to cover the OLS estimate β̂ⱼ.
//! Conditioning on M′ = R₁X + wR₂ does not leave R₂ free, though, and the
//! exact conditional law is
//!
//!   β′ | M′ ~ N(β^R, s²(M′ᵀM′)⁻¹),  s² = w² + ‖ζ‖² + w²β̂ᵀ(XᵀX + w²I)⁻¹XᵀXβ̂,
//!
//! with β^R = (XᵀX + w²I)⁻¹Xᵀy the ridge minimizer. So the same interval
//! covers β^R_j at the nominal level and reaches β̂ⱼ only while w² is small
//! next to σ_min(XᵀX). The combined interval for the true βⱼ needs the OLS
//! side, which only a trusted diagnostic caller can supply.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, least_squares_solve, SpdFactor};
use crate::projection::{PrivacyBudget, ProjectionRelease};
use crate::report::{InferencePath, IntervalReport};
use crate::stats::{student_t_quantile, Dof, TailMass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub beta_prime: DVector<f64>,
    /// ‖ζ′‖² with ζ′ = (Ry′ − M′β′)/√r
    pub zeta_prime_norm2: f64,
    pub dof: usize,
    pub mptm_inverse_diag: DVector<f64>,
    pub r: usize,
    pub w: f64,
    pub n: usize,
    pub p: usize,
}

impl RidgeFit {
    /// ‖ζ′‖·√(r/(r−p)·(M′ᵀM′)⁻¹ⱼⱼ)
    pub fn scale(&self, j: usize) -> f64 {
        (self.zeta_prime_norm2 * self.r as f64 / self.dof as f64 * self.mptm_inverse_diag[j]).sqrt()
    }

    /// t′(b) = (β′ⱼ − b)/scale
    pub fn pivot(&self, j: usize, b: f64) -> f64 {
        (self.beta_prime[j] - b) / self.scale(j)
    }
}

pub fn fit_projected_ridge(release: &ProjectionRelease) -> Result<RidgeFit> {
    if !release.altered {
        return Err(Error::WrongPath { expected: "projected", found: "unaltered" });
    }
    let (m, ry) = release.split();
    fit_ridge_parts(&m, &ry, release.w, release.n_public)
}

/// Fit from M′ = RX′ and Ry′ directly.
pub fn fit_ridge_parts(m: &DMatrix<f64>, ry: &DVector<f64>, w: f64, n: usize) -> Result<RidgeFit> {
    let (r, p) = m.shape();
    if r <= p {
        return Err(Error::InsufficientRows { r, p });
    }
    let ls = least_squares_solve(m, ry)?;
    let mptm_inverse_diag = SpdFactor::new(&gram(m))?.inverse_diagonal();
    Ok(RidgeFit {
        beta_prime: ls.beta,
        zeta_prime_norm2: ls.residual.norm_squared() / r as f64,
        dof: r - p,
        mptm_inverse_diag,
        r,
        w,
        n,
        p,
    })
}

fn check_coordinate(j: usize, p: usize) -> Result<()> {
    if j >= p {
        return Err(Error::InvalidParameter(format!("coordinate {j} out of range for p = {p}")));
    }
    Ok(())
}

/// Two-sided point: (−c, c) holds 1 − alpha of T_k.
fn two_sided_t(alpha: f64, k: usize) -> Result<f64> {
    Ok(student_t_quantile(TailMass::new(1.0 - 0.5 * alpha)?, Dof::new(k as u64)?))
}

fn blank_report(fit: &RidgeFit, j: usize, alpha: TailMass) -> IntervalReport {
    IntervalReport {
        coordinate: j,
        center: fit.beta_prime[j],
        half_width: 0.0,
        alpha,
        t_stat: None,
        p_value: None,
        rejection_threshold: None,
        rejected: false,
        path: InferencePath::Ridge,
        degenerate: false,
        diagnostic: false,
        notes: vec![],
    }
}

/// β′ⱼ ± c′_α·scale, with c′_α the two-sided T_{r−p} point. The stated
/// target is β̂ⱼ; the exact target is β^R_j (see the module note). No p-value
/// is attached since the ridge path defines no t-value for βⱼ.
pub fn ridge_ci_for_hat_beta(fit: &RidgeFit, j: usize, alpha: TailMass) -> Result<IntervalReport> {
    check_coordinate(j, fit.p)?;
    let mut report = blank_report(fit, j, alpha);
    report.notes.push("targets beta_hat_j (exactly: the ridge minimizer), not beta_j".into());
    if !(fit.zeta_prime_norm2 > 0.0) {
        report.degenerate = true;
        report.notes.push("projected residual is zero".into());
        return Ok(report);
    }
    report.half_width = two_sided_t(alpha.get(), fit.dof)? * fit.scale(j);
    Ok(report)
}

/// Non-private OLS quantities for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsSide {
    pub zeta_norm2: f64,
    pub xtx_inverse_diag_j: f64,
    pub dof: usize,
}

/// c_{α/2}·‖ζ‖/√(n−p)·√((XᵀX)⁻¹ⱼⱼ) + c′_{α/2}·‖ζ′‖/√(r−p)·√(r(M′ᵀM′)⁻¹ⱼⱼ).
///
/// Each side gets half the confidence, so both quantiles are two-sided at
/// α/2. Flagged diagnostic: the OLS side is not a private output.
pub fn combined_ci_for_beta(
    fit: &RidgeFit,
    ols_side: Option<&OlsSide>,
    j: usize,
    alpha: TailMass,
) -> Result<IntervalReport> {
    check_coordinate(j, fit.p)?;
    let side = ols_side.ok_or_else(|| Error::DiagnosticUnavailable("combined interval needs the OLS side".into()))?;
    if !(side.zeta_norm2 >= 0.0 && side.xtx_inverse_diag_j >= 0.0) || side.dof == 0 {
        return Err(Error::InvalidInput(format!("malformed OLS side {side:?}")));
    }
    let half = 0.5 * alpha.get();
    let mut report = blank_report(fit, j, alpha);
    report.diagnostic = true;
    let ols_term = if side.zeta_norm2 > 0.0 {
        two_sided_t(half, side.dof)? * (side.zeta_norm2 / side.dof as f64 * side.xtx_inverse_diag_j).sqrt()
    } else {
        0.0
    };
    let ridge_term = if fit.zeta_prime_norm2 > 0.0 {
        two_sided_t(half, fit.dof)? * fit.scale(j)
    } else {
        report.degenerate = true;
        report.notes.push("projected residual is zero".into());
        0.0
    };
    report.half_width = ols_term + ridge_term;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    IntervalCond,
    SignCond,
}

/// Named slack values; satisfied iff all are non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    pub satisfied: bool,
    pub margins: BTreeMap<String, f64>,
    pub eta: f64,
}

impl ConditionReport {
    fn from_margins(condition_id: ConditionId, margins: BTreeMap<String, f64>, eta: f64) -> Self {
        let satisfied = margins.values().all(|m| *m >= 0.0);
        ConditionReport { condition_id, satisfied, margins, eta }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

pub const INTERVAL_CONDITION_CONSTANT: f64 = 64.0;

/// Sufficient condition for the interval around β′ⱼ to also cover βⱼ:
/// n − p ≥ (2/η²)(r − p) and n² ≥ C·r^{3/2}·B² ln(1/δ)/(ε η² σ_min(XᵀX/n)).
#[allow(clippy::too_many_arguments)]
pub fn check_interval_condition(
    n: usize,
    r: usize,
    p: usize,
    eta: f64,
    bound: f64,
    budget: PrivacyBudget,
    sigma_min_scaled_gram: f64,
    constant: f64,
) -> Result<ConditionReport> {
    check_eta(eta)?;
    budget.validate()?;
    check_positive("bound", bound)?;
    check_positive("sigma_min", sigma_min_scaled_gram)?;
    let eta2 = eta * eta;
    let mut margins = BTreeMap::new();
    margins.insert("sample_ratio".into(), (n as f64 - p as f64) - 2.0 / eta2 * (r as f64 - p as f64));
    let need = constant * (r as f64).powf(1.5) * bound * bound * budget.log_inv_delta()
        / (budget.epsilon * eta2 * sigma_min_scaled_gram);
    margins.insert("privacy_scale".into(), (n as f64).powi(2) - need);
    Ok(ConditionReport::from_margins(ConditionId::IntervalCond, margins, eta))
}

/// Model truth needed by the sign check.
#[derive(Debug, Clone, PartialEq)]
pub struct SignModel<'a> {
    pub beta: &'a DVector<f64>,
    pub sigma2: f64,
}

/// ‖X⁺‖²_F and σ_min(XᵀX/n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub pseudo_frob2: f64,
    pub sigma_min_scaled_gram: f64,
}

/// Sufficient conditions for sign(β′ⱼ) = sign(βⱼ):
/// (i) n − p ≥ C ln(1/ν); (ii) ‖β‖² ≥ C σ²‖X⁺‖²_F ln(p/ν);
/// (iii) r − p ≥ C (c′_α)²(1+η)²/βⱼ² · (1 + ‖β‖² + σ²/σ_min(XᵀX/n)).
#[allow(clippy::too_many_arguments)]
pub fn check_sign_condition(
    model: &SignModel<'_>,
    design: DesignSummary,
    r: usize,
    n: usize,
    p: usize,
    alpha: TailMass,
    nu: TailMass,
    eta: f64,
    j: usize,
    constant: f64,
) -> Result<ConditionReport> {
    check_eta(eta)?;
    check_coordinate(j, p)?;
    if model.beta.len() != p {
        return Err(Error::InvalidInput(format!("beta has length {}, expected {p}", model.beta.len())));
    }
    let bj = model.beta[j];
    if bj == 0.0 {
        return Err(Error::SignUndefined);
    }
    if r <= p {
        return Err(Error::InsufficientRows { r, p });
    }
    check_positive("sigma_min", design.sigma_min_scaled_gram)?;
    let nu = nu.get();
    let beta2 = model.beta.norm_squared();
    let c = two_sided_t(alpha.get(), r - p)?;
    let mut margins = BTreeMap::new();
    margins.insert("sample_size".into(), (n as f64 - p as f64) - constant * (1.0 / nu).ln());
    margins.insert(
        "signal_strength".into(),
        beta2 - constant * model.sigma2 * design.pseudo_frob2 * (p as f64 / nu).ln(),
    );
    let need = constant * (c * (1.0 + eta)).powi(2) / (bj * bj)
        * (1.0 + beta2 + model.sigma2 / design.sigma_min_scaled_gram);
    margins.insert("projection_rows".into(), (r - p) as f64 - need);
    Ok(ConditionReport::from_margins(ConditionId::SignCond, margins, eta))
}

/// ‖β‖², βⱼ and σ² of the assumed model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelHint {
    pub beta_norm2: f64,
    pub beta_j: f64,
    pub sigma2: f64,
}

/// Multipliers on the two upper bounds and on the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectRConstants {
    pub upper: f64,
    pub lower: f64,
}

impl Default for SelectRConstants {
    fn default() -> Self {
        SelectRConstants { upper: 1.0, lower: 1.0 }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn select_r_ridge(
    n: usize,
    p: usize,
    eta: f64,
    bound: f64,
    budget: PrivacyBudget,
    sigma_min_scaled_gram: f64,
    hint: ModelHint,
) -> Result<usize> {
    select_r_ridge_with(n, p, eta, bound, budget, sigma_min_scaled_gram, hint, SelectRConstants::default())
}

/// Largest r with r − p ≤ η²(n − p) and r ≤ (η² ε n² σ_min/(B² ln(1/δ)))^{2/3},
/// then checked against r − p ≥ (1 + ‖β‖²)/βⱼ² + σ²/(βⱼ² σ_min).
#[allow(clippy::too_many_arguments)]
pub fn select_r_ridge_with(
    n: usize,
    p: usize,
    eta: f64,
    bound: f64,
    budget: PrivacyBudget,
    sigma_min_scaled_gram: f64,
    hint: ModelHint,
    constants: SelectRConstants,
) -> Result<usize> {
    check_eta(eta)?;
    budget.validate()?;
    check_positive("bound", bound)?;
    check_positive("sigma_min", sigma_min_scaled_gram)?;
    if n <= p {
        return Err(Error::Underdetermined { n, p });
    }
    if hint.beta_j == 0.0 {
        return Err(Error::SignUndefined);
    }
    let eta2 = eta * eta;
    let nf = n as f64;
    let by_samples = p as f64 + constants.upper * eta2 * (nf - p as f64);
    let by_privacy = (constants.upper * eta2 * budget.epsilon * nf * nf * sigma_min_scaled_gram
        / (bound * bound * budget.log_inv_delta()))
    .powf(2.0 / 3.0);
    let r = by_samples.min(by_privacy).floor() as usize;
    let bj2 = hint.beta_j * hint.beta_j;
    let need = constants.lower * ((1.0 + hint.beta_norm2) / bj2 + hint.sigma2 / (bj2 * sigma_min_scaled_gram));
    if r <= p || ((r - p) as f64) < need {
        let which = if by_samples <= by_privacy { "r - p <= eta^2 (n - p)" } else { "privacy-driven r cap" };
        return Err(Error::Infeasible(format!(
            "signal bullet r - p >= {need:.3} fails: largest r = {r} allowed by the {which} bound"
        )));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pinv_frobenius2;
    use crate::ols::fit_ols;
    use crate::projection::{append_regularizer, gaussian_sketch};
    use crate::stats::{chi2_cdf, ks_statistic, student_t_cdf, SeededRng};
    use crate::synth::{generate_dataset, ModelParams};

    fn tm(q: f64) -> TailMass {
        TailMass::new(q).unwrap()
    }

    fn budget() -> PrivacyBudget {
        PrivacyBudget::new(1.0, 1e-6).unwrap()
    }

    fn data(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut beta = DVector::zeros(p);
        beta[0] = 1.0;
        let m = ModelParams::isotropic(beta, 1.0).unwrap();
        let d = generate_dataset(&m, n, &mut SeededRng::new(seed)).unwrap();
        (d.x, d.y)
    }

    fn altered_fit(x: &DMatrix<f64>, y: &DVector<f64>, w: f64, r: usize, rng: &mut SeededRng) -> (RidgeFit, DVector<f64>) {
        let (n, p) = x.shape();
        let mut a = DMatrix::zeros(n, p + 1);
        a.columns_mut(0, p).copy_from(x);
        a.set_column(p, y);
        let s = gaussian_sketch(&append_regularizer(&a, w), r, rng);
        let m = s.columns(0, p).clone_owned();
        let ry = s.column(p).clone_owned();
        let fit = fit_ridge_parts(&m, &ry, w, n).unwrap();
        let resid = (&ry - &m * &fit.beta_prime) / (r as f64).sqrt();
        (fit, resid)
    }

    #[test]
    fn normal_equations_and_orthogonality() {
        let (x, y) = data(50, 3, 1);
        let mut rng = SeededRng::new(2);
        for _ in 0..20 {
            let p = 3;
            let mut a = DMatrix::zeros(50, 4);
            a.columns_mut(0, p).copy_from(&x);
            a.set_column(p, &y);
            let s = gaussian_sketch(&append_regularizer(&a, 2.0), 12, &mut rng);
            let m = s.columns(0, p).clone_owned();
            let ry = s.column(p).clone_owned();
            let fit = fit_ridge_parts(&m, &ry, 2.0, 50).unwrap();
            let lhs = m.transpose() * &m * &fit.beta_prime;
            let rhs = m.transpose() * &ry;
            assert!((lhs - &rhs).amax() < 1e-8 * (1.0 + rhs.amax()));
            let zeta = (&ry - &m * &fit.beta_prime) / 12f64.sqrt();
            assert!((m.transpose() * zeta).amax() < 1e-8 * (1.0 + rhs.amax()));
        }
    }

    #[test]
    fn zero_w_identity_projector_recovers_ols() {
        let (x, y) = data(30, 3, 3);
        let mut a = DMatrix::zeros(30, 4);
        a.columns_mut(0, 3).copy_from(&x);
        a.set_column(3, &y);
        let rel = ProjectionRelease::with_projector(&a, &DMatrix::identity(34, 34), true, 0.0, budget()).unwrap();
        let fit = fit_projected_ridge(&rel).unwrap();
        let ols = fit_ols(&x, &y).unwrap();
        assert!((&fit.beta_prime - &ols.beta_hat).amax() < 1e-12);
        // the zero rows add nothing to the residual
        assert!((fit.zeta_prime_norm2 * 34.0 - ols.zeta_norm2).abs() < 1e-10 * ols.zeta_norm2);
    }

    #[test]
    fn path_errors() {
        let (x, y) = data(20, 2, 4);
        let mut a = DMatrix::zeros(20, 3);
        a.columns_mut(0, 2).copy_from(&x);
        a.set_column(2, &y);
        let unaltered = ProjectionRelease::with_projector(&a, &DMatrix::identity(20, 20), false, 1.0, budget()).unwrap();
        assert!(matches!(fit_projected_ridge(&unaltered), Err(Error::WrongPath { .. })));
        let short = ProjectionRelease::with_projector(&a, &DMatrix::from_element(2, 23, 1.0), true, 1.0, budget()).unwrap();
        assert!(matches!(fit_projected_ridge(&short), Err(Error::InsufficientRows { r: 2, p: 2 })));
    }

    #[test]
    fn interval_shrinks_as_alpha_grows() {
        let (x, y) = data(60, 3, 5);
        let (fit, _) = altered_fit(&x, &y, 3.0, 20, &mut SeededRng::new(6));
        let mut last = f64::INFINITY;
        for a in [0.01, 0.1, 0.5, 0.9, 0.999] {
            let w = ridge_ci_for_hat_beta(&fit, 1, tm(a)).unwrap().half_width;
            assert!(w < last);
            last = w;
        }
        assert!(last < 0.01 * ridge_ci_for_hat_beta(&fit, 1, tm(0.01)).unwrap().half_width);
    }

    #[test]
    fn combined_interval_cases() {
        let (x, y) = data(60, 3, 7);
        let (fit, _) = altered_fit(&x, &y, 3.0, 20, &mut SeededRng::new(8));
        assert!(matches!(combined_ci_for_beta(&fit, None, 0, tm(0.05)), Err(Error::DiagnosticUnavailable(_))));
        let zero = OlsSide { zeta_norm2: 0.0, xtx_inverse_diag_j: 0.3, dof: 57 };
        let c = combined_ci_for_beta(&fit, Some(&zero), 0, tm(0.05)).unwrap();
        let r = ridge_ci_for_hat_beta(&fit, 0, tm(0.025)).unwrap();
        assert!((c.half_width - r.half_width).abs() < 1e-12);
        assert!(c.diagnostic);
        let ols = fit_ols(&x, &y).unwrap();
        let side = OlsSide { zeta_norm2: ols.zeta_norm2, xtx_inverse_diag_j: ols.xtx_inverse_diag[0], dof: ols.dof };
        let mut last = 0.0;
        for a in [0.5, 0.2, 0.05, 0.01] {
            let w = combined_ci_for_beta(&fit, Some(&side), 0, tm(a)).unwrap().half_width;
            assert!(w > last);
            last = w;
        }
    }

    /// (XᵀX + w²I)⁻¹Xᵀy via nalgebra's LU, independent of `ridge_solve`.
    fn ridge_oracle(x: &DMatrix<f64>, y: &DVector<f64>, w: f64) -> DVector<f64> {
        let p = x.ncols();
        (x.transpose() * x + DMatrix::identity(p, p) * (w * w)).lu().solve(&(x.transpose() * y)).unwrap()
    }

    fn mean_and_se(vals: &[f64]) -> (f64, f64) {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn beta_prime_mean_is_ridge_minimizer() {
        let (x, y) = data(60, 3, 9);
        let ols = fit_ols(&x, &y).unwrap();
        let target = ridge_oracle(&x, &y, 4.0);
        let mut rng = SeededRng::new(10);
        let draws: Vec<DVector<f64>> = (0..3000).map(|_| altered_fit(&x, &y, 4.0, 15, &mut rng).0.beta_prime).collect();
        for j in 0..3 {
            let (mean, se) = mean_and_se(&draws.iter().map(|b| b[j]).collect::<Vec<_>>());
            assert!((mean - target[j]).abs() < 3.0 * se, "j={j} mean={mean} ridge={}", target[j]);
        }
        // with w² comparable to σ_min(XᵀX) the OLS estimate is clearly missed
        let (mean, se) = mean_and_se(&draws.iter().map(|b| b[0]).collect::<Vec<_>>());
        assert!((mean - ols.beta_hat[0]).abs() > 10.0 * se);
    }

    #[test]
    fn beta_prime_centers_on_ols_estimate_for_light_penalty() {
        let (x, y) = data(60, 3, 9);
        let ols = fit_ols(&x, &y).unwrap();
        let mut rng = SeededRng::new(10);
        let draws: Vec<DVector<f64>> = (0..3000).map(|_| altered_fit(&x, &y, 0.05, 15, &mut rng).0.beta_prime).collect();
        for j in 0..3 {
            let (mean, se) = mean_and_se(&draws.iter().map(|b| b[j]).collect::<Vec<_>>());
            assert!((mean - ols.beta_hat[j]).abs() < 3.0 * se, "j={j} mean={mean} target={}", ols.beta_hat[j]);
        }
    }

    #[test]
    fn pivot_is_student_t_around_ridge_minimizer() {
        let (x, y) = data(80, 3, 11);
        let w = 5.0;
        let target = ridge_oracle(&x, &y, w);
        let mut rng = SeededRng::new(12);
        let (r, trials) = (10, 2000);
        let mut pivots = Vec::with_capacity(trials);
        let mut covered = 0;
        for _ in 0..trials {
            let (fit, _) = altered_fit(&x, &y, w, r, &mut rng);
            pivots.push(fit.pivot(0, target[0]));
            covered += ridge_ci_for_hat_beta(&fit, 0, tm(0.05)).unwrap().covers(target[0]) as usize;
        }
        let k = Dof::new(7).unwrap();
        let ks = ks_statistic(&pivots, |t| student_t_cdf(t, k));
        assert!(ks < 1.95 / (trials as f64).sqrt(), "ks = {ks}");
        assert!(covered as f64 / trials as f64 >= 0.93);
    }

    #[test]
    fn residual_norm_law_with_exact_scale() {
        let (x, y) = data(40, 3, 21);
        let ols = fit_ols(&x, &y).unwrap();
        let w = 6.0;
        let g = gram(&x);
        let shrunk = (&g + DMatrix::identity(3, 3) * (w * w)).lu().solve(&(&g * &ols.beta_hat)).unwrap();
        let s = w * w + ols.zeta_norm2 + w * w * ols.beta_hat.dot(&shrunk);
        let mut rng = SeededRng::new(22);
        let (r, trials) = (12, 2000);
        let stats: Vec<f64> =
            (0..trials).map(|_| r as f64 * altered_fit(&x, &y, w, r, &mut rng).0.zeta_prime_norm2 / s).collect();
        let ks = ks_statistic(&stats, |v| chi2_cdf(v, Dof::new(9).unwrap()));
        assert!(ks < 1.95 / (trials as f64).sqrt(), "ks = {ks}");
    }

    #[test]
    fn residual_norm_has_scaled_chi2_law() {
        let (x, y) = data(80, 3, 13);
        let ols = fit_ols(&x, &y).unwrap();
        let w = 3.0;
        let s = w * w * (1.0 + ols.beta_hat.norm_squared()) + ols.zeta_norm2;
        let mut rng = SeededRng::new(14);
        let (r, trials) = (12, 2000);
        let stats: Vec<f64> =
            (0..trials).map(|_| r as f64 * altered_fit(&x, &y, w, r, &mut rng).0.zeta_prime_norm2 / s).collect();
        let k = Dof::new(9).unwrap();
        let ks = ks_statistic(&stats, |v| chi2_cdf(v, k));
        assert!(ks < 1.95 / (trials as f64).sqrt(), "ks = {ks}");
    }

    #[test]
    fn inverse_gram_tracks_ridge_inverse() {
        let (x, y) = data(300, 5, 15);
        let w = 6.0;
        let reg = gram(&x) + DMatrix::identity(5, 5) * (w * w);
        let target = SpdFactor::new(&reg).unwrap().inverse_diagonal();
        let mut rng = SeededRng::new(16);
        let (r, trials) = (205, 500);
        let mut good = 0;
        for _ in 0..trials {
            let (fit, _) = altered_fit(&x, &y, w, r, &mut rng);
            let ratio = (r - 5) as f64 * fit.mptm_inverse_diag[2] / target[2];
            good += (0.25..=4.0).contains(&ratio) as usize;
        }
        assert!(good as f64 >= 0.95 * trials as f64);
    }

    #[test]
    fn ridge_inverse_diagonal_inequality() {
        let mut rng = SeededRng::new(17);
        for case in 0..100 {
            let p = 2 + case % 5;
            let x = DMatrix::from_fn(p + 3, p, |_, _| rng.standard_normal());
            let g = gram(&x);
            let w2 = 0.1 + 10.0 * rng.uniform();
            let smin = g.clone().symmetric_eigen().eigenvalues.min();
            let plain = SpdFactor::new(&g).unwrap().inverse_diagonal();
            let reg = SpdFactor::new(&(&g + DMatrix::identity(p, p) * w2)).unwrap().inverse_diagonal();
            for j in 0..p {
                assert!(plain[j] <= (1.0 + w2 / smin) * reg[j] * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn coefficients_uncorrelated_with_residual() {
        let (x, y) = data(40, 3, 18);
        let mut rng = SeededRng::new(19);
        let (r, trials) = (8, 5000);
        let mut b = Vec::with_capacity(trials);
        let mut z = vec![Vec::with_capacity(trials); r];
        for _ in 0..trials {
            let (fit, resid) = altered_fit(&x, &y, 2.0, r, &mut rng);
            b.push(fit.beta_prime[0]);
            for k in 0..r {
                z[k].push(resid[k]);
            }
        }
        let corr = |u: &[f64], v: &[f64]| {
            let n = u.len() as f64;
            let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
            let cov: f64 = u.iter().zip(v).map(|(a, b)| (a - mu) * (b - mv)).sum();
            let su: f64 = u.iter().map(|a| (a - mu).powi(2)).sum();
            let sv: f64 = v.iter().map(|b| (b - mv).powi(2)).sum();
            cov / (su * sv).sqrt()
        };
        for zk in &z {
            assert!(corr(&b, zk).abs() <= 0.05);
        }
    }

    #[test]
    fn interval_condition_margins() {
        let huge = check_interval_condition(10_000_000, 50, 5, 0.1, 1.0, budget(), 1.0, 64.0).unwrap();
        assert!(huge.satisfied);
        // n − p = (2/η²)(r − p) − 1
        let (r, p, eta) = (15, 5, 0.5);
        let n = p + (2.0 / (eta * eta) * (r - p) as f64) as usize - 1;
        let edge = check_interval_condition(n, r, p, eta, 1.0, budget(), 1.0, 64.0).unwrap();
        assert!(edge.margins["sample_ratio"] < 0.0);
        assert!(!edge.satisfied);
        assert!(edge.to_json().unwrap().contains("interval_cond"));
    }

    #[test]
    fn sign_condition_limits() {
        let (x, _) = data(200, 3, 20);
        let design = DesignSummary {
            pseudo_frob2: pinv_frobenius2(&x).unwrap(),
            sigma_min_scaled_gram: gram(&x).symmetric_eigen().eigenvalues.min() / 200.0,
        };
        let mut beta = DVector::from_vec(vec![0.01, 1.0, 1.0]);
        let weak = check_sign_condition(&SignModel { beta: &beta, sigma2: 1.0 }, design, 40, 200, 3, tm(0.05), tm(0.05), 0.1, 0, 1.0)
            .unwrap();
        assert!(weak.margins["projection_rows"] < 0.0);
        beta[0] = 1e4;
        let strong = check_sign_condition(&SignModel { beta: &beta, sigma2: 1.0 }, design, 40, 200, 3, tm(0.05), tm(0.05), 0.1, 0, 1.0)
            .unwrap();
        assert!(strong.margins["projection_rows"] >= 0.0);
        // noiseless: signal strength holds for any nonzero beta; rows suffice at r − p = 400
        let tiny = DVector::from_vec(vec![1e-3, 1e-3, 1e-3]);
        let quiet = check_sign_condition(&SignModel { beta: &tiny, sigma2: 0.0 }, design, 40, 200, 3, tm(0.05), tm(0.05), 0.1, 0, 1.0)
            .unwrap();
        assert!(quiet.margins["signal_strength"] >= 0.0);
        let unit = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let quiet = check_sign_condition(&SignModel { beta: &unit, sigma2: 0.0 }, design, 403, 200, 3, tm(0.05), tm(0.05), 0.1, 0, 1.0)
            .unwrap();
        assert!(quiet.margins["signal_strength"] >= 0.0 && quiet.margins["projection_rows"] >= 0.0);
        assert!(matches!(
            check_sign_condition(&SignModel { beta: &unit, sigma2: 1.0 }, design, 40, 200, 3, tm(0.05), tm(0.05), 0.1, 1, 1.0),
            Err(Error::SignUndefined)
        ));
    }

    #[test]
    fn select_r_reference_case() {
        let hint = ModelHint { beta_norm2: 1.0, beta_j: 1.0, sigma2: 1.0 };
        let r = select_r_ridge(100_000, 5, 0.1, 1.0, budget(), 1.0, hint).unwrap();
        let by_samples: f64 = 5.0 + 0.01 * 99_995.0;
        let by_privacy: f64 = (0.01 * 1e10 / (1e6f64).ln()).powf(2.0 / 3.0);
        assert_eq!(r, by_samples.min(by_privacy).floor() as usize);
        assert_eq!(r, 1004);
    }

    #[test]
    fn select_r_infeasible_names_bullet() {
        let hint = ModelHint { beta_norm2: 100.0, beta_j: 0.01, sigma2: 1.0 };
        match select_r_ridge(10_000, 5, 0.1, 1.0, budget(), 1.0, hint) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("signal bullet")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn select_r_monotone_and_clamped(n in 50usize..200_000, eta in 0.05f64..0.9, eps in 0.1f64..10.0) {
                let hint = ModelHint { beta_norm2: 0.0, beta_j: 10.0, sigma2: 0.0 };
                let b = PrivacyBudget::new(eps, 1e-6).unwrap();
                if let Ok(r) = select_r_ridge(n, 5, eta, 1.0, b, 1.0, hint) {
                    prop_assert!(r as f64 <= eta * eta * (n - 5) as f64 + 5.0 + 1e-9);
                    let r2 = select_r_ridge(2 * n, 5, eta, 1.0, b, 1.0, hint).unwrap();
                    prop_assert!(r2 >= r);
                }
            }
        }
    }
}
