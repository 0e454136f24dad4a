//! Additive-Gaussian release of the Gram matrix of [X; y] and the interval
//! machinery built on it.
//!
//! Every upper-triangle entry of AᵀA (diagonal included) gets independent
//! N(0, Δ²) noise, mirrored below the diagonal. A neighbouring dataset moves
//! AᵀA by vvᵀ with ‖vvᵀ‖_F = ‖v‖² ≤ B², so Δ is the Gaussian-mechanism scale
//! for ℓ₂-sensitivity B².

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, min_eigenvalue, SpdFactor};
use crate::projection::{BoundedDataset, PrivacyBudget};
use crate::report::{InferencePath, IntervalReport};
use crate::stats::{SeededRng, TailMass};

/// Δ = B²√(2 ln(1.25/δ))/ε
pub fn calibrate_noise(bound: f64, budget: PrivacyBudget) -> Result<f64> {
    budget.validate()?;
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!("row bound {bound} must be positive")));
    }
    Ok(bound * bound * (2.0 * (1.25 / budget.delta).ln()).sqrt() / budget.epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgRelease {
    pub noisy_xtx: DMatrix<f64>,
    pub noisy_xty: DVector<f64>,
    pub noisy_yty: f64,
    pub delta_noise: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub n_public: usize,
    pub p: usize,
    pub seed: u64,
}

/// Symmetric d×d noise: upper triangle drawn row by row, then mirrored.
pub fn symmetric_noise(d: usize, scale: f64, rng: &mut SeededRng) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let z = scale * rng.standard_normal();
            out[(i, j)] = z;
            out[(j, i)] = z;
        }
    }
    out
}

pub fn ag_release(data: &BoundedDataset, budget: PrivacyBudget, seed: u64) -> Result<AgRelease> {
    let delta_noise = calibrate_noise(data.bound(), budget)?;
    ag_release_with_noise(data, budget, delta_noise, seed)
}

/// Same as [`ag_release`] with Δ supplied directly; Δ = 0 gives the exact Gram.
pub fn ag_release_with_noise(data: &BoundedDataset, budget: PrivacyBudget, delta_noise: f64, seed: u64) -> Result<AgRelease> {
    budget.validate()?;
    if !(delta_noise >= 0.0 && delta_noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise scale {delta_noise} must be non-negative")));
    }
    let a = data.joint();
    let d = a.ncols();
    let p = d - 1;
    let mut rng = SeededRng::new(seed);
    let noisy = gram(&a) + symmetric_noise(d, delta_noise, &mut rng);
    Ok(AgRelease {
        noisy_xtx: noisy.view((0, 0), (p, p)).clone_owned(),
        noisy_xty: noisy.view((0, p), (p, 1)).column(0).clone_owned(),
        noisy_yty: noisy[(p, p)],
        delta_noise,
        epsilon: budget.epsilon,
        delta: budget.delta,
        n_public: data.n(),
        p,
        seed,
    })
}

#[derive(Serialize, Deserialize)]
struct AgWire {
    p: usize,
    n_public: usize,
    delta_noise: f64,
    epsilon: f64,
    delta: f64,
    /// upper triangle, row-major
    noisy_xtx: Vec<f64>,
    noisy_xty: Vec<f64>,
    noisy_yty: f64,
    seed: u64,
}

impl AgRelease {
    pub fn to_json(&self) -> Result<String> {
        let mut upper = Vec::with_capacity(self.p * (self.p + 1) / 2);
        for i in 0..self.p {
            for j in i..self.p {
                upper.push(self.noisy_xtx[(i, j)]);
            }
        }
        let wire = AgWire {
            p: self.p,
            n_public: self.n_public,
            delta_noise: self.delta_noise,
            epsilon: self.epsilon,
            delta: self.delta,
            noisy_xtx: upper,
            noisy_xty: self.noisy_xty.iter().copied().collect(),
            noisy_yty: self.noisy_yty,
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: AgWire = serde_json::from_str(text)?;
        let p = w.p;
        if p == 0 || w.noisy_xtx.len() != p * (p + 1) / 2 || w.noisy_xty.len() != p {
            return Err(Error::InvalidInput(format!(
                "release for p = {p} needs {} upper-triangle entries and {p} cross terms, got {} and {}",
                p * (p + 1) / 2,
                w.noisy_xtx.len(),
                w.noisy_xty.len()
            )));
        }
        if !(w.delta_noise >= 0.0) {
            return Err(Error::InvalidInput(format!("delta_noise = {} is negative", w.delta_noise)));
        }
        PrivacyBudget::new(w.epsilon, w.delta)?;
        let mut xtx = DMatrix::zeros(p, p);
        let mut k = 0;
        for i in 0..p {
            for j in i..p {
                xtx[(i, j)] = w.noisy_xtx[k];
                xtx[(j, i)] = w.noisy_xtx[k];
                k += 1;
            }
        }
        let all_finite = xtx.iter().chain(&w.noisy_xty).all(|v| v.is_finite()) && w.noisy_yty.is_finite();
        if !all_finite {
            return Err(Error::InvalidInput("release contains non-finite entries".into()));
        }
        Ok(AgRelease {
            noisy_xtx: xtx,
            noisy_xty: DVector::from_vec(w.noisy_xty),
            noisy_yty: w.noisy_yty,
            delta_noise: w.delta_noise,
            epsilon: w.epsilon,
            delta: w.delta,
            n_public: w.n_public,
            p,
            seed: w.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgFit {
    pub beta_ag: DVector<f64>,
    /// Raw, never clamped.
    pub zeta2_ag: f64,
    pub zeta2_negative: bool,
    /// (X̃ᵀX)⁻¹
    pub inverse: DMatrix<f64>,
}

pub fn ag_fit(rel: &AgRelease) -> Result<AgFit> {
    let factor = SpdFactor::new(&rel.noisy_xtx)
        .map_err(|_| Error::NotPositiveDefinite { min_eigenvalue: min_eigenvalue(&rel.noisy_xtx) })?;
    let beta_ag = factor.solve(&rel.noisy_xty);
    let zeta2_ag = rel.noisy_yty - rel.noisy_xty.dot(&beta_ag);
    if zeta2_ag < 0.0 {
        log::warn!("noisy residual norm is negative ({zeta2_ag}); kept as is");
    }
    Ok(AgFit { beta_ag, zeta2_ag, zeta2_negative: zeta2_ag < 0.0, inverse: factor.inverse() })
}

/// Constants standing in for unspecified big-O factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgConstants {
    /// multiplies the slack inside ρ²
    pub rho: f64,
    /// multiplies the whole half-width
    pub interval: f64,
}

impl Default for AgConstants {
    fn default() -> Self {
        AgConstants { rho: 1.0, interval: 4.0 }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0, 1)")));
    }
    Ok(())
}

/// σ_min(X̃ᵀX) − Δ√(p ln(1/ν))/η; the interval bound needs this positive.
pub fn ag_precondition_margin(rel: &AgRelease, nu: TailMass, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let need = rel.delta_noise * (rel.p as f64 * (1.0 / nu.get()).ln()).sqrt() / eta;
    Ok(min_eigenvalue(&rel.noisy_xtx) - need)
}

fn check_precondition(rel: &AgRelease, nu: TailMass, eta: f64) -> Result<()> {
    let margin = ag_precondition_margin(rel, nu, eta)?;
    if !(margin > 0.0) {
        return Err(Error::PreconditionFailed(format!(
            "sigma_min of the noisy Gram falls short of Delta*sqrt(p ln(1/nu))/eta by {:.4e}",
            -margin
        )));
    }
    Ok(())
}

/// ρ² = (√(n−p) − 2√ln(16/ν))⁻²·(ζ̃² + C(Δ·B²√p/(1−η)·√ln(1/ν) + Δ²‖(X̃ᵀX)⁻¹‖_F·ln(p/ν))).
///
/// The slack is added, which makes ρ² an upper bound on σ² w.h.p.
pub fn ag_variance_upper_bound(rel: &AgRelease, bound: f64, nu: TailMass, eta: f64, constant: f64) -> Result<f64> {
    check_precondition(rel, nu, eta)?;
    let fit = ag_fit(rel)?;
    rho2_from_fit(rel, &fit, bound, nu, eta, constant)
}

fn rho2_from_fit(rel: &AgRelease, fit: &AgFit, bound: f64, nu: TailMass, eta: f64, constant: f64) -> Result<f64> {
    let (n, p) = (rel.n_public, rel.p);
    if n <= p {
        return Err(Error::Underdetermined { n, p });
    }
    let nu = nu.get();
    let denom = ((n - p) as f64).sqrt() - 2.0 * (16.0 / nu).ln().sqrt();
    if !(denom > 0.0) {
        return Err(Error::PreconditionFailed(format!("n - p = {} too small for nu = {nu}", n - p)));
    }
    let dn = rel.delta_noise;
    let slack = dn * bound * bound * (p as f64).sqrt() / (1.0 - eta) * (1.0 / nu).ln().sqrt()
        + dn * dn * fit.inverse.norm() * (p as f64 / nu).ln();
    Ok((fit.zeta2_ag + constant * slack) / (denom * denom))
}

/// σ̄² = (ζ̃² + Δ²‖(X̃ᵀX)⁻¹‖_F)/(n − p)
pub fn ag_sigma_mle(rel: &AgRelease) -> Result<f64> {
    let fit = ag_fit(rel)?;
    if rel.n_public <= rel.p {
        return Err(Error::Underdetermined { n: rel.n_public, p: rel.p });
    }
    Ok((fit.zeta2_ag + rel.delta_noise.powi(2) * fit.inverse.norm()) / (rel.n_public - rel.p) as f64)
}

pub fn ag_ci(rel: &AgRelease, j: usize, bound: f64, nu: TailMass, eta: f64) -> Result<IntervalReport> {
    ag_ci_with(rel, j, bound, nu, eta, AgConstants::default())
}

/// β̃ⱼ ± K·(B·Δ√(p·(X̃ᵀX)⁻²ⱼⱼ) + ρ√((X̃ᵀX)⁻¹ⱼⱼ + Δ(X̃ᵀX)⁻²ⱼⱼ√(p ln(1/ν))))·√ln(1/ν).
///
/// (X̃ᵀX)⁻²ⱼⱼ is the squared norm of row j of the inverse. The bounds
/// ‖β‖ ≤ B and ‖β̂‖ ≤ B are assumed, not checked.
pub fn ag_ci_with(
    rel: &AgRelease,
    j: usize,
    bound: f64,
    nu: TailMass,
    eta: f64,
    constants: AgConstants,
) -> Result<IntervalReport> {
    if j >= rel.p {
        return Err(Error::InvalidParameter(format!("coordinate {j} out of range for p = {}", rel.p)));
    }
    check_precondition(rel, nu, eta)?;
    let fit = ag_fit(rel)?;
    let rho2 = rho2_from_fit(rel, &fit, bound, nu, eta, constants.rho)?;
    let l = (1.0 / nu.get()).ln();
    let p = rel.p as f64;
    let dn = rel.delta_noise;
    let inv_jj = fit.inverse[(j, j)];
    let inv2_jj = fit.inverse.row(j).norm_squared();
    let mut notes = vec![
        format!("rho^2 = {rho2:.6e}"),
        format!("constants: interval = {}, rho = {}", constants.interval, constants.rho),
        "assumes ||beta|| <= B and ||beta_hat|| <= B".to_string(),
    ];
    if fit.zeta2_negative {
        notes.push("noisy residual norm is negative".into());
    }
    let rho = rho2.max(0.0).sqrt();
    let half_width = constants.interval
        * (bound * dn * (p * inv2_jj).sqrt() + rho * (inv_jj + dn * inv2_jj * (p * l).sqrt()).sqrt())
        * l.sqrt();
    Ok(IntervalReport {
        coordinate: j,
        center: fit.beta_ag[j],
        half_width,
        alpha: nu,
        t_stat: None,
        p_value: None,
        rejection_threshold: None,
        rejected: false,
        path: InferencePath::AnalyzeGauss,
        degenerate: rho2 <= 0.0,
        diagnostic: false,
        notes,
    })
}
