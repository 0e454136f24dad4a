//! Seeded Monte Carlo experiments over the inference paths.
//!
//! Trial t draws its data from `SeededRng::for_trial(seed, t)` and its
//! release seed from the same stream, so trials are independent of each
//! other and of scheduling. Outcomes are collected in trial order and folded
//! sequentially, so parallel and sequential runs give byte-identical reports.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::analyze_gauss::{ag_ci_with, ag_precondition_margin, ag_release, ag_variance_upper_bound, AgConstants};
use crate::error::{Error, Result};
use crate::ols::{
    confidence_interval, fit_ols, min_sample_size_baseline, reject_null, two_sided_critical, DofPolicy, PowerParams,
    QuantileFamily, SampleSizeConstants,
};
use crate::projected::{
    fit_projected, min_r_for_power, projected_ci_with, projected_reject_null, sandwich_cdf_bounds,
    ProjectedPowerConstants, QuantileMode,
};
use crate::projection::{project, BoundedDataset, GateMode, PrivacyBudget, ProjectionOptions, ProjectionRelease, WFormula};
use crate::report::{InferencePath, IntervalReport};
use crate::ridge::{
    check_sign_condition, combined_ci_for_beta, fit_projected_ridge, ridge_ci_for_hat_beta, DesignSummary, OlsSide,
    SignModel,
};
use crate::stats::{dkw_radius, ks_statistic, student_t_cdf, student_t_quantile, Dof, SeededRng, TailMass};
use crate::synth::{empirical_row_bound, generate_dataset, ModelParams};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Runs `f(0..trials)` and returns the outputs in trial order. The first
/// failing trial (by index) is reported.
pub fn map_trials<T, F>(trials: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..trials as u64).into_par_iter().map(&f).collect(),
        _ => (0..trials as u64).map(&f).collect(),
    };
    results.into_iter().enumerate().map(|(t, r)| r.map_err(|e| e.in_trial(t))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Coverage,
    Power,
    PivotSandwich,
    WidthRatio,
    AgCoverage,
    RidgeSign,
}

/// Every tunable constant, written out in full in each report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    pub w_formula: WFormula,
    pub quantile_mode: QuantileMode,
    pub ols_sample_size: SampleSizeConstants,
    pub projected_power: ProjectedPowerConstants,
    pub analyze_gauss: AgConstants,
    pub sign_condition: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            w_formula: WFormula::default(),
            quantile_mode: QuantileMode::default(),
            ols_sample_size: SampleSizeConstants::default(),
            projected_power: ProjectedPowerConstants::default(),
            analyze_gauss: AgConstants::default(),
            sign_condition: 1.0,
        }
    }
}

fn default_eta() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: ModelParams,
    pub n: usize,
    pub r: usize,
    pub trials: usize,
    pub alpha: TailMass,
    pub nu: TailMass,
    pub budget: PrivacyBudget,
    pub seed: u64,
    pub path: InferencePath,
    #[serde(default)]
    pub coordinate: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Declared row bound (rows above it are clipped). `None` takes the
    /// largest row norm of each trial's data.
    #[serde(default)]
    pub bound: Option<f64>,
    #[serde(default)]
    pub gate: GateMode,
    #[serde(default)]
    pub constants: Constants,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        self.model.validate()?;
        self.budget.validate()?;
        let p = self.model.p();
        if self.coordinate >= p {
            return Err(Error::InvalidParameter(format!("coordinate {} out of range for p = {p}", self.coordinate)));
        }
        if self.n <= p {
            return Err(Error::Underdetermined { n: self.n, p });
        }
        if let Some(b) = self.bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!("row bound {b} must be positive")));
            }
        }
        let needs_projection = matches!(self.path, InferencePath::Projected | InferencePath::Ridge)
            || matches!(self.scenario, Scenario::PivotSandwich | Scenario::WidthRatio | Scenario::RidgeSign);
        if needs_projection && self.r <= p {
            return Err(Error::InsufficientRows { r: self.r, p });
        }
        let path_ok = match self.scenario {
            Scenario::Coverage => true,
            Scenario::Power => matches!(self.path, InferencePath::Ols | InferencePath::Projected),
            Scenario::PivotSandwich | Scenario::WidthRatio => self.path == InferencePath::Projected,
            Scenario::AgCoverage => self.path == InferencePath::AnalyzeGauss,
            Scenario::RidgeSign => self.path == InferencePath::Ridge,
        };
        if !path_ok {
            return Err(Error::InvalidParameter(format!(
                "scenario {:?} does not run on the {} path",
                self.scenario,
                self.path.as_str()
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta = {} must lie in (0, 1)", self.eta)));
        }
        Ok(())
    }

    fn projection_options(&self) -> ProjectionOptions {
        ProjectionOptions { formula: self.constants.w_formula, gate: self.gate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
    /// Trials the value is computed over.
    pub count: usize,
}

impl Metric {
    fn rate(hits: usize, count: usize) -> Self {
        let p = if count == 0 { f64::NAN } else { hits as f64 / count as f64 };
        let se = if count == 0 { f64::NAN } else { (p * (1.0 - p) / count as f64).sqrt() };
        Metric { value: p, standard_error: Some(se), count }
    }

    fn plain(value: f64, count: usize) -> Self {
        Metric { value, standard_error: None, count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metrics: BTreeMap<String, Metric>,
    /// Deterministic quantities computed once (theory values, trial-0 facts).
    pub derived: BTreeMap<String, f64>,
    pub sample_report: Option<IntervalReport>,
    pub summary: String,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }
}

/// Per-trial record; each scenario fills the fields it needs.
#[derive(Debug, Clone, Default)]
struct Outcome {
    hit: Option<bool>,
    extra: Option<bool>,
    third: Option<bool>,
    value: Option<f64>,
    width: Option<f64>,
    altered: bool,
    skipped: bool,
    report: Option<IntervalReport>,
    facts: BTreeMap<String, f64>,
}

struct TrialData {
    data: BoundedDataset,
    x: DMatrix<f64>,
    y: DVector<f64>,
    release_seed: u64,
}

fn trial_data(cfg: &ExperimentConfig, trial: u64) -> Result<TrialData> {
    let mut rng = SeededRng::for_trial(cfg.seed, trial);
    let synth = generate_dataset(&cfg.model, cfg.n, &mut rng)?;
    let p = cfg.model.p();
    let data = match cfg.bound {
        Some(b) => BoundedDataset::clipped(synth.joint(), b, p)?.0,
        None => {
            let b = empirical_row_bound(&synth.x, &synth.y) * (1.0 + 1e-12);
            BoundedDataset::new(synth.joint(), b.max(f64::MIN_POSITIVE), p)?
        }
    };
    let release_seed = rng.next_u64();
    Ok(TrialData { x: data.features(), y: data.label(), data, release_seed })
}

fn release(cfg: &ExperimentConfig, td: &TrialData) -> Result<ProjectionRelease> {
    project(&td.data, cfg.budget, cfg.r, td.release_seed, &cfg.projection_options())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(config, Execution::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentReport> {
    config.validate()?;
    let cfg = config;
    let outcomes = map_trials(cfg.trials, exec, |t| run_trial(cfg, t))?;
    aggregate(cfg, outcomes)
}

fn run_trial(cfg: &ExperimentConfig, trial: u64) -> Result<Outcome> {
    let td = trial_data(cfg, trial)?;
    let j = cfg.coordinate;
    let beta_j = cfg.model.beta[j];
    let mut out = Outcome::default();
    if trial == 0 {
        out.facts.insert("bound".into(), td.data.bound());
    }
    match cfg.scenario {
        Scenario::Coverage => match cfg.path {
            InferencePath::Ols => {
                let rep = confidence_interval(&fit_ols(&td.x, &td.y)?, j, cfg.alpha)?;
                out.hit = Some(rep.covers(beta_j));
                out.width = Some(2.0 * rep.half_width);
                out.report = Some(rep);
            }
            InferencePath::Projected => {
                let rel = release(cfg, &td)?;
                if rel.altered {
                    out.altered = true;
                } else {
                    let rep = projected_ci_with(&fit_projected(&rel)?, j, cfg.alpha, cfg.constants.quantile_mode)?;
                    out.hit = Some(rep.covers(beta_j));
                    out.width = Some(2.0 * rep.half_width);
                    out.report = Some(rep);
                }
            }
            InferencePath::Ridge => ridge_trial(cfg, &td, &mut out)?,
            InferencePath::AnalyzeGauss => ag_trial(cfg, &td, &mut out)?,
        },
        Scenario::Power => match cfg.path {
            InferencePath::Ols => {
                let rep = reject_null(&fit_ols(&td.x, &td.y)?, j, cfg.alpha)?;
                out.hit = Some(rep.rejected);
                out.report = Some(rep);
            }
            _ => {
                let rel = release(cfg, &td)?;
                if rel.altered {
                    out.altered = true;
                    out.hit = Some(false);
                } else {
                    let rep = projected_reject_null(&fit_projected(&rel)?, j, cfg.alpha)?;
                    out.hit = Some(rep.rejected);
                    out.report = Some(rep);
                }
            }
        },
        Scenario::PivotSandwich => {
            let rel = release(cfg, &td)?;
            if rel.altered {
                out.altered = true;
            } else {
                let fit = fit_projected(&rel)?;
                out.value = Some(fit.pivot(j, beta_j));
                out.report = Some(projected_ci_with(&fit, j, cfg.alpha, cfg.constants.quantile_mode)?);
            }
        }
        Scenario::WidthRatio => {
            let rel = release(cfg, &td)?;
            if rel.altered {
                out.altered = true;
            } else {
                let rep = projected_ci_with(&fit_projected(&rel)?, j, cfg.alpha, cfg.constants.quantile_mode)?;
                let ols = confidence_interval(&fit_ols(&td.x, &td.y)?, j, cfg.alpha)?;
                out.value = Some(rep.half_width / ols.half_width);
                out.report = Some(rep);
            }
        }
        Scenario::AgCoverage => ag_trial(cfg, &td, &mut out)?,
        Scenario::RidgeSign => ridge_trial(cfg, &td, &mut out)?,
    }
    Ok(out)
}

/// hit: interval covers βⱼ; extra: ρ² ≥ σ². A failed precondition counts
/// as a miss on both and is tallied separately.
fn ag_trial(cfg: &ExperimentConfig, td: &TrialData, out: &mut Outcome) -> Result<()> {
    let j = cfg.coordinate;
    let rel = ag_release(&td.data, cfg.budget, td.release_seed)?;
    let b = td.data.bound();
    if ag_precondition_margin(&rel, cfg.nu, cfg.eta)? <= 0.0 {
        out.skipped = true;
        out.hit = Some(false);
        out.extra = Some(false);
        return Ok(());
    }
    let rho2 = ag_variance_upper_bound(&rel, b, cfg.nu, cfg.eta, cfg.constants.analyze_gauss.rho)?;
    let rep = ag_ci_with(&rel, j, b, cfg.nu, cfg.eta, cfg.constants.analyze_gauss)?;
    out.hit = Some(rep.covers(cfg.model.beta[j]));
    out.extra = Some(rho2 >= cfg.model.sigma2);
    out.width = Some(2.0 * rep.half_width);
    out.value = Some(rho2);
    out.report = Some(rep);
    Ok(())
}

/// hit: sign(β′ⱼ) = sign(βⱼ); extra: the diagnostic combined interval covers
/// βⱼ; third: the ridge interval covers β̂ⱼ. An unaltered release is skipped.
fn ridge_trial(cfg: &ExperimentConfig, td: &TrialData, out: &mut Outcome) -> Result<()> {
    let j = cfg.coordinate;
    let rel = release(cfg, td)?;
    if !rel.altered {
        out.skipped = true;
        return Ok(());
    }
    out.altered = true;
    let fit = fit_projected_ridge(&rel)?;
    let ols = fit_ols(&td.x, &td.y)?;
    let side = OlsSide { zeta_norm2: ols.zeta_norm2, xtx_inverse_diag_j: ols.xtx_inverse_diag[j], dof: ols.dof };
    let combined = combined_ci_for_beta(&fit, Some(&side), j, cfg.alpha)?;
    let hat = ridge_ci_for_hat_beta(&fit, j, cfg.alpha)?;
    let beta_j = cfg.model.beta[j];
    out.hit = Some(fit.beta_prime[j].signum() == beta_j.signum() && beta_j != 0.0);
    out.extra = Some(combined.covers(beta_j));
    out.third = Some(hat.covers(ols.beta_hat[j]));
    out.width = Some(2.0 * combined.half_width);
    out.report = Some(combined);
    if out.facts.contains_key("bound") && beta_j != 0.0 {
        let g = td.x.transpose() * &td.x;
        let design = DesignSummary {
            pseudo_frob2: crate::linalg::pinv_frobenius2(&td.x)?,
            sigma_min_scaled_gram: crate::linalg::min_eigenvalue(&g) / cfg.n as f64,
        };
        let model = SignModel { beta: &cfg.model.beta, sigma2: cfg.model.sigma2 };
        let cond = check_sign_condition(
            &model,
            design,
            cfg.r,
            cfg.n,
            cfg.model.p(),
            cfg.alpha,
            cfg.nu,
            cfg.eta,
            j,
            cfg.constants.sign_condition,
        )?;
        out.facts.insert("sign_condition_satisfied".into(), cond.satisfied as u8 as f64);
        for (k, v) in cond.margins {
            out.facts.insert(format!("sign_condition_margin_{k}"), v);
        }
        out.facts.insert("w".into(), rel.w);
    }
    Ok(())
}

/// Grid on which the pivot's empirical CDF is compared with the band.
pub fn sandwich_grid() -> Vec<f64> {
    (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect()
}

/// Largest amount by which the empirical CDF of `pivots` leaves the
/// integrated sandwich band widened by `radius`; ≤ 0 means inside everywhere.
pub fn sandwich_band_excess(pivots: &[f64], r: usize, p: usize, n: usize, radius: f64) -> Result<f64> {
    let mut sorted = pivots.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut worst = f64::NEG_INFINITY;
    for x in sandwich_grid() {
        let ecdf = sorted.partition_point(|v| *v <= x) as f64 / m;
        let (lo, hi) = sandwich_cdf_bounds(x, r, p, n)?;
        worst = worst.max(lo - radius - ecdf).max(ecdf - hi - radius);
    }
    Ok(worst)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// (e^{a}·c̃_α / c_α)·√(n/r): the predicted projected-to-OLS width ratio.
pub fn theoretical_width_ratio(alpha: TailMass, n: usize, r: usize, p: usize) -> Result<f64> {
    let a = (r - p) as f64 / (n - p) as f64;
    let mass = TailMass::new(0.5 * alpha.get() * (-a).exp())?;
    let c_tilde = a.exp() * student_t_quantile(mass.complement(), Dof::new((r - p) as u64)?);
    let c = two_sided_critical(alpha, QuantileFamily::StudentT, Dof::new((n - p) as u64)?)?;
    Ok(c_tilde / c * (n as f64 / r as f64).sqrt())
}

fn aggregate(cfg: &ExperimentConfig, outcomes: Vec<Outcome>) -> Result<ExperimentReport> {
    let mut metrics = BTreeMap::new();
    let mut derived = BTreeMap::new();
    let total = outcomes.len();
    let altered = outcomes.iter().filter(|o| o.altered).count();
    let skipped = outcomes.iter().filter(|o| o.skipped).count();
    let count_true = |f: fn(&Outcome) -> Option<bool>| -> (usize, usize) {
        outcomes.iter().filter_map(f).fold((0, 0), |(h, c), b| (h + b as usize, c + 1))
    };
    let values: Vec<f64> = outcomes.iter().filter_map(|o| o.value).collect();
    let widths: Vec<f64> = outcomes.iter().filter_map(|o| o.width).collect();
    if let Some(first) = outcomes.first() {
        derived.extend(first.facts.clone());
    }
    let p = cfg.model.p();
    metrics.insert("altered_rate".into(), Metric::rate(altered, total));
    let mut lines = vec![format!(
        "{:?} on the {} path: {} trials, n = {}, r = {}, eps = {}, delta = {}",
        cfg.scenario,
        cfg.path.as_str(),
        total,
        cfg.n,
        cfg.r,
        cfg.budget.epsilon,
        cfg.budget.delta
    )];
    match cfg.scenario {
        Scenario::Coverage | Scenario::AgCoverage => {
            let (h, c) = count_true(|o| o.hit);
            metrics.insert("coverage".into(), Metric::rate(h, c));
            if !widths.is_empty() {
                metrics.insert("mean_width".into(), Metric::plain(mean(&widths), widths.len()));
            }
            lines.push(format!("coverage {:.4} over {c} usable trials", h as f64 / c.max(1) as f64));
            if cfg.path == InferencePath::AnalyzeGauss {
                let (h2, c2) = count_true(|o| o.extra);
                metrics.insert("rho2_upper_rate".into(), Metric::rate(h2, c2));
                metrics.insert("precondition_failure_rate".into(), Metric::rate(skipped, total));
                lines.push(format!("rho^2 >= sigma^2 in {:.4} of trials", h2 as f64 / c2.max(1) as f64));
            }
            if cfg.path == InferencePath::Ridge {
                add_ridge_metrics(&outcomes, &mut metrics, &mut lines, skipped, total);
            }
        }
        Scenario::Power => {
            let (h, c) = count_true(|o| o.hit);
            metrics.insert("rejection_rate".into(), Metric::rate(h, c));
            lines.push(format!("rejection rate {:.4} ({altered} altered releases count as non-rejections)", h as f64 / c as f64));
        }
        Scenario::PivotSandwich => {
            let radius = dkw_radius(0.001, values.len().max(1));
            let excess = sandwich_band_excess(&values, cfg.r, p, cfg.n, radius)?;
            let k = Dof::new((cfg.r - p) as u64)?;
            metrics.insert("band_excess".into(), Metric::plain(excess, values.len()));
            metrics.insert("ks_vs_student_t".into(), Metric::plain(ks_statistic(&values, |t| student_t_cdf(t, k)), values.len()));
            derived.insert("dkw_radius".into(), radius);
            derived.insert("a_ratio".into(), (cfg.r - p) as f64 / (cfg.n - p) as f64);
            lines.push(format!("largest excursion outside the widened band: {excess:.5} (<= 0 is inside)"));
        }
        Scenario::WidthRatio => {
            let mut v = values.clone();
            let med = median(&mut v);
            let theory = theoretical_width_ratio(cfg.alpha, cfg.n, cfg.r, p)?;
            metrics.insert("median_width_ratio".into(), Metric::plain(med, values.len()));
            metrics.insert("ratio_to_theory".into(), Metric::plain(med / theory, values.len()));
            derived.insert("theoretical_width_ratio".into(), theory);
            lines.push(format!("median width ratio {med:.4}, predicted {theory:.4}"));
        }
        Scenario::RidgeSign => add_ridge_metrics(&outcomes, &mut metrics, &mut lines, skipped, total),
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        metrics,
        derived,
        sample_report: outcomes.iter().find_map(|o| o.report.clone()),
        summary: lines.join("\n"),
    })
}

fn add_ridge_metrics(
    outcomes: &[Outcome],
    metrics: &mut BTreeMap<String, Metric>,
    lines: &mut Vec<String>,
    skipped: usize,
    total: usize,
) {
    let tally = |f: fn(&Outcome) -> Option<bool>| outcomes.iter().filter_map(f).fold((0, 0), |(h, c), b| (h + b as usize, c + 1));
    let (s, c) = tally(|o| o.hit);
    let (cc, _) = tally(|o| o.extra);
    let (hb, _) = tally(|o| o.third);
    metrics.insert("sign_agreement".into(), Metric::rate(s, c));
    metrics.insert("combined_coverage".into(), Metric::rate(cc, c));
    metrics.insert("hat_beta_coverage".into(), Metric::rate(hb, c));
    metrics.insert("unaltered_skipped_rate".into(), Metric::rate(skipped, total));
    let c1 = c.max(1) as f64;
    lines.push(format!(
        "sign agreement {:.4}, combined-interval coverage {:.4}, beta_hat coverage {:.4} over {c} altered releases",
        s as f64 / c1,
        cc as f64 / c1,
        hb as f64 / c1
    ));
}

/// Cartesian grid of power cells sharing everything else with `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerGrid {
    pub base: ExperimentConfig,
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    pub epsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub n: usize,
    pub r: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub path: InferencePath,
    pub trials: usize,
    pub rejection_rate: f64,
    pub standard_error: f64,
    pub altered_rate: f64,
    /// Sample size the non-private analysis asks for.
    pub ols_min_n: u64,
    /// Projection size the private analysis asks for at this n; empty when
    /// that exceeds n.
    pub projected_min_r: Option<u64>,
}

pub fn power_cells(grid: &PowerGrid, exec: Execution) -> Result<Vec<PowerCell>> {
    let base = &grid.base;
    let p = base.model.p();
    let j = base.coordinate;
    let sigma_min = crate::linalg::min_eigenvalue(&base.model.sigma);
    let params = PowerParams {
        sigma2: base.model.sigma2,
        beta_j: base.model.beta[j],
        sigma_min_sigma: sigma_min,
        alpha: base.alpha,
        nu: base.nu,
        p,
    };
    let ols_min_n = min_sample_size_baseline(&params, base.constants.ols_sample_size, DofPolicy::NormalApprox)?;
    let mut cells = Vec::new();
    for &n in &grid.n {
        let projected_min_r =
            match min_r_for_power(&params, Some(n), base.constants.projected_power, base.constants.quantile_mode) {
                Ok(r) => Some(r),
                Err(Error::Infeasible(_)) => None,
                Err(e) => return Err(e),
            };
        for &r in &grid.r {
            for &eps in &grid.epsilon {
                let mut cfg = base.clone();
                cfg.scenario = Scenario::Power;
                cfg.n = n;
                cfg.r = r;
                cfg.budget = PrivacyBudget::new(eps, base.budget.delta)?;
                let rep = run_experiment_with(&cfg, exec)?;
                let rej = rep.metrics["rejection_rate"];
                cells.push(PowerCell {
                    n,
                    r,
                    epsilon: eps,
                    delta: base.budget.delta,
                    path: cfg.path,
                    trials: cfg.trials,
                    rejection_rate: rej.value,
                    standard_error: rej.standard_error.unwrap_or(f64::NAN),
                    altered_rate: rep.metrics["altered_rate"].value,
                    ols_min_n,
                    projected_min_r,
                });
            }
        }
    }
    Ok(cells)
}

/// The grid as CSV with analytic bounds alongside the empirical rates.
pub fn power_tables(grid: &PowerGrid, exec: Execution) -> Result<String> {
    let cells = power_cells(grid, exec)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &cells {
        w.serialize(c).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}
