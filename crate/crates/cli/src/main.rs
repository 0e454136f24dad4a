//! `privreg`: private regression releases and inference from the command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible regime, 4 degenerate fit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use privreg::analyze_gauss::{ag_ci_with, ag_release, AgConstants, AgRelease};
use privreg::error::{Error, ErrorKind, Result};
use privreg::harness::{power_tables, run_experiment_with, Execution, ExperimentConfig, PowerGrid};
use privreg::ingest::{load_csv, BoundPolicy, LabelSpec, LoadedData};
use privreg::ledger::BudgetLedger;
use privreg::ols::{fit_ols, reject_null};
use privreg::projected::{choose_r, fit_projected, private_sigma_min_estimate, projected_reject_null};
use privreg::projection::{
    noise_magnitude_w_with, project, GateMode, PrivacyBudget, ProjectionOptions, ProjectionRelease, WFormula,
};
use privreg::report::IntervalReport;
use privreg::ridge::{combined_ci_for_beta, fit_projected_ridge, ridge_ci_for_hat_beta, OlsSide};
use privreg::stats::{SeededRng, TailMass};

#[derive(Parser)]
#[command(name = "privreg", version, about = "Differentially private linear regression inference")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// RNG seed for releases; drawn from the OS when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Declared bound B on the norm of each data row (features and label).
    #[arg(long, global = true)]
    bound: Option<f64>,
    /// Label column, by name or zero-based index. Defaults to the last column.
    #[arg(long, global = true)]
    label: Option<String>,
    /// Experiment config (simulate) or power grid (power), JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Budget ledger that release commands append to.
    #[arg(long, global = true, default_value = "privreg-ledger.json")]
    ledger: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Reject,
    Clip,
    Declared,
}

impl From<PolicyArg> for BoundPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Reject => BoundPolicy::Reject,
            PolicyArg::Clip => BoundPolicy::Clip,
            PolicyArg::Declared => BoundPolicy::Declared,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulaArg {
    DoubleLog,
    SingleLog,
}

#[derive(Subcommand)]
enum Command {
    /// Release a Gaussian sketch of the data behind the PTR gate.
    Project {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value = "reject")]
        bound_policy: PolicyArg,
        #[arg(long, value_enum, default_value = "double-log")]
        w_formula: FormulaArg,
    },
    /// Non-private OLS intervals and t-tests (baseline).
    FitOls {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Intervals and tests from an unaltered sketch.
    FitProjected {
        #[arg(long)]
        release: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Intervals from an altered (regularized) sketch.
    FitRidge {
        #[arg(long)]
        release: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Raw data for the diagnostic combined interval on beta. Not private.
        #[arg(long)]
        diagnostic_data: Option<PathBuf>,
    },
    /// Release a noisy Gram matrix (--input) or compute intervals from one (--release).
    AnalyzeGauss {
        #[arg(long, conflicts_with = "release", required_unless_present = "release")]
        input: Option<PathBuf>,
        #[arg(long)]
        release: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        nu: f64,
        #[arg(long, default_value_t = 0.25)]
        eta: f64,
        #[arg(long, value_enum, default_value = "reject")]
        bound_policy: PolicyArg,
    },
    /// Run a Monte Carlo experiment described by --config.
    Simulate {
        #[arg(long)]
        sequential: bool,
    },
    /// Empirical power over the (n, r, epsilon) grid in --config, as CSV.
    Power {
        #[arg(long)]
        sequential: bool,
    },
    /// Sketch size r for the projected path, and the w it implies.
    ChooseR {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        /// Lower bound on the smallest singular value of the joint row covariance.
        #[arg(long, conflicts_with = "input")]
        sigma_min_a: Option<f64>,
        /// Estimate that bound privately from this file (spends --epsilon, --delta is unused).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        nu: f64,
    },
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required for this command")))
}

fn budget(g: &Global) -> Result<PrivacyBudget> {
    PrivacyBudget::new(need(g.epsilon, "epsilon")?, need(g.delta, "delta")?)
}

fn label(g: &Global, path: &Path) -> Result<LabelSpec> {
    if let Some(l) = &g.label {
        return Ok(LabelSpec::parse(l));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let columns = text.lines().next().map_or(0, |h| h.split(',').count());
    if columns == 0 {
        return Err(Error::InvalidInput(format!("{}: empty file", path.display())));
    }
    Ok(LabelSpec::Index(columns - 1))
}

fn load(g: &Global, path: &Path, bound: f64, policy: BoundPolicy) -> Result<LoadedData> {
    let loaded = load_csv(path, &label(g, path)?, bound, policy)?;
    if !loaded.dropped.is_empty() || !loaded.clipped.is_empty() {
        eprintln!("bound {bound}: dropped rows {:?}, clipped rows {:?}", loaded.dropped, loaded.clipped);
    }
    Ok(loaded)
}

fn seed(g: &Global) -> u64 {
    g.seed.unwrap_or_else(rand::random)
}

fn tail(q: f64) -> Result<TailMass> {
    TailMass::new(q)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn emit_json(g: &Global, v: &serde_json::Value) -> Result<()> {
    emit(g, &serde_json::to_string_pretty(v)?)
}

fn spend(g: &Global, mechanism: &str, epsilon: f64, delta: f64) -> Result<()> {
    let l = BudgetLedger::append_to_file(&g.ledger, mechanism, epsilon, delta)?;
    let t = l.totals();
    eprintln!("ledger {}: spent epsilon {} delta {} in total", g.ledger.display(), t.epsilon, t.delta);
    Ok(())
}

fn reports(p: usize, f: impl Fn(usize) -> Result<IntervalReport>) -> Result<Vec<IntervalReport>> {
    (0..p).map(f).collect()
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Project { input, r, bound_policy, w_formula } => {
            let b = budget(g)?;
            let data = load(g, &input, need(g.bound, "bound")?, bound_policy.into())?.dataset;
            let formula = match w_formula {
                FormulaArg::DoubleLog => WFormula::DoubleLog,
                FormulaArg::SingleLog => WFormula::SingleLog,
            };
            let rel = project(&data, b, r, seed(g), &ProjectionOptions { formula, gate: GateMode::Enforce })?;
            spend(g, "projection", b.epsilon, b.delta)?;
            eprintln!("released r = {r}, w = {:.4}, altered = {}", rel.w, rel.altered);
            emit(g, &rel.to_json()?)
        }
        Command::FitOls { input, alpha } => {
            let data = load(g, &input, f64::MAX, BoundPolicy::Reject)?.dataset;
            let fit = fit_ols(&data.features(), &data.label())?;
            let a = tail(alpha)?;
            let reps = reports(fit.p, |j| reject_null(&fit, j, a))?;
            emit_json(g, &json!({ "path": "ols", "beta_hat": fit.beta_hat.as_slice(), "intervals": reps }))
        }
        Command::FitProjected { release, alpha } => {
            let rel = ProjectionRelease::from_json(&read(&release)?)?;
            let fit = fit_projected(&rel)?;
            let a = tail(alpha)?;
            let reps = reports(fit.p, |j| projected_reject_null(&fit, j, a))?;
            emit_json(g, &json!({ "path": "projected", "beta_tilde": fit.beta_tilde.as_slice(), "intervals": reps }))
        }
        Command::FitRidge { release, alpha, diagnostic_data } => {
            let rel = ProjectionRelease::from_json(&read(&release)?)?;
            let fit = fit_projected_ridge(&rel)?;
            let a = tail(alpha)?;
            let hat = reports(fit.p, |j| ridge_ci_for_hat_beta(&fit, j, a))?;
            let combined = match diagnostic_data {
                Some(path) => {
                    let data = load(g, &path, f64::MAX, BoundPolicy::Reject)?.dataset;
                    let ols = fit_ols(&data.features(), &data.label())?;
                    if ols.p != fit.p {
                        return Err(Error::InvalidInput(format!(
                            "diagnostic data has {} features, release has {}",
                            ols.p, fit.p
                        )));
                    }
                    let side = |j: usize| OlsSide {
                        zeta_norm2: ols.zeta_norm2,
                        xtx_inverse_diag_j: ols.xtx_inverse_diag[j],
                        dof: ols.dof,
                    };
                    Some(reports(fit.p, |j| combined_ci_for_beta(&fit, Some(&side(j)), j, a))?)
                }
                None => None,
            };
            emit_json(
                g,
                &json!({
                    "path": "ridge",
                    "beta_prime": fit.beta_prime.as_slice(),
                    "w": fit.w,
                    "intervals": hat,
                    "combined_intervals": combined,
                }),
            )
        }
        Command::AnalyzeGauss { input, release, nu, eta, bound_policy } => match (input, release) {
            (Some(input), _) => {
                let b = budget(g)?;
                let data = load(g, &input, need(g.bound, "bound")?, bound_policy.into())?.dataset;
                let rel = ag_release(&data, b, seed(g))?;
                spend(g, "analyze_gauss", b.epsilon, b.delta)?;
                emit(g, &rel.to_json()?)
            }
            (None, Some(release)) => {
                let rel = AgRelease::from_json(&read(&release)?)?;
                let bound = need(g.bound, "bound")?;
                let nu = tail(nu)?;
                let reps = reports(rel.p, |j| ag_ci_with(&rel, j, bound, nu, eta, AgConstants::default()))?;
                emit_json(g, &json!({ "path": "analyze_gauss", "intervals": reps }))
            }
            (None, None) => Err(Error::InvalidParameter("--input or --release is required".into())),
        },
        Command::Simulate { sequential } => {
            let cfg: ExperimentConfig = serde_json::from_str(&read(&need(g.config.clone(), "config")?)?)?;
            let rep = run_experiment_with(&cfg, exec(sequential))?;
            eprintln!("{}", rep.summary);
            emit(g, &rep.to_json()?)
        }
        Command::Power { sequential } => {
            let grid: PowerGrid = serde_json::from_str(&read(&need(g.config.clone(), "config")?)?)?;
            let csv = power_tables(&grid, exec(sequential))?;
            emit(g, csv.trim_end())
        }
        Command::ChooseR { n, p, sigma_min_a, input, nu } => {
            let b = budget(g)?;
            let bound = need(g.bound, "bound")?;
            let (n, p, s) = match input {
                Some(path) => {
                    let data = load(g, &path, bound, BoundPolicy::Reject)?.dataset;
                    let mut rng = SeededRng::new(seed(g));
                    let est = private_sigma_min_estimate(data.data(), bound, b, tail(nu)?, &mut rng)?;
                    spend(g, "sigma_min_estimate", b.epsilon, 0.0)?;
                    (data.n(), data.p(), est.per_row)
                }
                None => (need(n, "n")?, need(p, "p")?, need(sigma_min_a, "sigma-min-a")?),
            };
            if s.is_nan() || s <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "private estimate of sigma_min(Sigma_A) is {s:.4}; too little data for this budget"
                )));
            }
            let r = choose_r(n, p, bound, b, s)?;
            let w = noise_magnitude_w_with(bound, b, r, WFormula::DoubleLog)?;
            emit_json(g, &json!({ "r": r, "w": w, "n": n, "p": p, "sigma_min_a": s }))
        }
    }
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::InvalidInput => 2,
                ErrorKind::Infeasible => 3,
                ErrorKind::Degenerate => 4,
            })
        }
    }
}
