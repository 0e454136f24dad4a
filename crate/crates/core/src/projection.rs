//! Private Johnson-Lindenstrauss projection.
//!
//! A Laplace-noised test on σ_min(A)² decides whether the data is projected
//! as is, or first stacked on top of w·I. The label column is moved last in
//! the released sketch, so downstream fits never need to be told where it is.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, min_singular_value};
use crate::stats::{sample_laplace, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let b = PrivacyBudget { epsilon, delta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta {} must lie in (0,1)", self.delta)));
        }
        Ok(())
    }

    /// ln(1/δ)
    pub fn log_inv_delta(&self) -> f64 {
        -self.delta.ln()
    }
}

/// Data matrix whose rows all have norm at most `bound`.
#[derive(Debug, Clone)]
pub struct BoundedDataset {
    data: DMatrix<f64>,
    bound: f64,
    label_column: usize,
}

fn row_norm(data: &DMatrix<f64>, i: usize) -> f64 {
    data.row(i).norm()
}

impl BoundedDataset {
    pub fn new(data: DMatrix<f64>, bound: f64, label_column: usize) -> Result<Self> {
        Self::check_shape(&data, bound, label_column)?;
        for i in 0..data.nrows() {
            let norm = row_norm(&data, i);
            if norm > bound {
                return Err(Error::RefusedRow { row: i, norm, bound });
            }
        }
        Ok(BoundedDataset { data, bound, label_column })
    }

    /// Rescales every row above the bound to norm exactly `bound`.
    /// Returns the indices of the rows that were touched.
    pub fn clipped(mut data: DMatrix<f64>, bound: f64, label_column: usize) -> Result<(Self, Vec<usize>)> {
        Self::check_shape(&data, bound, label_column)?;
        let mut touched = Vec::new();
        for i in 0..data.nrows() {
            let norm = row_norm(&data, i);
            if norm > bound {
                let s = bound / norm;
                data.row_mut(i).scale_mut(s);
                touched.push(i);
            }
        }
        Ok((BoundedDataset { data, bound, label_column }, touched))
    }

    fn check_shape(data: &DMatrix<f64>, bound: f64, label_column: usize) -> Result<()> {
        if data.nrows() == 0 || data.ncols() < 2 {
            return Err(Error::InvalidInput("dataset needs at least one row and two columns".into()));
        }
        ensure_finite(data)?;
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("row bound {bound} must be positive")));
        }
        if label_column >= data.ncols() {
            return Err(Error::InvalidParameter(format!(
                "label column {label_column} out of range for {} columns",
                data.ncols()
            )));
        }
        Ok(())
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn label_column(&self) -> usize {
        self.label_column
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    /// Number of features, d − 1.
    pub fn p(&self) -> usize {
        self.data.ncols() - 1
    }

    pub fn features(&self) -> DMatrix<f64> {
        self.data.clone().remove_column(self.label_column)
    }

    pub fn label(&self) -> DVector<f64> {
        self.data.column(self.label_column).clone_owned()
    }

    /// [X, y]: features in their original order, label last.
    pub fn joint(&self) -> DMatrix<f64> {
        let x = self.features();
        let mut out = x.insert_column(self.p(), 0.0);
        out.set_column(self.p(), &self.data.column(self.label_column));
        out
    }
}

/// Which additive constant the w² formula uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WFormula {
    /// (8B²/ε)(√(2r ln(8/δ)) + 2 ln(8/δ))
    #[default]
    DoubleLog,
    /// (8B²/ε)(√(2r ln(8/δ)) + ln(8/δ))
    SingleLog,
}

pub fn noise_magnitude_w(bound: f64, budget: PrivacyBudget, r: usize) -> Result<f64> {
    noise_magnitude_w_with(bound, budget, r, WFormula::DoubleLog)
}

pub fn noise_magnitude_w_with(bound: f64, budget: PrivacyBudget, r: usize, formula: WFormula) -> Result<f64> {
    budget.validate()?;
    if r == 0 {
        return Err(Error::InvalidParameter("r must be at least 1".into()));
    }
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!("row bound {bound} must be positive")));
    }
    let l = (8.0 / budget.delta).ln();
    let additive = match formula {
        WFormula::DoubleLog => 2.0 * l,
        WFormula::SingleLog => l,
    };
    let w2 = 8.0 * bound * bound / budget.epsilon * ((2.0 * r as f64 * l).sqrt() + additive);
    Ok(w2.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub passed: bool,
    /// The Laplace draw Z.
    pub noise: f64,
    pub sigma_min_sq: f64,
    /// w² + Z + 4B² ln(1/δ)/ε
    pub threshold: f64,
}

/// Tests σ_min(A)² > w² + Z + 4B² ln(1/δ)/ε with Z ~ Lap(4B²/ε).
pub fn ptr_gate(a: &DMatrix<f64>, bound: f64, budget: PrivacyBudget, w: f64, rng: &mut SeededRng) -> Result<GateOutcome> {
    budget.validate()?;
    let sigma_min_sq = min_singular_value(a)?.powi(2);
    gate_from_sigma(sigma_min_sq, bound, budget, w, rng)
}

pub(crate) fn gate_from_sigma(
    sigma_min_sq: f64,
    bound: f64,
    budget: PrivacyBudget,
    w: f64,
    rng: &mut SeededRng,
) -> Result<GateOutcome> {
    let b2 = bound * bound;
    let noise = sample_laplace(4.0 * b2 / budget.epsilon, rng)?;
    let threshold = w * w + noise + 4.0 * b2 * budget.log_inv_delta() / budget.epsilon;
    log::debug!("ptr gate: sigma_min^2 = {sigma_min_sq}, Z = {noise}, threshold = {threshold}");
    Ok(GateOutcome { passed: sigma_min_sq > threshold, noise, sigma_min_sq, threshold })
}

/// [A; w·I_d]
pub fn append_regularizer(a: &DMatrix<f64>, w: f64) -> DMatrix<f64> {
    let (n, d) = a.shape();
    let mut out = DMatrix::zeros(n + d, d);
    out.rows_mut(0, n).copy_from(a);
    for j in 0..d {
        out[(n + j, j)] = w;
    }
    out
}

/// R·A for R an r×n matrix of i.i.d. standard normals drawn in row-major
/// order. Produces the same matrix as `sample_gaussian_matrix(r, n) * a`
/// with the same generator, without materializing R.
pub fn gaussian_sketch(a: &DMatrix<f64>, r: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let (n, d) = a.shape();
    let rows: Vec<f64> = a.transpose().as_slice().to_vec(); // row-major copy of A
    let mut out = vec![0.0; r * d];
    for k in 0..r {
        let acc = &mut out[k * d..(k + 1) * d];
        for i in 0..n {
            let z = rng.standard_normal();
            let row = &rows[i * d..(i + 1) * d];
            for (o, v) in acc.iter_mut().zip(row) {
                *o += z * v;
            }
        }
    }
    DMatrix::from_row_slice(r, d, &out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Run the private test.
    #[default]
    Enforce,
    /// Skip the test and project A directly. Simulation only.
    ForceUnaltered,
    /// Skip the test and always append w·I. Simulation only.
    ForceAltered,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    #[serde(default)]
    pub formula: WFormula,
    #[serde(default)]
    pub gate: GateMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRelease {
    /// r×d, label in the last column.
    pub sketch: DMatrix<f64>,
    pub altered: bool,
    pub r: usize,
    pub w: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub n_public: usize,
    pub seed: u64,
}

pub fn project(
    data: &BoundedDataset,
    budget: PrivacyBudget,
    r: usize,
    seed: u64,
    options: &ProjectionOptions,
) -> Result<ProjectionRelease> {
    let a = data.joint();
    let w = noise_magnitude_w_with(data.bound(), budget, r, options.formula)?;
    let mut rng = SeededRng::new(seed);
    let passed = match options.gate {
        GateMode::Enforce => ptr_gate(&a, data.bound(), budget, w, &mut rng)?.passed,
        GateMode::ForceUnaltered => true,
        GateMode::ForceAltered => false,
    };
    let sketch = if passed {
        gaussian_sketch(&a, r, &mut rng)
    } else {
        gaussian_sketch(&append_regularizer(&a, w), r, &mut rng)
    };
    Ok(ProjectionRelease { sketch, altered: !passed, r, w, epsilon: budget.epsilon, delta: budget.delta, n_public: data.n(), seed })
}

impl ProjectionRelease {
    /// Test hook: build a release from an explicit projector instead of a
    /// random one. `a` must already have the label last; when `altered` the
    /// projector needs n + d columns.
    pub fn with_projector(
        a: &DMatrix<f64>,
        projector: &DMatrix<f64>,
        altered: bool,
        w: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        let source = if altered { append_regularizer(a, w) } else { a.clone() };
        if projector.ncols() != source.nrows() {
            return Err(Error::InvalidInput(format!(
                "projector has {} columns, expected {}",
                projector.ncols(),
                source.nrows()
            )));
        }
        Ok(ProjectionRelease {
            sketch: projector * source,
            altered,
            r: projector.nrows(),
            w,
            epsilon: budget.epsilon,
            delta: budget.delta,
            n_public: a.nrows(),
            seed: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.sketch.ncols()
    }

    pub fn p(&self) -> usize {
        self.sketch.ncols() - 1
    }

    /// (M, Ry): feature block and label column of the sketch.
    pub fn split(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.p();
        (self.sketch.columns(0, p).clone_owned(), self.sketch.column(p).clone_owned())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut flat = String::from("[");
        for i in 0..self.sketch.nrows() {
            for j in 0..self.sketch.ncols() {
                if i + j > 0 {
                    flat.push(',');
                }
                flat.push_str(&format!("{:.16e}", self.sketch[(i, j)]));
            }
        }
        flat.push(']');
        let wire = WireOut {
            r: self.r,
            d: self.d(),
            altered: self.altered,
            w: self.w,
            epsilon: self.epsilon,
            delta: self.delta,
            n_public: self.n_public,
            seed: self.seed,
            sketch: RawValue::from_string(flat)?,
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: WireIn = serde_json::from_str(text)?;
        if wire.r == 0 || wire.d < 2 || wire.sketch.len() != wire.r * wire.d {
            return Err(Error::InvalidInput(format!(
                "sketch holds {} values, expected r·d = {}·{}",
                wire.sketch.len(),
                wire.r,
                wire.d
            )));
        }
        let sketch = DMatrix::from_row_slice(wire.r, wire.d, &wire.sketch);
        ensure_finite(&sketch)?;
        PrivacyBudget::new(wire.epsilon, wire.delta)?;
        Ok(ProjectionRelease {
            sketch,
            altered: wire.altered,
            r: wire.r,
            w: wire.w,
            epsilon: wire.epsilon,
            delta: wire.delta,
            n_public: wire.n_public,
            seed: wire.seed,
        })
    }
}

#[derive(Serialize)]
struct WireOut {
    r: usize,
    d: usize,
    altered: bool,
    w: f64,
    epsilon: f64,
    delta: f64,
    n_public: usize,
    seed: u64,
    sketch: Box<RawValue>,
}

#[derive(Deserialize)]
struct WireIn {
    r: usize,
    d: usize,
    altered: bool,
    w: f64,
    epsilon: f64,
    delta: f64,
    n_public: usize,
    seed: u64,
    sketch: Vec<f64>,
}
