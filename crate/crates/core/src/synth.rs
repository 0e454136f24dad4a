//! Gaussian-design generative model used by the simulations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::stats::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub sigma: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    p: usize,
    #[serde(rename = "Sigma")]
    sigma: Vec<f64>,
    beta: Vec<f64>,
    sigma2: f64,
}

impl ModelParams {
    pub fn new(sigma: DMatrix<f64>, beta: DVector<f64>, sigma2: f64) -> Result<Self> {
        let m = ModelParams { sigma, beta, sigma2 };
        m.validate()?;
        Ok(m)
    }

    /// Σ = I_p.
    pub fn isotropic(beta: DVector<f64>, sigma2: f64) -> Result<Self> {
        let p = beta.len();
        Self::new(DMatrix::identity(p, p), beta, sigma2)
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.beta.len();
        if p == 0 || self.sigma.shape() != (p, p) {
            return Err(Error::InvalidModel(format!(
                "Sigma is {:?}, beta has length {p}",
                self.sigma.shape()
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidModel(format!("sigma2 = {} must be positive", self.sigma2)));
        }
        if self.sigma.iter().chain(self.beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite model entry".into()));
        }
        if (&self.sigma - self.sigma.transpose()).amax() > 1e-12 * self.sigma.amax().max(1.0) {
            return Err(Error::InvalidModel("Sigma is not symmetric".into()));
        }
        self.sqrt_sigma().map(|_| ())
    }

    /// Symmetric square root V·diag(√λ)·Vᵀ. Fails naming the offending
    /// eigenvalue if Σ is not positive definite.
    pub fn sqrt_sigma(&self) -> Result<DMatrix<f64>> {
        let eig = symmetrize(&self.sigma).symmetric_eigen();
        let lmin = eig.eigenvalues.min();
        if !(lmin > 0.0) {
            return Err(Error::InvalidModel(format!("Sigma has eigenvalue {lmin:e}, not positive definite")));
        }
        let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = ModelWire {
            p: self.p(),
            sigma: self.sigma.transpose().as_slice().to_vec(),
            beta: self.beta.as_slice().to_vec(),
            sigma2: self.sigma2,
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: ModelWire = serde_json::from_str(text)?;
        Self::from_wire(wire)
    }

    fn from_wire(wire: ModelWire) -> Result<Self> {
        if wire.sigma.len() != wire.p * wire.p || wire.beta.len() != wire.p {
            return Err(Error::InvalidModel("Sigma must be p×p and beta length p".into()));
        }
        Self::new(DMatrix::from_row_slice(wire.p, wire.p, &wire.sigma), DVector::from_vec(wire.beta), wire.sigma2)
    }
}

impl Serialize for ModelParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelWire {
            p: self.p(),
            sigma: self.sigma.transpose().as_slice().to_vec(),
            beta: self.beta.as_slice().to_vec(),
            sigma2: self.sigma2,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = ModelWire::deserialize(d)?;
        ModelParams::from_wire(wire).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// The noise actually drawn; for oracle checks only.
    pub e: DVector<f64>,
}

impl SyntheticData {
    /// [X, y]
    pub fn joint(&self) -> DMatrix<f64> {
        let p = self.x.ncols();
        let mut a = self.x.clone().insert_column(p, 0.0);
        a.set_column(p, &self.y);
        a
    }
}

/// Rows x ~ N(0, Σ), e ~ N(0, σ²), y = Xβ + e. σ² = 0 is accepted here and
/// gives noiseless labels.
pub fn generate_dataset(model: &ModelParams, n: usize, rng: &mut SeededRng) -> Result<SyntheticData> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(model.sigma2 >= 0.0) {
        return Err(Error::InvalidModel("sigma2 must be nonnegative".into()));
    }
    let p = model.p();
    let root = model.sqrt_sigma()?;
    let z: Vec<f64> = (0..n * p).map(|_| rng.standard_normal()).collect();
    let z = DMatrix::from_row_slice(n, p, &z);
    let x = z * root;
    let sd = model.sigma2.sqrt();
    let e = DVector::from_fn(n, |_, _| sd * rng.standard_normal());
    let y = &x * &model.beta + &e;
    Ok(SyntheticData { x, y, e })
}

/// [[Σ, Σβ], [βᵀΣ, σ² + βᵀΣβ]]
pub fn build_sigma_a(model: &ModelParams) -> DMatrix<f64> {
    let p = model.p();
    let sb = &model.sigma * &model.beta;
    let mut out = DMatrix::zeros(p + 1, p + 1);
    out.view_mut((0, 0), (p, p)).copy_from(&model.sigma);
    for i in 0..p {
        out[(i, p)] = sb[i];
        out[(p, i)] = sb[i];
    }
    out[(p, p)] = model.sigma2 + model.beta.dot(&sb);
    out
}

/// min{σ_min(Σ), σ²}.
///
/// This is exact when β = 0 but is not a lower bound on σ_min(Σ_A) in
/// general: Σ_A = Lᵀ·diag(Σ, σ²)·L with L = [[I, β], [0, 1]], so the block
/// minimum has to be scaled by σ_min(L)² (see `sigma_a_min_lower_bound`).
pub fn sigma_a_min_bound(model: &ModelParams) -> f64 {
    symmetrize(&model.sigma).symmetric_eigenvalues().min().min(model.sigma2)
}

/// min{σ_min(Σ), σ²}·σ_min(L)², a valid lower bound on σ_min(Σ_A).
pub fn sigma_a_min_lower_bound(model: &ModelParams) -> f64 {
    let p = model.p();
    let mut l = DMatrix::identity(p + 1, p + 1);
    for i in 0..p {
        l[(i, p)] = model.beta[i];
    }
    let smin_l = l.singular_values().min();
    sigma_a_min_bound(model) * smin_l * smin_l
}

/// σ_min(Σ_A) computed exactly.
pub fn sigma_a_min(model: &ModelParams) -> f64 {
    build_sigma_a(model).symmetric_eigenvalues().min()
}

/// Largest row norm of [X, y].
pub fn empirical_row_bound(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (0..x.nrows())
        .map(|i| (x.row(i).norm_squared() + y[i] * y[i]).sqrt())
        .fold(0.0, f64::max)
}

/// ln(n·p)·σ_max(Σ_A), the analytic reference for B².
pub fn analytic_row_bound_sq(model: &ModelParams, n: usize) -> f64 {
    let smax = build_sigma_a(model).symmetric_eigenvalues().max();
    ((n * model.p()) as f64).ln() * smax
}

/// CSV with header x1..xp,y.
pub fn dataset_to_csv(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        rec.push(format!("{:.17e}", y[i]));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}
