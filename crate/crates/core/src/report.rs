use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::TailMass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferencePath {
    Ols,
    Projected,
    Ridge,
    AnalyzeGauss,
}

impl InferencePath {
    pub fn as_str(self) -> &'static str {
        match self {
            InferencePath::Ols => "ols",
            InferencePath::Projected => "projected",
            InferencePath::Ridge => "ridge",
            InferencePath::AnalyzeGauss => "analyze_gauss",
        }
    }
}

/// One coordinate's interval and test decision.
///
/// `t_stat`/`p_value` are absent on paths that define no test (ridge,
/// analyze_gauss) and on degenerate fits; `rejected` is then false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub coordinate: usize,
    pub center: f64,
    pub half_width: f64,
    pub alpha: TailMass,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub rejection_threshold: Option<f64>,
    pub rejected: bool,
    pub path: InferencePath,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default)]
    pub diagnostic: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl IntervalReport {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn covers(&self, value: f64) -> bool {
        (value - self.center).abs() <= self.half_width
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }
}

#[derive(Serialize)]
struct CsvRow {
    coordinate: usize,
    center: f64,
    half_width: f64,
    t: Option<f64>,
    p: Option<f64>,
    rejected: bool,
    path: &'static str,
}

/// Columns: coordinate, center, half_width, t, p, rejected, path.
pub fn reports_to_csv(reports: &[IntervalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(CsvRow {
            coordinate: r.coordinate,
            center: r.center,
            half_width: r.half_width,
            t: r.t_stat,
            p: r.p_value,
            rejected: r.rejected,
            path: r.path.as_str(),
        })
        .map_err(|e| crate::error::Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
