//! JSON run reports and coefficient-curve CSV exports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RescaleMap};
use crate::error::{Error, Result};
use crate::regression::{coefficient_curve, FitResult};
use crate::selector::SelectionTrace;
use crate::sim::AggregateMetrics;
use crate::spline::SplineBasis;

pub const SCHEMA_VERSION: u32 = 1;
pub const CURVE_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Settings a selection run was made with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim_l: usize,
    pub order: usize,
    pub eta_rule: String,
    pub eta: f64,
    pub patience: usize,
    pub max_steps: Option<usize>,
    pub criterion: String,
    pub screen_k: usize,
    pub initial_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: Option<String>,
    pub n: usize,
    pub p: usize,
    pub y_column: String,
    pub t_column: String,
    pub rescale: RescaleMap,
    /// Constant covariates left out of every candidate pool.
    pub excluded: Vec<String>,
}

impl DatasetSummary {
    pub fn of(dataset: &Dataset, source: Option<String>, y_column: &str, t_column: &str) -> Self {
        Self {
            source,
            n: dataset.n(),
            p: dataset.p(),
            y_column: y_column.to_string(),
            t_column: t_column.to_string(),
            rescale: dataset.rescale_map(),
            excluded: dataset
                .degenerate()
                .iter()
                .map(|&j| dataset.names()[j].clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedTerm {
    pub index: usize,
    pub name: String,
}

/// `beta_j(t)` on the report grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub index: usize,
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub tool: ToolInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub dataset: DatasetSummary,
    pub trace: SelectionTrace,
    pub final_set: Vec<SelectedTerm>,
    pub grid: Vec<f64>,
    pub curves: Vec<Curve>,
    /// `sigma2` after each step, starting with the initial set.
    pub sigma_sq_path: Vec<f64>,
    /// Criterion after each step, starting with the initial set; `null`
    /// where undefined.
    pub ebic_path: Vec<Option<f64>>,
    pub metrics: Option<AggregateMetrics>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(
        config: RunConfig,
        dataset_summary: DatasetSummary,
        names: &[String],
        trace: SelectionTrace,
        fit: &FitResult,
        basis: &SplineBasis,
    ) -> Result<Self> {
        let grid = curve_grid(CURVE_POINTS);
        let curves = build_curves(fit, basis, names, &grid)?;
        let sigma_sq_path = std::iter::once(trace.initial_sigma_sq)
            .chain(trace.steps.iter().map(|s| s.sigma_sq))
            .collect();
        let ebic_path = std::iter::once(Some(trace.initial_ebic))
            .chain(trace.steps.iter().map(|s| s.ebic))
            .collect();
        let final_set = trace
            .final_set
            .iter()
            .map(|&j| SelectedTerm {
                index: j,
                name: names[j].clone(),
            })
            .collect();
        let warnings = trace.warnings.clone();
        Ok(Self {
            schema: SCHEMA_VERSION,
            tool: ToolInfo::current(),
            timestamp: None,
            config,
            seed: None,
            dataset: dataset_summary,
            trace,
            final_set,
            grid,
            curves,
            sigma_sq_path,
            ebic_path,
            metrics: None,
            warnings,
        })
    }
}

/// `points` equally spaced values from 0 to 1 inclusive.
pub fn curve_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    }
}

/// One curve per term of `fit`, in the order of its index set.
pub fn build_curves(fit: &FitResult, basis: &SplineBasis, names: &[String], grid: &[f64]) -> Result<Vec<Curve>> {
    fit.index_set
        .iter()
        .map(|&j| {
            Ok(Curve {
                index: j,
                name: names.get(j).cloned().ok_or(Error::MissingCovariate(j))?,
                values: coefficient_curve(fit, basis, j, grid)?,
            })
        })
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json(value);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `t,<name1>,...` with one row per grid point.
pub fn write_curves(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(w, "t")?;
        for c in &report.curves {
            write!(w, ",{}", c.name)?;
        }
        writeln!(w)?;
        for (i, t) in report.grid.iter().enumerate() {
            write!(w, "{t:.2}")?;
            for c in &report.curves {
                write!(w, ",{:.10e}", c.values[i])?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
