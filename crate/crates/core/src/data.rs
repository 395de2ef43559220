//! Datasets for varying coefficient regression and their CSV form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{BasisMatrix, DesignBlock, SplineBasis};

pub const INTERCEPT_NAME: &str = "intercept";

/// Affine map from the raw index variable to `[0, 1]`:
/// `t = (raw - offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub offset: f64,
    pub scale: f64,
}

impl RescaleMap {
    pub const IDENTITY: RescaleMap = RescaleMap {
        offset: 0.0,
        scale: 1.0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Min-max map for `raw`, or the identity when it already lies in `[0, 1]`.
    pub fn fit(raw: &[f64]) -> Result<Self> {
        let (lo, hi) = raw
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo >= 0.0 && hi <= 1.0 {
            return Ok(Self::IDENTITY);
        }
        if !(hi > lo) {
            return Err(Error::InvalidData("index variable is constant".into()));
        }
        Ok(Self {
            offset: lo,
            scale: 1.0 / (hi - lo),
        })
    }

    /// Applies the map, clamping rounding overshoot into `[0, 1]`.
    pub fn apply(&self, raw: f64) -> f64 {
        if self.is_identity() {
            return raw;
        }
        ((raw - self.offset) * self.scale).clamp(0.0, 1.0)
    }
}

/// Response, index variable and covariates. Column 0 of `x` is the
/// intercept (all ones); columns `1..=p` are the candidate covariates.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<f64>,
    x: Array2<f64>,
    names: Vec<String>,
    rescale: RescaleMap,
    degenerate: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from raw columns. `t_raw` is min-max rescaled when it
    /// leaves `[0, 1]`. `names` holds one name per covariate (without the
    /// intercept).
    pub fn new(
        y: Vec<f64>,
        t_raw: Vec<f64>,
        covariates: Vec<Vec<f64>>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("dataset has no observations"));
        }
        if covariates.is_empty() {
            return Err(Error::Empty("dataset has no covariates"));
        }
        if names.len() != covariates.len() {
            return Err(Error::Shape {
                expected: covariates.len(),
                found: names.len(),
            });
        }
        if t_raw.len() != n {
            return Err(Error::Shape {
                expected: n,
                found: t_raw.len(),
            });
        }
        if let Some(bad) = covariates.iter().find(|c| c.len() != n) {
            return Err(Error::Shape {
                expected: n,
                found: bad.len(),
            });
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&y) || !finite(&t_raw) || !covariates.iter().all(|c| finite(c)) {
            return Err(Error::InvalidData("non-finite value in input".into()));
        }

        let rescale = RescaleMap::fit(&t_raw)?;
        let t: Vec<f64> = t_raw.iter().map(|&v| rescale.apply(v)).collect();

        let p = covariates.len();
        let mut x = Array2::<f64>::zeros((n, p + 1).f());
        x.column_mut(0).fill(1.0);
        for (j, col) in covariates.iter().enumerate() {
            x.column_mut(j + 1)
                .iter_mut()
                .zip(col)
                .for_each(|(a, &b)| *a = b);
        }
        let degenerate = covariates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().all(|&v| v == c[0]))
            .map(|(j, _)| j + 1)
            .collect();

        let mut all_names = Vec::with_capacity(p + 1);
        all_names.push(INTERCEPT_NAME.to_string());
        all_names.extend(names);

        Ok(Self {
            y,
            t,
            x,
            names: all_names,
            rescale,
            degenerate,
        })
    }

    /// Like [`Dataset::new`] with generated names `x1..xp`.
    pub fn from_columns(y: Vec<f64>, t: Vec<f64>, covariates: Vec<Vec<f64>>) -> Result<Self> {
        let names = (1..=covariates.len()).map(|j| format!("x{j}")).collect();
        Self::new(y, t, covariates, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of candidate covariates (intercept excluded).
    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Index variable after rescaling.
    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.x
            .column(j)
            .to_slice()
            .expect("covariate matrix is column-major")
    }

    /// Column names; entry 0 is the intercept.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rescale_map(&self) -> RescaleMap {
        self.rescale
    }

    /// Covariates with zero variance; they never enter a candidate pool.
    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }

    /// Covariate indices `1..=p` minus the degenerate ones.
    pub fn candidate_pool(&self) -> Vec<usize> {
        (1..=self.p())
            .filter(|j| self.degenerate.binary_search(j).is_err())
            .collect()
    }

    pub fn require_rows(&self, dim_l: usize) -> Result<()> {
        let required = 2 * dim_l;
        if self.n() < required {
            return Err(Error::TooFewRows {
                n: self.n(),
                required,
            });
        }
        Ok(())
    }

    pub fn basis_matrix(&self, basis: &SplineBasis) -> Result<BasisMatrix> {
        BasisMatrix::new(basis, &self.t)
    }

    pub fn block(&self, bm: &BasisMatrix, j: usize) -> Result<DesignBlock> {
        if j > self.p() {
            return Err(Error::MissingCovariate(j));
        }
        bm.block(j, self.column(j))
    }

    /// Row `i` of the covariate matrix restricted to `set`.
    pub fn row_values(&self, i: usize, set: &[usize]) -> Vec<f64> {
        set.iter().map(|&j| self.x[[i, j]]).collect()
    }
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<f64> {
    value.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: value.to_string(),
    })
}

/// Reads a header-first CSV file. `y_column` and `t_column` name the
/// response and index variable; every other column becomes a covariate in
/// file order. Rows are numbered from 1 (the first data row) in errors.
pub fn load_csv(path: impl AsRef<Path>, y_column: &str, t_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = find(y_column)?;
    let t_idx = find(t_column)?;
    let cov_idx: Vec<usize> = (0..header.len()).filter(|&c| c != y_idx && c != t_idx).collect();

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut covariates = vec![Vec::new(); cov_idx.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = r + 1;
        let cell = |c: usize| parse_cell(&record[c], row, &header[c]);
        y.push(cell(y_idx)?);
        t.push(cell(t_idx)?);
        for (k, &c) in cov_idx.iter().enumerate() {
            covariates[k].push(cell(c)?);
        }
    }
    let names = cov_idx.iter().map(|&c| header[c].clone()).collect();
    Dataset::new(y, t, covariates, names)
}

/// Writes `y`, the rescaled `t` and the covariates with 17 significant
/// digits, so [`load_csv`] reads back identical values.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = vec!["y".to_string(), "t".to_string()];
    header.extend(dataset.names()[1..].iter().cloned());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for i in 0..dataset.n() {
        let mut line = format!("{:.16e},{:.16e}", dataset.y[i], dataset.t[i]);
        for j in 1..=dataset.p() {
            line.push_str(&format!(",{:.16e}", dataset.x[[i, j]]));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}
