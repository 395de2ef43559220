//! Clamped, equi-spaced B-spline bases on `[0, 1]` and the blockwise spline
//! design matrices built from them.
//!
//! The basis of dimension `L` and order `k` (degree `k - 1`) uses the knot
//! vector with `k` copies of 0, the interior knots `i / (L - k + 1)` for
//! `i = 1..=L-k`, and `k` copies of 1. Values are computed with the
//! Cox-de Boor triangular recursion, which only touches the `k` functions
//! that are nonzero on the knot span containing `t`.

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};

/// Default spline order (cubic).
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    order: usize,
    dim: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidConfig(format!(
                "spline order must be at least 2, got {order}"
            )));
        }
        if dim < order {
            return Err(Error::InvalidConfig(format!(
                "basis dimension {dim} is smaller than the spline order {order}"
            )));
        }
        let interior = dim - order;
        let segments = (interior + 1) as f64;
        let mut knots = Vec::with_capacity(dim + order);
        knots.extend(std::iter::repeat_n(0.0, order));
        knots.extend((1..=interior).map(|i| i as f64 / segments));
        knots.extend(std::iter::repeat_n(1.0, order));
        Ok(Self { order, dim, knots })
    }

    pub fn cubic(dim: usize) -> Result<Self> {
        Self::new(dim, DEFAULT_ORDER)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions `L`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.order..self.dim]
    }

    /// Index `s` of the knot span with `knots[s] <= t < knots[s + 1]`; the
    /// right endpoint belongs to the last nonempty span.
    fn find_span(&self, t: f64) -> usize {
        let last = self.dim - 1;
        if t >= self.knots[self.dim] {
            return last;
        }
        let (mut lo, mut hi) = (self.order - 1, self.dim);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Evaluates the `order` functions that can be nonzero at `t`, writing
    /// them to `out[..order]`. Returns the index of the first of them.
    pub fn eval_local(&self, t: f64, out: &mut [f64]) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(t));
        }
        let k = self.order;
        if out.len() < k {
            return Err(Error::Shape {
                expected: k,
                found: out.len(),
            });
        }
        let span = self.find_span(t);
        let mut left = vec![0.0; k];
        let mut right = vec![0.0; k];
        out[0] = 1.0;
        for j in 1..k {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        Ok(span + 1 - k)
    }

    /// Writes the full length-`L` basis vector `B(t)` into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: out.len(),
            });
        }
        let mut local = vec![0.0; self.order];
        let first = self.eval_local(t, &mut local)?;
        out.fill(0.0);
        out[first..first + self.order].copy_from_slice(&local);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }
}

pub fn build_basis(dim: usize, order: usize) -> Result<SplineBasis> {
    SplineBasis::new(dim, order)
}

pub fn eval_basis(basis: &SplineBasis, t: f64) -> Result<Vec<f64>> {
    basis.eval(t)
}

/// Basis evaluations `B(T_i)` for every observation, stored as an `n x L`
/// column-major matrix. Every design block of a dataset is a row scaling of
/// this matrix, so it is computed once per dataset.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    values: Array2<f64>,
}

impl BasisMatrix {
    pub fn new(basis: &SplineBasis, t_values: &[f64]) -> Result<Self> {
        let n = t_values.len();
        let mut values = Array2::<f64>::zeros((n, basis.dim()).f());
        let mut local = vec![0.0; basis.order()];
        for (i, &t) in t_values.iter().enumerate() {
            let first = basis.eval_local(t, &mut local)?;
            for (k, &v) in local.iter().enumerate() {
                values[[i, first + k]] = v;
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Design block `W_j` for covariate column `x` (row `i` is `B(T_i) x_i`).
    pub fn block(&self, covariate: usize, x: &[f64]) -> Result<DesignBlock> {
        if x.len() != self.n() {
            return Err(Error::Shape {
                expected: self.n(),
                found: x.len(),
            });
        }
        let mut matrix = self.values.clone();
        for mut col in matrix.columns_mut() {
            col.iter_mut().zip(x).for_each(|(w, &xi)| *w *= xi);
        }
        Ok(DesignBlock { covariate, matrix })
    }
}

/// The `n x L` spline design block of one covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    pub covariate: usize,
    pub matrix: Array2<f64>,
}

impl DesignBlock {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn design_block(
    basis: &SplineBasis,
    covariate: usize,
    t_values: &[f64],
    x_column: &[f64],
) -> Result<DesignBlock> {
    if t_values.len() != x_column.len() {
        return Err(Error::Shape {
            expected: t_values.len(),
            found: x_column.len(),
        });
    }
    BasisMatrix::new(basis, t_values)?.block(covariate, x_column)
}
