//! Small dense kernels: Householder least squares, square QR solves and a
//! growable orthonormal column basis.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, ShapeBuilder};

/// Relative pivot tolerance for rank decisions.
pub const PIVOT_TOL: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR of a tall matrix applied to a right-hand side.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Array1<f64>,
    /// Squared norm of the part of `y` orthogonal to the column space.
    pub rss: f64,
    /// `min |R_kk| / max |R_kk|`; 0 for an exactly rank-deficient design.
    pub pivot_ratio: f64,
    /// Upper-triangular factor, `m x m`.
    pub r: Array2<f64>,
}

/// Reduces `a` (n x m, n >= m) and `rhs` in place with Householder
/// reflections, leaving `R` in the upper triangle of `a` and `Q^T rhs` in
/// `rhs`.
fn householder_reduce(mut a: ArrayViewMut2<'_, f64>, rhs: &mut [f64]) {
    let (n, m) = a.dim();
    let mut v = vec![0.0; n];
    for k in 0..m {
        let norm = a.slice(ndarray::s![k.., k]).iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[[k, k]];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        for i in k..n {
            v[i] = a[[i, k]];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v[k..n].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let scale = 2.0 / vnorm2;
        a[[k, k]] = alpha;
        for i in k + 1..n {
            a[[i, k]] = 0.0;
        }
        for j in k + 1..m {
            let mut s = 0.0;
            for i in k..n {
                s += v[i] * a[[i, j]];
            }
            s *= scale;
            for i in k..n {
                a[[i, j]] -= s * v[i];
            }
        }
        let s = scale * dot(&v[k..n], &rhs[k..n]);
        for i in k..n {
            rhs[i] -= s * v[i];
        }
    }
}

fn back_substitute(r: ArrayView2<'_, f64>, b: &[f64]) -> Array1<f64> {
    let m = r.ncols();
    let mut x = Array1::<f64>::zeros(m);
    for k in (0..m).rev() {
        let mut s = b[k];
        for j in k + 1..m {
            s -= r[[k, j]] * x[j];
        }
        x[k] = s / r[[k, k]];
    }
    x
}

fn pivot_ratio(r: ArrayView2<'_, f64>) -> f64 {
    let diag: Vec<f64> = (0..r.ncols()).map(|k| r[[k, k]].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    diag.iter().cloned().fold(f64::INFINITY, f64::min) / max
}

/// Least squares `min |a x - y|` via Householder QR. The coefficients are
/// only meaningful when `pivot_ratio` is above [`PIVOT_TOL`].
pub fn least_squares(a: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> LeastSquares {
    let (n, m) = a.dim();
    debug_assert!(n >= m);
    let mut work = Array2::<f64>::zeros((n, m).f());
    work.assign(&a);
    let mut rhs = y.to_vec();
    householder_reduce(work.view_mut(), &mut rhs);
    let r = work.slice(ndarray::s![..m, ..]).to_owned();
    let ratio = pivot_ratio(r.view());
    let coef = if ratio > 0.0 {
        back_substitute(r.view(), &rhs[..m])
    } else {
        Array1::zeros(m)
    };
    let rss = rhs[m..].iter().map(|x| x * x).sum();
    LeastSquares {
        coef,
        rss,
        pivot_ratio: ratio,
        r,
    }
}

/// Solves the square system `a x = b` by Householder QR. Returns the
/// solution and the pivot ratio, or `None` when a pivot is exactly zero.
pub fn qr_solve(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Option<(Array1<f64>, f64)> {
    let m = a.nrows();
    debug_assert_eq!(m, a.ncols());
    let mut work = Array2::<f64>::zeros((m, m).f());
    work.assign(&a);
    let mut rhs = b.to_vec();
    householder_reduce(work.view_mut(), &mut rhs);
    let ratio = pivot_ratio(work.view());
    if ratio == 0.0 || !ratio.is_finite() {
        return None;
    }
    Some((back_substitute(work.view(), &rhs), ratio))
}

/// Solves the symmetric positive semidefinite system `g x = c`, retrying
/// with a ridge of `PIVOT_TOL * mean(diag g)` when the pivot ratio falls
/// below [`PIVOT_TOL`]. Returns the solution and whether the ridge was used.
pub fn solve_gram(g: ArrayView2<'_, f64>, c: ArrayView1<'_, f64>) -> Option<(Array1<f64>, bool)> {
    if let Some((x, ratio)) = qr_solve(g, c) {
        if ratio >= PIVOT_TOL {
            return Some((x, false));
        }
    }
    let m = g.nrows();
    let mean_diag = (0..m).map(|k| g[[k, k]]).sum::<f64>() / m as f64;
    if !(mean_diag > 0.0) {
        return None;
    }
    let mut ridged = g.to_owned();
    for k in 0..m {
        ridged[[k, k]] += PIVOT_TOL * mean_diag;
    }
    let (x, ratio) = qr_solve(ridged.view(), c)?;
    // cond(g + ridge) is bounded by ~1/PIVOT_TOL; anything far below means
    // the matrix was not semidefinite to begin with
    if ratio < PIVOT_TOL * PIVOT_TOL {
        return None;
    }
    Some((x, true))
}

/// A set of orthonormal columns of length `n`, stored contiguously in
/// column-major order so it can be viewed as an `n x m` matrix.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    n: usize,
    data: Vec<f64>,
}

impl OrthoBasis {
    pub fn new(n: usize) -> Self {
        Self { n, data: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.data.len() / self.n.max(1)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n, self.ncols()).f(), &self.data)
            .expect("buffer length is a multiple of n")
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    /// Columns from index `start` on, as a matrix view.
    pub fn tail(&self, start: usize) -> ArrayView2<'_, f64> {
        let m = self.ncols() - start;
        ArrayView2::from_shape((self.n, m).f(), &self.data[start * self.n..])
            .expect("buffer length is a multiple of n")
    }

    /// `a <- a - Q Q^T a` for the columns `start..` of this basis.
    pub fn project_out_from(&self, start: usize, a: &mut Array2<f64>) {
        if start >= self.ncols() {
            return;
        }
        let q = self.tail(start);
        let coef = q.t().dot(a);
        ndarray::linalg::general_mat_mul(-1.0, &q, &coef, 1.0, a);
    }

    /// Projects `v` onto the orthogonal complement of all columns, twice.
    pub fn residualize_vec(&self, v: &mut [f64]) {
        for _ in 0..2 {
            for k in 0..self.ncols() {
                let q = self.column(k);
                let s = dot(q, v);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= s * qi);
            }
        }
    }

    /// Residualizes a block against the basis with a second
    /// reorthogonalization pass.
    pub fn residualize(&self, a: &mut Array2<f64>) {
        self.project_out_from(0, a);
        self.project_out_from(0, a);
    }

    /// Appends the columns of `a` after orthogonalizing them against the
    /// basis (and each other). Columns whose remaining norm drops below
    /// `PIVOT_TOL` times their original norm are skipped. Returns the number
    /// of columns appended.
    pub fn extend_with(&mut self, a: ArrayView2<'_, f64>) -> usize {
        assert_eq!(a.nrows(), self.n);
        let mut added = 0;
        let mut v = vec![0.0; self.n];
        for col in a.columns() {
            v.iter_mut().zip(col.iter()).for_each(|(vi, &c)| *vi = c);
            let orig = dot(&v, &v).sqrt();
            if orig == 0.0 {
                continue;
            }
            self.residualize_vec(&mut v);
            let norm = dot(&v, &v).sqrt();
            if norm <= PIVOT_TOL * orig {
                continue;
            }
            self.data.extend(v.iter().map(|x| x / norm));
            added += 1;
        }
        added
    }
}
