//! Least-squares machinery for spline varying coefficient models.
//!
//! A model over the covariate set `Q` regresses `y` on the stacked design
//! blocks `W_Q`. Forward selection never refits that model for every
//! candidate: a [`ProjectionCache`] keeps an orthonormal basis of
//! `span(W_S)` together with the residual `y - P_S y`, and the gain from
//! adding candidate `l` is computed from the candidate block residualized
//! against that basis,
//!
//! ```text
//! sigma2(S) - sigma2(S + l) = (W~' r)' (W~' W~)^-1 (W~' r) / n
//! ```
//!
//! with `W~ = (I - P_S) W_l` and `r = (I - P_S) y`. The `L x L` system is
//! solved by QR, with a small ridge retry when it is numerically singular.

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, OrthoBasis, PIVOT_TOL};
use crate::spline::{BasisMatrix, DesignBlock, SplineBasis};

/// Least-squares fit of `y` on the spline blocks of an index set.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub index_set: Vec<usize>,
    /// Per-covariate coefficient vectors stacked in `index_set` order.
    pub gamma: Array1<f64>,
    pub sigma_sq: f64,
    /// False when the design was numerically rank-deficient and the
    /// coefficients come from the ridge fallback.
    pub rank_ok: bool,
    pub dim_l: usize,
}

impl FitResult {
    /// `gamma_j`, the spline coefficients of covariate `j`.
    pub fn gamma_for(&self, j: usize) -> Option<ArrayView1<'_, f64>> {
        let pos = self.index_set.iter().position(|&k| k == j)?;
        let l = self.dim_l;
        Some(self.gamma.slice(ndarray::s![pos * l..(pos + 1) * l]))
    }
}

fn check_rows(blocks: &[DesignBlock], n: usize) -> Result<()> {
    for b in blocks {
        if b.n() != n {
            return Err(Error::Shape {
                expected: n,
                found: b.n(),
            });
        }
    }
    Ok(())
}

fn norm_sq(v: &[f64]) -> f64 {
    linalg::dot(v, v)
}

/// Full least-squares fit over the given blocks.
pub fn fit_full(blocks: &[DesignBlock], y: &[f64]) -> Result<FitResult> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("response"));
    }
    check_rows(blocks, n)?;
    let index_set: Vec<usize> = blocks.iter().map(|b| b.covariate).collect();
    let dim_l = blocks.first().map_or(0, DesignBlock::dim);
    if blocks.is_empty() {
        return Ok(FitResult {
            index_set,
            gamma: Array1::zeros(0),
            sigma_sq: norm_sq(y) / n as f64,
            rank_ok: true,
            dim_l,
        });
    }
    let params: usize = blocks.iter().map(DesignBlock::dim).sum();
    if params > n {
        return Err(Error::OverParameterized { params, n });
    }
    let views: Vec<_> = blocks.iter().map(|b| b.matrix.view()).collect();
    let design = concatenate(Axis(1), &views).expect("blocks share n");
    let yv = ArrayView1::from(y);
    let ls = linalg::least_squares(design.view(), yv);
    if ls.pivot_ratio >= PIVOT_TOL {
        return Ok(FitResult {
            index_set,
            gamma: ls.coef,
            sigma_sq: ls.rss / n as f64,
            rank_ok: true,
            dim_l,
        });
    }
    let gram = design.t().dot(&design);
    let rhs = design.t().dot(&yv);
    let (gamma, _) = linalg::solve_gram(gram.view(), rhs.view()).ok_or(Error::SingularDesign)?;
    let fitted = design.dot(&gamma);
    let rss: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(FitResult {
        index_set,
        gamma,
        sigma_sq: rss / n as f64,
        rank_ok: false,
        dim_l,
    })
}

/// Fits the model over `set` on a dataset.
pub fn fit_subset(dataset: &Dataset, bm: &BasisMatrix, set: &[usize]) -> Result<FitResult> {
    let blocks = set
        .iter()
        .map(|&j| dataset.block(bm, j))
        .collect::<Result<Vec<_>>>()?;
    fit_full(&blocks, dataset.y())
}

/// Orthonormal basis of `span(W_S)` and the residual of `y` against it.
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    index_set: Vec<usize>,
    basis: OrthoBasis,
    residual_y: Vec<f64>,
    sigma_sq: f64,
    params: usize,
}

impl ProjectionCache {
    /// Cache for the empty set.
    pub fn empty(y: &[f64]) -> Self {
        let n = y.len();
        Self {
            index_set: Vec::new(),
            basis: OrthoBasis::new(n),
            residual_y: y.to_vec(),
            sigma_sq: norm_sq(y) / n as f64,
            params: 0,
        }
    }

    pub fn build(blocks: &[DesignBlock], y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("response"));
        }
        check_rows(blocks, y.len())?;
        let params: usize = blocks.iter().map(DesignBlock::dim).sum();
        if params > y.len() {
            return Err(Error::OverParameterized { params, n: y.len() });
        }
        let mut cache = Self::empty(y);
        for b in blocks {
            cache.extend(b)?;
        }
        Ok(cache)
    }

    /// Adds a block to the model. Returns the number of new orthonormal
    /// directions (fewer than `L` when the block is partly collinear).
    pub fn extend(&mut self, block: &DesignBlock) -> Result<usize> {
        let n = self.n();
        if block.n() != n {
            return Err(Error::Shape {
                expected: n,
                found: block.n(),
            });
        }
        if self.params + block.dim() > n {
            return Err(Error::OverParameterized {
                params: self.params + block.dim(),
                n,
            });
        }
        let start = self.basis.ncols();
        let added = self.basis.extend_with(block.matrix.view());
        for _ in 0..2 {
            for k in start..self.basis.ncols() {
                let q = self.basis.column(k);
                let s = linalg::dot(q, &self.residual_y);
                self.residual_y
                    .iter_mut()
                    .zip(q)
                    .for_each(|(r, qi)| *r -= s * qi);
            }
        }
        self.sigma_sq = norm_sq(&self.residual_y) / n as f64;
        self.index_set.push(block.covariate);
        self.params += block.dim();
        Ok(added)
    }

    pub fn n(&self) -> usize {
        self.residual_y.len()
    }

    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    pub fn contains(&self, j: usize) -> bool {
        self.index_set.contains(&j)
    }

    pub fn basis(&self) -> &OrthoBasis {
        &self.basis
    }

    /// `y - P_S y`.
    pub fn residual_y(&self) -> &[f64] {
        &self.residual_y
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// Number of spline parameters in the current model.
    pub fn params(&self) -> usize {
        self.params
    }

    /// `(I - P_S) W` for a candidate block.
    pub fn residualize(&self, block: &DesignBlock) -> Array2<f64> {
        let mut w = block.matrix.clone();
        self.basis.residualize(&mut w);
        w
    }
}

pub fn build_projection_cache(blocks: &[DesignBlock], y: &[f64]) -> Result<ProjectionCache> {
    ProjectionCache::build(blocks, y)
}

/// Result of scoring one candidate against the current model.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// `sigma2(S) - sigma2(S + l)`, never negative.
    pub delta: f64,
    /// Least-squares coefficients of the candidate in the extended model.
    pub gamma: Array1<f64>,
    /// Whether the ridge fallback was needed.
    pub ridged: bool,
}

/// Computes the reduction from an already residualized block. `raw_norm_sq`
/// is the squared Frobenius norm of the block before residualization.
pub(crate) fn reduction_from_residualized(
    covariate: usize,
    residualized: &Array2<f64>,
    raw_norm_sq: f64,
    residual_y: &[f64],
) -> Result<Reduction> {
    let n = residual_y.len();
    let rem: f64 = residualized.iter().map(|x| x * x).sum();
    if !(raw_norm_sq > 0.0) || !(rem > PIVOT_TOL * PIVOT_TOL * raw_norm_sq) {
        return Err(Error::CandidateDegenerate(covariate));
    }
    let gram = residualized.t().dot(residualized);
    let c = residualized.t().dot(&ArrayView1::from(residual_y));
    let (gamma, ridged) =
        linalg::solve_gram(gram.view(), c.view()).ok_or(Error::CandidateDegenerate(covariate))?;
    let delta = c.dot(&gamma) / n as f64;
    if !delta.is_finite() {
        return Err(Error::CandidateDegenerate(covariate));
    }
    Ok(Reduction {
        delta: delta.max(0.0),
        gamma,
        ridged,
    })
}

/// Gain in `sigma2` from adding `candidate` to the cached model.
pub fn rss_reduction(cache: &ProjectionCache, candidate: &DesignBlock) -> Result<Reduction> {
    if candidate.n() != cache.n() {
        return Err(Error::Shape {
            expected: cache.n(),
            found: candidate.n(),
        });
    }
    let raw: f64 = candidate.matrix.iter().map(|x| x * x).sum();
    let w = cache.residualize(candidate);
    reduction_from_residualized(candidate.covariate, &w, raw, cache.residual_y())
}

fn corr_norm(residualized: &Array2<f64>, residual_y: &[f64]) -> f64 {
    let c = residualized.t().dot(&ArrayView1::from(residual_y));
    c.dot(&c).sqrt()
}

/// Alternative score `|W~' r|`, the Euclidean norm of the residualized
/// cross-product.
pub fn score_candidate_alt(cache: &ProjectionCache, candidate: &DesignBlock) -> Result<f64> {
    if candidate.n() != cache.n() {
        return Err(Error::Shape {
            expected: cache.n(),
            found: candidate.n(),
        });
    }
    let w = cache.residualize(candidate);
    Ok(corr_norm(&w, cache.residual_y()))
}

/// `sum_j gamma_j' B(t) x_j` over the fitted set.
pub fn predict(fit: &FitResult, basis: &SplineBasis, t: f64, x_values: &[f64]) -> Result<f64> {
    if x_values.len() != fit.index_set.len() {
        return Err(Error::Shape {
            expected: fit.index_set.len(),
            found: x_values.len(),
        });
    }
    if fit.index_set.is_empty() {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(t));
        }
        return Ok(0.0);
    }
    check_basis(fit, basis)?;
    let b = basis.eval(t)?;
    let l = fit.dim_l;
    Ok(x_values
        .iter()
        .enumerate()
        .map(|(pos, &x)| {
            let g = fit.gamma.slice(ndarray::s![pos * l..(pos + 1) * l]);
            x * g.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()
        })
        .sum())
}

fn check_basis(fit: &FitResult, basis: &SplineBasis) -> Result<()> {
    if !fit.index_set.is_empty() && basis.dim() != fit.dim_l {
        return Err(Error::Shape {
            expected: fit.dim_l,
            found: basis.dim(),
        });
    }
    Ok(())
}

/// In-sample style predictions for every row of `dataset`.
pub fn predict_dataset(fit: &FitResult, basis: &SplineBasis, dataset: &Dataset) -> Result<Vec<f64>> {
    let n = dataset.n();
    let mut out = vec![0.0; n];
    if fit.index_set.is_empty() {
        return Ok(out);
    }
    check_basis(fit, basis)?;
    let bm = dataset.basis_matrix(basis)?;
    for (pos, &j) in fit.index_set.iter().enumerate() {
        if j > dataset.p() {
            return Err(Error::MissingCovariate(j));
        }
        let l = fit.dim_l;
        let g = fit.gamma.slice(ndarray::s![pos * l..(pos + 1) * l]);
        let beta = bm.values().dot(&g);
        for ((o, &b), &x) in out.iter_mut().zip(beta.iter()).zip(dataset.column(j)) {
            *o += b * x;
        }
    }
    Ok(out)
}

/// `beta_j(t) = gamma_j' B(t)` evaluated on `grid`.
pub fn coefficient_curve(
    fit: &FitResult,
    basis: &SplineBasis,
    j: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let g = fit.gamma_for(j).ok_or(Error::MissingCovariate(j))?;
    check_basis(fit, basis)?;
    let mut b = vec![0.0; basis.dim()];
    grid.iter()
        .map(|&t| {
            basis.eval_into(t, &mut b)?;
            Ok(g.iter().zip(&b).map(|(a, c)| a * c).sum())
        })
        .collect()
}

/// Score of one candidate in a sweep.
#[derive(Debug)]
pub struct CandidateScore {
    pub covariate: usize,
    pub reduction: Result<Reduction>,
    pub corr: f64,
}

struct SweepEntry {
    covariate: usize,
    residualized: Array2<f64>,
    raw_norm_sq: f64,
}

/// Residualized design blocks for a whole candidate pool, kept in sync with
/// a [`ProjectionCache`] as the model grows. Accepting a candidate only
/// requires projecting every stored block against the new orthonormal
/// directions, so the cost of a step does not grow with `#S`.
pub struct CandidateSweep {
    entries: Vec<SweepEntry>,
}

impl CandidateSweep {
    pub fn new(
        dataset: &Dataset,
        bm: &BasisMatrix,
        pool: &[usize],
        cache: &ProjectionCache,
    ) -> Result<Self> {
        let mut pool = pool.to_vec();
        pool.sort_unstable();
        pool.dedup();
        let entries = pool
            .par_iter()
            .filter(|&&j| !cache.contains(j))
            .map(|&j| {
                let block = dataset.block(bm, j)?;
                let raw_norm_sq = block.matrix.iter().map(|x| x * x).sum();
                Ok(SweepEntry {
                    covariate: j,
                    residualized: cache.residualize(&block),
                    raw_norm_sq,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn covariates(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.covariate).collect()
    }

    /// Scores every remaining candidate, in ascending covariate order.
    pub fn evaluate(&self, cache: &ProjectionCache) -> Vec<CandidateScore> {
        let r = cache.residual_y();
        self.entries
            .par_iter()
            .map(|e| CandidateScore {
                covariate: e.covariate,
                reduction: reduction_from_residualized(e.covariate, &e.residualized, e.raw_norm_sq, r),
                corr: corr_norm(&e.residualized, r),
            })
            .collect()
    }

    pub fn remove(&mut self, covariate: usize) {
        self.entries.retain(|e| e.covariate != covariate);
    }

    /// Projects every stored block against the cache's orthonormal columns
    /// from index `from_col` on.
    pub fn absorb(&mut self, cache: &ProjectionCache, from_col: usize) {
        let basis = cache.basis();
        if from_col >= basis.ncols() {
            return;
        }
        self.entries
            .par_iter_mut()
            .for_each(|e| basis.project_out_from(from_col, &mut e.residualized));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::build_basis;

    fn small_dataset() -> Dataset {
        let n = 40;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let x1: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 3) % 7) as f64 * 0.5).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + t[i] * x1[i] + ((i * 5) % 13) as f64 * 0.01)
            .collect();
        Dataset::from_columns(y, t, vec![x1, x2]).unwrap()
    }

    #[test]
    fn empty_fit_is_mean_square() {
        let y = [1.0, 2.0, 3.0];
        let fit = fit_full(&[], &y).unwrap();
        assert!(fit.gamma.is_empty());
        assert!((fit.sigma_sq - 14.0 / 3.0).abs() < 1e-15);
        let cache = ProjectionCache::build(&[], &y).unwrap();
        assert_eq!(cache.residual_y(), &y);
        assert_eq!(cache.sigma_sq(), fit.sigma_sq);
    }

    #[test]
    fn over_parameterized_is_rejected() {
        let basis = build_basis(7, 4).unwrap();
        let t = [0.1, 0.2, 0.3, 0.4, 0.5];
        let b = crate::spline::design_block(&basis, 0, &t, &[1.0; 5]).unwrap();
        assert!(matches!(
            fit_full(&[b.clone()], &[1.0; 5]),
            Err(Error::OverParameterized { params: 7, n: 5 })
        ));
        assert!(matches!(
            ProjectionCache::build(&[b], &[1.0; 5]),
            Err(Error::OverParameterized { .. })
        ));
    }

    #[test]
    fn identical_block_is_degenerate() {
        let d = small_dataset();
        let basis = build_basis(5, 4).unwrap();
        let bm = d.basis_matrix(&basis).unwrap();
        let b1 = d.block(&bm, 1).unwrap();
        let cache = ProjectionCache::build(&[d.block(&bm, 0).unwrap(), b1.clone()], d.y()).unwrap();
        assert!(matches!(rss_reduction(&cache, &b1), Err(Error::CandidateDegenerate(1))));
    }

    #[test]
    fn intercept_cache_is_orthogonal() {
        let d = small_dataset();
        let basis = build_basis(5, 4).unwrap();
        let bm = d.basis_matrix(&basis).unwrap();
        let b0 = d.block(&bm, 0).unwrap();
        let cache = ProjectionCache::build(&[b0.clone()], d.y()).unwrap();
        let ip = b0.matrix.t().dot(&ArrayView1::from(cache.residual_y()));
        assert!(ip.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn zero_inputs_give_zero_alt_score() {
        let d = small_dataset();
        let basis = build_basis(5, 4).unwrap();
        let bm = d.basis_matrix(&basis).unwrap();
        let zero_y = vec![0.0; d.n()];
        let cache = ProjectionCache::empty(&zero_y);
        assert_eq!(score_candidate_alt(&cache, &d.block(&bm, 1).unwrap()).unwrap(), 0.0);
        let zero_block = DesignBlock {
            covariate: 9,
            matrix: Array2::zeros((d.n(), 5)),
        };
        let cache = ProjectionCache::empty(d.y());
        assert_eq!(score_candidate_alt(&cache, &zero_block).unwrap(), 0.0);
        assert!(matches!(
            rss_reduction(&cache, &zero_block),
            Err(Error::CandidateDegenerate(9))
        ));
    }

    #[test]
    fn constant_response_predicts_constant() {
        let d = small_dataset();
        let basis = build_basis(5, 4).unwrap();
        let bm = d.basis_matrix(&basis).unwrap();
        let y = vec![2.5; d.n()];
        let fit = fit_full(&[d.block(&bm, 0).unwrap()], &y).unwrap();
        assert!(fit.sigma_sq < 1e-20);
        for t in [0.0, 0.33, 0.5, 1.0] {
            assert!((predict(&fit, &basis, t, &[1.0]).unwrap() - 2.5).abs() < 1e-10);
        }
        assert!(matches!(predict(&fit, &basis, 1.1, &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_gamma_predicts_zero() {
        let basis = build_basis(5, 4).unwrap();
        let fit = FitResult {
            index_set: vec![0, 3],
            gamma: Array1::zeros(10),
            sigma_sq: 1.0,
            rank_ok: true,
            dim_l: 5,
        };
        assert_eq!(predict(&fit, &basis, 0.4, &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(coefficient_curve(&fit, &basis, 3, &[0.0, 0.5, 1.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            coefficient_curve(&fit, &basis, 2, &[0.5]),
            Err(Error::MissingCovariate(2))
        ));
    }

    #[test]
    fn curve_at_zero_is_first_coefficient() {
        let d = small_dataset();
        let basis = build_basis(5, 4).unwrap();
        let bm = d.basis_matrix(&basis).unwrap();
        let fit = fit_subset(&d, &bm, &[0, 1]).unwrap();
        let c = coefficient_curve(&fit, &basis, 1, &[0.0]).unwrap();
        assert_eq!(c[0], fit.gamma_for(1).unwrap()[0]);
    }

    #[test]
    fn sweep_matches_direct_reduction_after_absorb() {
        let d = small_dataset();
        let basis = build_basis(5, 4).unwrap();
        let bm = d.basis_matrix(&basis).unwrap();
        let mut cache = ProjectionCache::build(&[d.block(&bm, 0).unwrap()], d.y()).unwrap();
        let mut sweep = CandidateSweep::new(&d, &bm, &[1, 2], &cache).unwrap();
        let before = cache.basis().ncols();
        cache.extend(&d.block(&bm, 1).unwrap()).unwrap();
        sweep.remove(1);
        sweep.absorb(&cache, before);
        let scores = sweep.evaluate(&cache);
        assert_eq!(scores.len(), 1);
        let direct = rss_reduction(&cache, &d.block(&bm, 2).unwrap()).unwrap();
        let swept = scores[0].reduction.as_ref().unwrap();
        assert!((direct.delta - swept.delta).abs() <= 1e-10 * direct.delta.max(1e-300));
    }
}
