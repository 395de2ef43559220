//! Greedy forward selection with an EBIC/BIC stopping rule.
//!
//! Starting from an initial set `S_1`, each step adds the candidate whose
//! extended model has the smallest residual variance, then records
//!
//! ```text
//! EBIC(Q) = n log(sigma2_Q) + #Q * L * (log n + 2 eta log p)
//! ```
//!
//! (`eta = 0` is the BIC). Selection keeps going until the criterion has
//! increased on `patience` consecutive steps, and the declared set is the
//! prefix of the path with the smallest criterion value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regression::{
    rss_reduction, score_candidate_alt, CandidateScore, CandidateSweep, ProjectionCache,
};
use crate::spline::{DesignBlock, SplineBasis};

pub const DEFAULT_PATIENCE: usize = 5;

/// Residual variance at or below this fraction of `y'y / n` counts as an
/// exact fit.
const EXACT_FIT_REL: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Largest drop in residual variance.
    ArgminSigma,
    /// Largest `|W~' r|`.
    ArgmaxCorr,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmin-sigma" | "argmin_sigma" => Ok(Criterion::ArgminSigma),
            "argmax-corr" | "argmax_corr" => Ok(Criterion::ArgmaxCorr),
            other => Err(Error::Usage(format!(
                "unknown criterion '{other}' (expected argmin-sigma or argmax-corr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaRule {
    Explicit,
    /// `eta = 1 - log n / (3 log p)`, clamped to `[0, 1]`.
    Auto,
}

impl std::str::FromStr for EtaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(EtaRule::Explicit),
            "auto" => Ok(EtaRule::Auto),
            other => Err(Error::Usage(format!(
                "unknown eta rule '{other}' (expected auto or explicit)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbicConfig {
    pub eta_rule: EtaRule,
    /// Used with [`EtaRule::Explicit`]; 0 gives the BIC.
    pub eta: f64,
    pub patience: usize,
    /// Cap on accepted candidates; `None` means `floor(n / 2L) - #S_1`.
    pub max_steps: Option<usize>,
    pub criterion: Criterion,
}

impl Default for EbicConfig {
    fn default() -> Self {
        Self::bic()
    }
}

impl EbicConfig {
    pub fn bic() -> Self {
        Self {
            eta_rule: EtaRule::Explicit,
            eta: 0.0,
            patience: DEFAULT_PATIENCE,
            max_steps: None,
            criterion: Criterion::ArgminSigma,
        }
    }

    pub fn ebic_auto() -> Self {
        Self {
            eta_rule: EtaRule::Auto,
            ..Self::bic()
        }
    }

    /// The `eta` to use for `n` observations and `p` candidates, plus a
    /// warning when the automatic value had to be clamped.
    pub fn resolve_eta(&self, n: usize, p: usize) -> Result<(f64, Option<String>)> {
        match self.eta_rule {
            EtaRule::Explicit => {
                if !(self.eta >= 0.0) || !self.eta.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "eta must be a finite nonnegative number, got {}",
                        self.eta
                    )));
                }
                Ok((self.eta, None))
            }
            EtaRule::Auto => {
                let raw = auto_eta(n, p)?;
                let eta = raw.clamp(0.0, 1.0);
                let warning = (eta != raw).then(|| {
                    format!("automatic eta {raw:.4} (n = {n}, p = {p}) clamped to {eta}")
                });
                Ok((eta, warning))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unclamped `1 - log n / (3 log p)`.
pub fn auto_eta(n: usize, p: usize) -> Result<f64> {
    if p <= 1 {
        return Err(Error::InvalidConfig(format!(
            "automatic eta needs p > 1, got p = {p}"
        )));
    }
    Ok(1.0 - (n as f64).ln() / (3.0 * (p as f64).ln()))
}

pub fn ebic(sigma_sq: f64, set_size: usize, n: usize, p: usize, dim_l: usize, eta: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NumericalUnderflow(sigma_sq));
    }
    let n = n as f64;
    let log_p = if p > 0 { (p as f64).ln() } else { 0.0 };
    Ok(n * sigma_sq.ln() + (set_size * dim_l) as f64 * (n.ln() + 2.0 * eta * log_p))
}

/// The chosen candidate of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub covariate: usize,
    pub delta: f64,
    pub gamma: Vec<f64>,
    /// Value of the criterion that picked it.
    pub score: f64,
}

/// Picks the best scored candidate; ties go to the smallest covariate index
/// and degenerate candidates are skipped.
fn pick(scores: Vec<CandidateScore>, criterion: Criterion) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    for s in scores {
        let Ok(red) = s.reduction else { continue };
        let score = match criterion {
            Criterion::ArgminSigma => red.delta,
            Criterion::ArgmaxCorr => s.corr,
        };
        if !score.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => score > b.score || (score == b.score && s.covariate < b.covariate),
        };
        if better {
            best = Some(Selection {
                covariate: s.covariate,
                delta: red.delta,
                gamma: red.gamma.to_vec(),
                score,
            });
        }
    }
    best.ok_or(Error::NoCandidate)
}

/// Chooses among `candidates` given the current model in `cache`.
pub fn select_candidate(
    cache: &ProjectionCache,
    candidates: &[DesignBlock],
    criterion: Criterion,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::NoCandidate);
    }
    let scores = candidates
        .par_iter()
        .map(|b| {
            Ok(CandidateScore {
                covariate: b.covariate,
                reduction: rss_reduction(cache, b),
                corr: score_candidate_alt(cache, b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pick(scores, criterion)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PatienceExhausted,
    MaxSteps,
    CandidatesExhausted,
    /// The residual variance reached zero; the criterion is undefined.
    ExactFit,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::PatienceExhausted => "patience_exhausted",
            StopReason::MaxSteps => "max_steps",
            StopReason::CandidatesExhausted => "candidates_exhausted",
            StopReason::ExactFit => "exact_fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub sigma_sq: f64,
    /// `None` when the step produced an exact fit.
    pub ebic: Option<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub initial_set: Vec<usize>,
    pub initial_sigma_sq: f64,
    pub initial_ebic: f64,
    pub steps: Vec<Step>,
    /// Number of steps kept after rolling back to the best prefix.
    pub best_prefix: usize,
    pub final_set: Vec<usize>,
    pub stop_reason: StopReason,
    pub eta: f64,
    /// Candidate count used in the `log p` penalty.
    pub p: usize,
    pub warnings: Vec<String>,
}

impl SelectionTrace {
    /// Covariates in the order they were accepted, the importance ranking.
    pub fn ranking(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.index).collect()
    }

    pub fn final_ebic(&self) -> Option<f64> {
        if self.best_prefix == 0 {
            Some(self.initial_ebic)
        } else {
            self.steps[self.best_prefix - 1].ebic
        }
    }
}

/// Forward selection over every non-degenerate covariate of the dataset.
pub fn run_forward(
    dataset: &Dataset,
    basis: &SplineBasis,
    config: &EbicConfig,
    initial_set: &[usize],
) -> Result<SelectionTrace> {
    let mut pool = dataset.candidate_pool();
    if !initial_set.contains(&0) {
        pool.insert(0, 0);
    }
    run_forward_with_pool(dataset, basis, config, initial_set, &pool, dataset.p())
}

/// Forward selection restricted to `pool`; `p_penalty` is the candidate
/// count entering the EBIC penalty and the automatic `eta`.
pub fn run_forward_with_pool(
    dataset: &Dataset,
    basis: &SplineBasis,
    config: &EbicConfig,
    initial_set: &[usize],
    pool: &[usize],
    p_penalty: usize,
) -> Result<SelectionTrace> {
    config.validate()?;
    let n = dataset.n();
    let dim_l = basis.dim();
    for (k, &j) in initial_set.iter().enumerate() {
        if j > dataset.p() {
            return Err(Error::InvalidConfig(format!(
                "initial covariate {j} does not exist (p = {})",
                dataset.p()
            )));
        }
        if initial_set[..k].contains(&j) {
            return Err(Error::InvalidConfig(format!("initial covariate {j} listed twice")));
        }
    }
    if let Some(&bad) = pool.iter().find(|&&j| j > dataset.p()) {
        return Err(Error::InvalidConfig(format!("candidate {bad} does not exist")));
    }
    let max_steps = match config.max_steps {
        Some(m) => {
            if m * dim_l > n {
                return Err(Error::InvalidConfig(format!(
                    "max_steps {m} times L = {dim_l} exceeds n = {n}"
                )));
            }
            m
        }
        None => (n / (2 * dim_l)).saturating_sub(initial_set.len()),
    };
    let (eta, eta_warning) = config.resolve_eta(n, p_penalty)?;
    let mut warnings: Vec<String> = eta_warning.into_iter().collect();

    let bm = dataset.basis_matrix(basis)?;
    let initial_blocks = initial_set
        .iter()
        .map(|&j| dataset.block(&bm, j))
        .collect::<Result<Vec<_>>>()?;
    let mut cache = ProjectionCache::build(&initial_blocks, dataset.y())?;
    let exact_tol = EXACT_FIT_REL * dataset.y().iter().map(|v| v * v).sum::<f64>() / n as f64;
    let criterion = |sigma: f64, size: usize| ebic(sigma, size, n, p_penalty, dim_l, eta);

    let initial_sigma_sq = cache.sigma_sq();
    if initial_sigma_sq <= exact_tol {
        return Err(Error::NumericalUnderflow(initial_sigma_sq));
    }
    let initial_ebic = criterion(initial_sigma_sq, initial_set.len())?;

    let pool: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|j| !dataset.degenerate().contains(j))
        .collect();
    let mut sweep = CandidateSweep::new(dataset, &bm, &pool, &cache)?;

    let mut steps: Vec<Step> = Vec::new();
    let mut prev_ebic = initial_ebic;
    let mut rising = 0;
    let stop_reason = loop {
        if steps.len() >= max_steps || cache.params() + dim_l > n {
            break StopReason::MaxSteps;
        }
        if sweep.is_empty() {
            break StopReason::CandidatesExhausted;
        }
        let chosen = match pick(sweep.evaluate(&cache), config.criterion) {
            Ok(sel) => sel,
            Err(Error::NoCandidate) => break StopReason::CandidatesExhausted,
            Err(e) => return Err(e),
        };
        let from_col = cache.basis().ncols();
        cache.extend(&dataset.block(&bm, chosen.covariate)?)?;
        sweep.remove(chosen.covariate);
        sweep.absorb(&cache, from_col);

        let sigma_sq = cache.sigma_sq();
        if sigma_sq <= exact_tol {
            steps.push(Step {
                index: chosen.covariate,
                sigma_sq,
                ebic: None,
                delta: chosen.delta,
            });
            warnings.push(format!(
                "exact fit reached after adding covariate {}",
                chosen.covariate
            ));
            break StopReason::ExactFit;
        }
        let value = criterion(sigma_sq, cache.index_set().len())?;
        rising = if value > prev_ebic { rising + 1 } else { 0 };
        prev_ebic = value;
        steps.push(Step {
            index: chosen.covariate,
            sigma_sq,
            ebic: Some(value),
            delta: chosen.delta,
        });
        if rising >= config.patience {
            break StopReason::PatienceExhausted;
        }
    };

    let best_prefix = best_prefix(initial_ebic, &steps);
    let mut final_set = initial_set.to_vec();
    final_set.extend(steps[..best_prefix].iter().map(|s| s.index));
    Ok(SelectionTrace {
        initial_set: initial_set.to_vec(),
        initial_sigma_sq,
        initial_ebic,
        steps,
        best_prefix,
        final_set,
        stop_reason,
        eta,
        p: p_penalty,
        warnings,
    })
}

/// Length of the prefix with the smallest criterion; an exact-fit step
/// counts as minus infinity and ties keep the shorter prefix.
fn best_prefix(initial: f64, steps: &[Step]) -> usize {
    let mut best = (initial, 0);
    for (k, s) in steps.iter().enumerate() {
        let v = s.ebic.unwrap_or(f64::NEG_INFINITY);
        if v < best.0 {
            best = (v, k + 1);
        }
    }
    best.1
}

/// BIC of the marginal model `{0, j}` for every non-degenerate covariate,
/// in ascending covariate order. Degenerate candidates are left out.
pub fn marginal_bic(dataset: &Dataset, basis: &SplineBasis) -> Result<Vec<(usize, f64)>> {
    let n = dataset.n();
    let dim_l = basis.dim();
    let bm = dataset.basis_matrix(basis)?;
    let cache = ProjectionCache::build(&[dataset.block(&bm, 0)?], dataset.y())?;
    let base = cache.sigma_sq();
    let penalty = (2 * dim_l) as f64 * (n as f64).ln();
    let pool = dataset.candidate_pool();
    let scored = pool
        .par_iter()
        .map(|&j| {
            let block = dataset.block(&bm, j)?;
            Ok(match rss_reduction(&cache, &block) {
                Ok(red) => {
                    let sigma = base - red.delta;
                    let fit = if sigma > 0.0 {
                        n as f64 * sigma.ln()
                    } else {
                        f64::NEG_INFINITY
                    };
                    Some((j, fit + penalty))
                }
                Err(Error::CandidateDegenerate(_)) => None,
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scored.into_iter().flatten().collect())
}

/// The `keep_k` covariates with the smallest marginal BIC, best first.
pub fn marginal_rank_screen(dataset: &Dataset, basis: &SplineBasis, keep_k: usize) -> Result<Vec<usize>> {
    if keep_k == 0 || keep_k > dataset.p() {
        return Err(Error::InvalidConfig(format!(
            "screen size must be in 1..={}, got {keep_k}",
            dataset.p()
        )));
    }
    let mut scored = marginal_bic(dataset, basis)?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(keep_k).map(|(j, _)| j).collect())
}
