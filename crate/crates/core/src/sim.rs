//! Synthetic varying coefficient experiments.
//!
//! Covariates and the index variable share a uniform factor `U1`:
//!
//! ```text
//! X_j = (Z_j + t1 U1) / (1 + t1),   T = (U2 + t2 U1) / (1 + t2)
//! ```
//!
//! with `Z_j ~ N(0, 1)`, `U1, U2 ~ U(0, 1)` and `eps ~ N(0, 1)`, so `t1`
//! controls the correlation among covariates and `t2` (together with `t1`)
//! the correlation between covariates and `T`.
//!
//! Randomness comes from ChaCha20 keyed by the scenario seed. Every
//! `(rep, purpose)` pair reads its own stream, number `4 * rep + purpose`,
//! so repetitions can run in any order on any number of threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regression::{fit_subset, predict_dataset, FitResult};
use crate::selector::{
    marginal_rank_screen, run_forward, run_forward_with_pool, EbicConfig, StopReason,
};
use crate::spline::{SplineBasis, DEFAULT_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    /// Four true covariates.
    Ex1,
    /// Eight true covariates.
    Ex2,
}

impl std::str::FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" | "1" => Ok(Example::Ex1),
            "ex2" | "2" => Ok(Example::Ex2),
            other => Err(Error::Usage(format!("unknown example '{other}' (expected ex1 or ex2)"))),
        }
    }
}

impl Example {
    pub fn support_size(&self) -> usize {
        match self {
            Example::Ex1 => 4,
            Example::Ex2 => 8,
        }
    }

    /// True support `S_0` (covariate indices, intercept excluded).
    pub fn support(&self) -> Vec<usize> {
        (1..=self.support_size()).collect()
    }

    /// Coefficient function `beta_j(t)`; zero outside the support.
    pub fn coefficient(&self, j: usize, t: f64) -> f64 {
        match (self, j) {
            (Example::Ex1, 1) => 2.0,
            (Example::Ex1, 2) => 3.0 * t,
            (Example::Ex1, 3) => (t + 1.0).powi(2),
            (Example::Ex1, 4) => {
                let s = (2.0 * PI * t).sin();
                4.0 * s / (2.0 - s)
            }
            (Example::Ex2, 1) => 3.0 * t,
            (Example::Ex2, 2) => (t + 1.0).powi(2),
            (Example::Ex2, 3) => (t - 2.0).powi(3),
            (Example::Ex2, 4) => 3.0 * (2.0 * PI * t).sin(),
            (Example::Ex2, 5) => t.exp(),
            (Example::Ex2, 6) | (Example::Ex2, 7) => 2.0,
            (Example::Ex2, 8) => 3.0 * t.sqrt(),
            _ => 0.0,
        }
    }

    /// `sum_j beta_j(t) x_j` where `x[k]` is covariate `k + 1`.
    pub fn signal(&self, t: f64, x: &[f64]) -> f64 {
        (1..=self.support_size().min(x.len()))
            .map(|j| self.coefficient(j, t) * x[j - 1])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub example: Example,
    pub n: usize,
    pub p: usize,
    pub t1: f64,
    pub t2: f64,
    pub seed: u64,
    pub reps: usize,
    /// Test-set size as a fraction of `n`.
    pub test_fraction: f64,
}

impl SimScenario {
    pub fn new(example: Example, n: usize, p: usize, t1: f64, t2: f64, seed: u64, reps: usize) -> Self {
        Self {
            example,
            n,
            p,
            t1,
            t2,
            seed,
            reps,
            test_fraction: 0.5,
        }
    }

    pub fn test_size(&self) -> usize {
        ((self.n as f64) * self.test_fraction).round() as usize
    }

    pub fn validate(&self, dim_l: usize) -> Result<()> {
        let p0 = self.example.support_size();
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.p < p0 {
            return fail(format!("p = {} is below the support size {p0}", self.p));
        }
        if !(self.t1 >= 0.0 && self.t1.is_finite() && self.t2 >= 0.0 && self.t2.is_finite()) {
            return fail("t1 and t2 must be finite and nonnegative".into());
        }
        if self.n < 2 * dim_l * (p0 + 1) {
            return fail(format!(
                "n = {} is below 2 L (p0 + 1) = {}",
                self.n,
                2 * dim_l * (p0 + 1)
            ));
        }
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction.is_finite()) || self.test_size() == 0 {
            return fail("test_fraction must give a nonempty test set".into());
        }
        Ok(())
    }
}

/// Stream purposes; the stream number is `4 * rep + purpose`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Train = 0,
    Test = 1,
    Snr = 2,
}

pub fn rng_for(seed: u64, rep: usize, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(4 * rep as u64 + purpose as u64);
    rng
}

/// One observation's shared factor, index and covariates. Draw order per
/// row: `U1`, `U2`, then `Z_1..Z_p`.
fn draw_row<R: Rng>(rng: &mut R, t1: f64, t2: f64, x: &mut [f64]) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    for v in x.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = (z + t1 * u1) / (1.0 + t1);
    }
    (u2 + t2 * u1) / (1.0 + t2)
}

/// Draws `n` observations; the noise draw follows each row's covariates.
fn draw_dataset<R: Rng>(rng: &mut R, example: Example, n: usize, p: usize, t1: f64, t2: f64) -> Result<Dataset> {
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut cols = vec![Vec::with_capacity(n); p];
    let mut row = vec![0.0; p];
    for _ in 0..n {
        let ti = draw_row(rng, t1, t2, &mut row);
        let eps: f64 = rng.sample(StandardNormal);
        y.push(example.signal(ti, &row) + eps);
        t.push(ti);
        for (c, &v) in cols.iter_mut().zip(&row) {
            c.push(v);
        }
    }
    Dataset::from_columns(y, t, cols)
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub train: Dataset,
    pub test: Dataset,
    pub support: Vec<usize>,
}

/// Training and test data of repetition `rep`.
pub fn generate(scenario: &SimScenario, rep: usize) -> Result<SimData> {
    let s = scenario;
    let mut rng = rng_for(s.seed, rep, Purpose::Train);
    let train = draw_dataset(&mut rng, s.example, s.n, s.p, s.t1, s.t2)?;
    let mut rng = rng_for(s.seed, rep, Purpose::Test);
    let test = draw_dataset(&mut rng, s.example, s.test_size(), s.p, s.t1, s.t2)?;
    Ok(SimData {
        train,
        test,
        support: s.example.support(),
    })
}

/// Population `corr(X_j, X_k)` and `corr(X_j, T)`.
pub fn true_correlations(t1: f64, t2: f64) -> (f64, f64) {
    let a = 12.0 + t1 * t1;
    (t1 * t1 / a, t1 * t2 / (a * (1.0 + t2 * t2)).sqrt())
}

/// Monte Carlo estimate of `Var(signal) / Var(eps)` (noise variance 1) for
/// an arbitrary signal `f(t, x)`, where `x` holds `p0` covariates.
pub fn signal_variance<F, R>(signal: F, p0: usize, t1: f64, t2: f64, samples: usize, rng: &mut R) -> f64
where
    F: Fn(f64, &[f64]) -> f64,
    R: Rng,
{
    let mut x = vec![0.0; p0];
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let t = draw_row(rng, t1, t2, &mut x);
            signal(t, &x)
        })
        .collect();
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
}

pub fn snr(scenario: &SimScenario, mc_samples: usize) -> Result<f64> {
    if mc_samples < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "SNR needs at least 10000 Monte Carlo samples, got {mc_samples}"
        )));
    }
    let ex = scenario.example;
    let mut rng = rng_for(scenario.seed, 0, Purpose::Snr);
    Ok(signal_variance(
        |t, x| ex.signal(t, x),
        ex.support_size(),
        scenario.t1,
        scenario.t2,
        mc_samples,
        &mut rng,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub tp: usize,
    pub fp: usize,
    /// Mean squared prediction error on the test set.
    pub pe: f64,
    pub model_size: usize,
}

pub fn evaluate_rep(
    selected: &[usize],
    support: &[usize],
    fit: &FitResult,
    basis: &SplineBasis,
    test: &Dataset,
) -> Result<RepMetrics> {
    let covariates = selected.iter().filter(|&&j| j != 0);
    let tp = covariates.clone().filter(|j| support.contains(j)).count();
    let fp = covariates.filter(|j| !support.contains(j)).count();
    let pred = predict_dataset(fit, basis, test)?;
    let pe = test
        .y()
        .iter()
        .zip(&pred)
        .map(|(y, f)| (y - f).powi(2))
        .sum::<f64>()
        / test.n() as f64;
    Ok(RepMetrics {
        tp,
        fp,
        pe,
        model_size: selected.len(),
    })
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (m - 1) q`). `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Normal-consistent robust standard deviation `IQR / 1.349`.
pub fn robust_sd(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.75) - quantile(&v, 0.25)) / 1.349
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub reps: usize,
    pub mean_tp: f64,
    pub mean_fp: f64,
    pub mean_pe: f64,
    pub mean_size: f64,
    pub rsd_tp: f64,
    pub rsd_fp: f64,
    pub rsd_pe: f64,
    pub rsd_size: f64,
    pub snr_estimate: Option<f64>,
}

pub fn aggregate(reps: &[RepMetrics]) -> Result<AggregateMetrics> {
    if reps.is_empty() {
        return Err(Error::Empty("no repetitions to aggregate"));
    }
    let col = |f: fn(&RepMetrics) -> f64| reps.iter().map(f).collect::<Vec<f64>>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let tp = col(|r| r.tp as f64);
    let fp = col(|r| r.fp as f64);
    let pe = col(|r| r.pe);
    let size = col(|r| r.model_size as f64);
    Ok(AggregateMetrics {
        reps: reps.len(),
        mean_tp: mean(&tp),
        mean_fp: mean(&fp),
        mean_pe: mean(&pe),
        mean_size: mean(&size),
        rsd_tp: robust_sd(&tp),
        rsd_fp: robust_sd(&fp),
        rsd_pe: robust_sd(&pe),
        rsd_size: robust_sd(&size),
        snr_estimate: None,
    })
}

/// How each repetition runs the selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSettings {
    pub dim_l: usize,
    pub order: usize,
    pub config: EbicConfig,
    /// Marginal-BIC pre-screen size; 0 disables screening.
    pub screen_k: usize,
    pub initial_set: Vec<usize>,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            dim_l: 7,
            order: DEFAULT_ORDER,
            config: EbicConfig::bic(),
            screen_k: 0,
            initial_set: vec![0],
        }
    }
}

/// Runs forward selection (optionally after the marginal screen) on a
/// dataset.
pub fn select_on(
    dataset: &Dataset,
    basis: &SplineBasis,
    settings: &SelectionSettings,
) -> Result<crate::selector::SelectionTrace> {
    if settings.screen_k == 0 {
        return run_forward(dataset, basis, &settings.config, &settings.initial_set);
    }
    let mut pool = marginal_rank_screen(dataset, basis, settings.screen_k)?;
    pool.retain(|j| !settings.initial_set.contains(j));
    pool.sort_unstable();
    if !settings.initial_set.contains(&0) {
        pool.insert(0, 0);
    }
    run_forward_with_pool(
        dataset,
        basis,
        &settings.config,
        &settings.initial_set,
        &pool,
        settings.screen_k,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub metrics: RepMetrics,
    pub selected: Vec<usize>,
    pub stop_reason: StopReason,
}

pub fn run_rep(scenario: &SimScenario, settings: &SelectionSettings, rep: usize) -> Result<RepOutcome> {
    let basis = SplineBasis::new(settings.dim_l, settings.order)?;
    let data = generate(scenario, rep)?;
    let trace = select_on(&data.train, &basis, settings)?;
    let bm = data.train.basis_matrix(&basis)?;
    let fit = fit_subset(&data.train, &bm, &trace.final_set)?;
    let metrics = evaluate_rep(&trace.final_set, &data.support, &fit, &basis, &data.test)?;
    Ok(RepOutcome {
        rep,
        metrics,
        selected: trace.final_set,
        stop_reason: trace.stop_reason,
    })
}

/// All repetitions of a scenario, in repetition order, plus their
/// aggregate. Repetitions run on the current rayon pool.
pub fn run_scenario(
    scenario: &SimScenario,
    settings: &SelectionSettings,
    snr_samples: Option<usize>,
) -> Result<(Vec<RepOutcome>, AggregateMetrics)> {
    scenario.validate(settings.dim_l)?;
    let outcomes = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| run_rep(scenario, settings, rep))
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<RepMetrics> = outcomes.iter().map(|o| o.metrics).collect();
    let mut agg = aggregate(&metrics)?;
    if let Some(samples) = snr_samples {
        agg.snr_estimate = Some(snr(scenario, samples)?);
    }
    Ok((outcomes, agg))
}
