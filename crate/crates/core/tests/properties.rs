use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vcselect::data::Dataset;
use vcselect::regression::{
    build_projection_cache, fit_full, fit_subset, predict, predict_dataset, rss_reduction,
    score_candidate_alt,
};
use vcselect::selector::{ebic, run_forward, EbicConfig};
use vcselect::spline::{design_block, DesignBlock, SplineBasis};

/// `n` rows with `p` standard normal covariates and a response driven by
/// the first two.
fn dataset(seed: u64, n: usize, p: usize, scale: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let y = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            scale * (2.0 * t[i] * cols[0][i] + (1.0 - t[i]).powi(2) * cols[1.min(p - 1)][i] + e)
        })
        .collect();
    Dataset::from_columns(y, t, cols).unwrap()
}

fn blocks(ds: &Dataset, basis: &SplineBasis, set: &[usize]) -> Vec<DesignBlock> {
    let bm = ds.basis_matrix(basis).unwrap();
    set.iter().map(|&j| ds.block(&bm, j).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_is_a_nonnegative_partition_of_unity(
        dim_extra in 0usize..8,
        order in 2usize..6,
        t in 0.0f64..=1.0,
    ) {
        let basis = SplineBasis::new(order + dim_extra, order).unwrap();
        let b = basis.eval(t).unwrap();
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(b.iter().all(|&v| v >= 0.0));
        prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= order);
    }

    #[test]
    fn outside_unit_interval_is_rejected(t in prop_oneof![-10.0f64..-1e-9, 1.0f64 + 1e-9..10.0]) {
        let basis = SplineBasis::cubic(7).unwrap();
        prop_assert!(basis.eval(t).is_err());
    }

    #[test]
    fn design_rows_are_scaled_basis_rows(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = SplineBasis::cubic(6).unwrap();
        let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w = design_block(&basis, 3, &t, &x).unwrap();
        for i in 0..n {
            let b = basis.eval(t[i]).unwrap();
            for k in 0..6 {
                prop_assert!((w.matrix[[i, k]] - b[k] * x[i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn cached_residual_is_orthogonal(seed in any::<u64>(), n in 40usize..100, k in 1usize..4) {
        let ds = dataset(seed, n, 5, 1.0);
        let basis = SplineBasis::cubic(5).unwrap();
        let set: Vec<usize> = (0..k).collect();
        let bl = blocks(&ds, &basis, &set);
        let cache = build_projection_cache(&bl, ds.y()).unwrap();
        for b in &bl {
            for col in b.matrix.columns() {
                let d: f64 = col.iter().zip(cache.residual_y()).map(|(a, r)| a * r).sum();
                prop_assert!(d.abs() <= 1e-8 * n as f64);
            }
        }
        let full = fit_full(&bl, ds.y()).unwrap();
        prop_assert!((cache.sigma_sq() - full.sigma_sq).abs() <= 1e-10 * full.sigma_sq);
    }

    #[test]
    fn reduction_is_nonnegative_and_alt_score_is_a_norm(seed in any::<u64>()) {
        let ds = dataset(seed, 60, 6, 1.0);
        let basis = SplineBasis::cubic(5).unwrap();
        let bl = blocks(&ds, &basis, &[0, 1]);
        let cache = build_projection_cache(&bl, ds.y()).unwrap();
        for j in 2..=6 {
            let b = &blocks(&ds, &basis, &[j])[0];
            let red = rss_reduction(&cache, b).unwrap();
            prop_assert!(red.delta >= 0.0);
            let mut w = b.matrix.clone();
            cache.basis().residualize(&mut w);
            let c = w.t().dot(&ndarray::ArrayView1::from(cache.residual_y()));
            let want = c.dot(&c).sqrt();
            let got = score_candidate_alt(&cache, b).unwrap();
            prop_assert!((got - want).abs() <= 1e-10 * want.max(1.0));
        }
    }

    /// sigma2 never increases, sets are nested, and the declared set is the
    /// minimum-criterion prefix. Each sigma2 agrees with a refit.
    #[test]
    fn forward_trace_invariants(seed in any::<u64>(), eta in prop_oneof![Just(0.0), 0.0f64..1.0]) {
        let ds = dataset(seed, 90, 12, 1.0);
        let basis = SplineBasis::cubic(5).unwrap();
        let cfg = EbicConfig { eta, ..EbicConfig::bic() };
        let tr = run_forward(&ds, &basis, &cfg, &[0]).unwrap();
        let bm = ds.basis_matrix(&basis).unwrap();
        let mut prev = tr.initial_sigma_sq;
        let mut set = tr.initial_set.clone();
        let mut best = tr.initial_ebic;
        for s in &tr.steps {
            prop_assert!(s.sigma_sq <= prev * (1.0 + 1e-12));
            prev = s.sigma_sq;
            prop_assert!(!set.contains(&s.index));
            set.push(s.index);
            let refit = fit_subset(&ds, &bm, &set).unwrap();
            prop_assert!((refit.sigma_sq - s.sigma_sq).abs() <= 1e-9 * refit.sigma_sq);
            let e = s.ebic.unwrap();
            let want = ebic(s.sigma_sq, set.len(), 90, 12, 5, eta).unwrap();
            prop_assert_eq!(e, want);
            best = best.min(e);
        }
        prop_assert_eq!(tr.final_ebic().unwrap(), best);
        prop_assert_eq!(&tr.final_set[..], &set[..tr.initial_set.len() + tr.best_prefix]);
    }

    #[test]
    fn zero_eta_is_the_bic(sigma in 1e-6f64..1e3, size in 0usize..20, n in 10usize..5000, p in 2usize..5000) {
        let l = 7;
        let bic = n as f64 * sigma.ln() + (size * l) as f64 * (n as f64).ln();
        prop_assert_eq!(ebic(sigma, size, n, p, l, 0.0).unwrap(), bic);
    }

    #[test]
    fn response_scaling_keeps_the_path(seed in any::<u64>(), c in prop_oneof![Just(0.1), Just(10.0)]) {
        let ds = dataset(seed, 80, 10, 1.0);
        let scaled = dataset(seed, 80, 10, c);
        let basis = SplineBasis::cubic(5).unwrap();
        let cfg = EbicConfig::bic();
        let a = run_forward(&ds, &basis, &cfg, &[0]).unwrap();
        let b = run_forward(&scaled, &basis, &cfg, &[0]).unwrap();
        prop_assert_eq!(a.ranking(), b.ranking());
        prop_assert_eq!(&a.final_set, &b.final_set);
        for (x, y) in a.steps.iter().zip(&b.steps) {
            prop_assert!((y.sigma_sq - c * c * x.sigma_sq).abs() <= 1e-9 * y.sigma_sq);
        }
    }

    #[test]
    fn constants_are_reproduced(c in -100.0f64..100.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let ds = Dataset::from_columns(vec![c; n], t, vec![x]).unwrap();
        let basis = SplineBasis::cubic(7).unwrap();
        let bm = ds.basis_matrix(&basis).unwrap();
        let fit = fit_subset(&ds, &bm, &[0]).unwrap();
        prop_assert!(fit.sigma_sq <= 1e-20 * c * c + 1e-28);
        for s in 0..=10 {
            let v = predict(&fit, &basis, s as f64 / 10.0, &[1.0]).unwrap();
            prop_assert!((v - c).abs() <= 1e-10 * c.abs().max(1.0));
        }
    }
}

#[test]
fn saturated_fit_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10;
    let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ds = Dataset::from_columns(y.clone(), t, vec![x]).unwrap();
    let basis = SplineBasis::cubic(5).unwrap();
    let bm = ds.basis_matrix(&basis).unwrap();
    let fit = fit_subset(&ds, &bm, &[0, 1]).unwrap();
    let pred = predict_dataset(&fit, &basis, &ds).unwrap();
    for (a, b) in pred.iter().zip(&y) {
        assert!((a - b).abs() < 1e-8);
    }
}

/// Eigenvalues of `W'W / n` sit on the `1 / L` scale with a modest spread.
/// Covariates are bounded with unit second moment, like the intercept.
#[test]
fn gram_eigenvalues_scale_like_one_over_l() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let n = 400;
    let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n).map(|_| rng.random_range(-3f64.sqrt()..3f64.sqrt())).collect())
        .collect();
    let y = vec![0.0; n];
    let ds = Dataset::from_columns(y, t, cols).unwrap();
    for dim_l in [5, 7, 9] {
        let basis = SplineBasis::cubic(dim_l).unwrap();
        let bl = blocks(&ds, &basis, &[0, 1, 2, 3]);
        let m = dim_l * bl.len();
        let mut w = DMatrix::zeros(n, m);
        for (b, blk) in bl.iter().enumerate() {
            for k in 0..dim_l {
                for i in 0..n {
                    w[(i, b * dim_l + k)] = blk.matrix[[i, k]];
                }
            }
        }
        let g = w.transpose() * &w / n as f64;
        let eig = SymmetricEigen::new(g).eigenvalues;
        let lo = eig.min() * dim_l as f64;
        let hi = eig.max() * dim_l as f64;
        println!("L = {dim_l}: c1 = {lo:.4}, c2 = {hi:.4}, ratio = {:.2}", hi / lo);
        assert!(lo > 0.0 && hi / lo < 100.0);
    }
}
