//! Cross-checks against slow, independent reference computations.

mod common;

use common::{dense, random_instance, refit_sigma};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vcselect::regression::{build_projection_cache, coefficient_curve, fit_full, rss_reduction};
use vcselect::selector::{ebic, select_candidate, Criterion};
use vcselect::spline::{DesignBlock, SplineBasis};

/// Textbook recursive definition on half-open knot spans, with 0/0 = 0.
fn naive_bspline(knots: &[f64], i: usize, k: usize, t: f64) -> f64 {
    if k == 1 {
        return if knots[i] <= t && t < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + k - 1] - knots[i];
    if d1 > 0.0 {
        v += (t - knots[i]) / d1 * naive_bspline(knots, i, k - 1, t);
    }
    let d2 = knots[i + k] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + k] - t) / d2 * naive_bspline(knots, i + 1, k - 1, t);
    }
    v
}

#[test]
fn basis_matches_recursive_definition() {
    for (dim, order) in [(4, 4), (7, 4), (9, 4), (5, 3), (6, 2), (10, 5)] {
        let basis = SplineBasis::new(dim, order).unwrap();
        let knots = basis.knots().to_vec();
        for s in 0..997 {
            let t = s as f64 / 997.0;
            let got = basis.eval(t).unwrap();
            for (i, g) in got.iter().enumerate() {
                let want = naive_bspline(&knots, i, order, t);
                assert!((g - want).abs() < 1e-13, "dim {dim} order {order} t {t} i {i}");
            }
        }
        // right endpoint as a left limit
        let at_one = basis.eval(1.0).unwrap();
        let near = basis.eval(1.0 - 1e-12).unwrap();
        for (a, b) in at_one.iter().zip(&near) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn cubic_without_interior_knots_is_bernstein() {
    let basis = SplineBasis::cubic(4).unwrap();
    for s in 0..=50 {
        let t = s as f64 / 50.0;
        let u = 1.0 - t;
        let want = [u * u * u, 3.0 * t * u * u, 3.0 * t * t * u, t * t * t];
        for (g, w) in basis.eval(t).unwrap().iter().zip(want) {
            assert!((g - w).abs() < 1e-14);
        }
    }
}

#[test]
fn full_fit_matches_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (inst, _) = random_instance(&mut rng);
        let set: Vec<&DesignBlock> = inst.blocks.iter().take(4).collect();
        let owned: Vec<DesignBlock> = set.iter().map(|b| (*b).clone()).collect();
        let fit = fit_full(&owned, &inst.y).unwrap();
        let want = refit_sigma(&set, &inst.y);
        assert!((fit.sigma_sq - want).abs() <= 1e-10 * want);
        // normal equations hold at the solution
        let a = dense(&set);
        let g = DVector::from_iterator(fit.gamma.len(), fit.gamma.iter().cloned());
        let r = DVector::from_column_slice(&inst.y) - &a * g;
        let grad = a.transpose() * r;
        assert!(grad.amax() < 1e-8 * inst.y.len() as f64);
    }
}

#[test]
fn projection_cache_equals_explicit_projector() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (inst, _) = random_instance(&mut rng);
    let set: Vec<&DesignBlock> = inst.blocks.iter().take(3).collect();
    let owned: Vec<DesignBlock> = set.iter().map(|b| (*b).clone()).collect();
    let cache = build_projection_cache(&owned, &inst.y).unwrap();
    let a = dense(&set);
    // H = A (A'A)^-1 A'
    let ata = (a.transpose() * &a).try_inverse().unwrap();
    let h = &a * ata * a.transpose();
    let y = DVector::from_column_slice(&inst.y);
    let want = &y - h * &y;
    for (g, w) in cache.residual_y().iter().zip(want.iter()) {
        assert!((g - w).abs() < 1e-9);
    }
}

#[test]
fn curve_is_gamma_times_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (inst, dim_l) = random_instance(&mut rng);
    let basis = SplineBasis::cubic(dim_l).unwrap();
    let fit = fit_full(&inst.blocks[..3], &inst.y).unwrap();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let curve = coefficient_curve(&fit, &basis, 2, &grid).unwrap();
    let g = fit.gamma_for(2).unwrap();
    for (t, c) in grid.iter().zip(&curve) {
        let b = basis.eval(*t).unwrap();
        let want: f64 = b.iter().zip(g.iter()).map(|(x, y)| x * y).sum();
        assert!((c - want).abs() < 1e-12);
    }
}

#[test]
fn ebic_penalty_arithmetic() {
    let (n, p, l) = (200usize, 50usize, 5usize);
    let s = 1.7;
    let bic = ebic(s, 3, n, p, l, 0.0).unwrap();
    let want = n as f64 * s.ln() + 15.0 * (n as f64).ln();
    assert!((bic - want).abs() < 1e-9);
    let e = ebic(s, 3, n, p, l, 0.5).unwrap();
    assert!((e - bic - 15.0 * (p as f64).ln()).abs() < 1e-9);
}

/// Brute-force argmin over refits agrees with the cached scoring path,
/// and each scored reduction matches the refit difference.
#[test]
fn reductions_and_selection_match_refits() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..25 {
        let (inst, _) = random_instance(&mut rng);
        let s_len = rng.random_range(1..=3);
        let model: Vec<&DesignBlock> = inst.blocks[..s_len].iter().collect();
        let owned: Vec<DesignBlock> = model.iter().map(|b| (*b).clone()).collect();
        let cache = build_projection_cache(&owned, &inst.y).unwrap();
        let base = refit_sigma(&model, &inst.y);
        let mut brute = (f64::INFINITY, 0);
        for cand in &inst.blocks[s_len..] {
            let mut ext = model.clone();
            ext.push(cand);
            let sig = refit_sigma(&ext, &inst.y);
            let red = rss_reduction(&cache, cand).unwrap();
            let want = base - sig;
            assert!((red.delta - want).abs() <= 1e-8 * want.abs().max(1e-12 * base));
            if sig < brute.0 {
                brute = (sig, cand.covariate);
            }
        }
        let sel = select_candidate(&cache, &inst.blocks[s_len..], Criterion::ArgminSigma).unwrap();
        assert_eq!(sel.covariate, brute.1);
    }
}
