//! Dense reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vcselect::spline::{design_block, DesignBlock, SplineBasis};

pub fn dense(blocks: &[&DesignBlock]) -> DMatrix<f64> {
    let n = blocks[0].n();
    let m: usize = blocks.iter().map(|b| b.dim()).sum();
    let mut a = DMatrix::zeros(n, m);
    let mut col = 0;
    for b in blocks {
        for j in 0..b.dim() {
            for i in 0..n {
                a[(i, col)] = b.matrix[[i, j]];
            }
            col += 1;
        }
    }
    a
}

/// `|y - A A^+ y|^2 / n` through the SVD pseudo-inverse.
pub fn refit_sigma(blocks: &[&DesignBlock], y: &[f64]) -> f64 {
    let yv = DVector::from_column_slice(y);
    if blocks.is_empty() {
        return yv.norm_squared() / y.len() as f64;
    }
    let a = dense(blocks);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&yv, 1e-12).unwrap();
    (yv - a * coef).norm_squared() / y.len() as f64
}

pub struct Instance {
    pub y: Vec<f64>,
    pub blocks: Vec<DesignBlock>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Instance, usize) {
    let dim_l = rng.random_range(4..=6);
    let p = rng.random_range(3..=15);
    let n = rng.random_range((3 * dim_l + 10)..=100);
    let basis = SplineBasis::cubic(dim_l).unwrap();
    let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let mut blocks = Vec::new();
    let ones = vec![1.0; n];
    blocks.push(design_block(&basis, 0, &t, &ones).unwrap());
    let mut cols = Vec::new();
    for j in 1..=p {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        blocks.push(design_block(&basis, j, &t, &x).unwrap());
        cols.push(x);
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let s = (1.0 + t[i]) * cols[0][i] - 2.0 * (3.0 * t[i]).sin() * cols[1][i];
            let e: f64 = rng.sample(StandardNormal);
            s + e
        })
        .collect();
    (Instance { y, blocks }, dim_l)
}
