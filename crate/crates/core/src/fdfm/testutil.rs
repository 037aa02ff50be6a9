use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CurvePanel, FdfmParams};
use crate::artime::ArProcess;
use crate::linalg::{inv_sqrt_spd, toeplitz};
use crate::spline::KnotGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_orthonormal(k: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let f = random_matrix(k, m, rng);
    let (inv_root, _) = inv_sqrt_spd(&(&f * f.transpose()), 1e-12).unwrap();
    inv_root * f
}

pub fn random_grid(m: usize, rng: &mut ChaCha8Rng) -> KnotGrid {
    let mut t = 1.0;
    KnotGrid::new(
        (0..m)
            .map(|_| {
                t += rng.random_range(0.5..4.0);
                t
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_params(k: usize, m: usize, p: usize, rng: &mut ChaCha8Rng) -> FdfmParams {
    let factors = (0..k)
        .map(|_| {
            let coeffs: Vec<f64> = (0..p).map(|_| rng.random_range(-0.8..0.8) / p as f64).collect();
            ArProcess::new(coeffs, rng.random_range(-1.0..1.0), rng.random_range(0.3..2.0))
        })
        .collect();
    FdfmParams {
        loadings: random_orthonormal(k, m, rng),
        factors,
        sigma2: rng.random_range(0.05..0.5),
        lambdas: (0..k).map(|_| rng.random_range(0.1..10.0)).collect(),
    }
}

pub fn random_panel(n: usize, m: usize, rng: &mut ChaCha8Rng) -> CurvePanel {
    let grid = random_grid(m, rng);
    CurvePanel::new(random_matrix(n, m, rng) * 2.0, grid, None).unwrap()
}

/// Dense joint-Gaussian moments of `vec(X)` (column stacking, index `j·n+i`)
/// and of the stacked scores `vec(B)` (factor-major, index `k·n+i`).
pub struct DenseModel {
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub sigma_x: DMatrix<f64>,
}

pub fn dense_model(params: &FdfmParams, n: usize) -> DenseModel {
    let (k, m) = (params.k(), params.loadings.ncols());
    let mut mu_beta = DVector::zeros(n * k);
    let mut sigma_beta = DMatrix::zeros(n * k, n * k);
    for (c, proc) in params.factors.iter().enumerate() {
        // autocovariance by brute-force MA(∞) summation, independent of the
        // Yule–Walker path
        let psi = ma_weights(&proc.coefficients, 4000);
        let gamma: Vec<f64> = (0..n)
            .map(|l| proc.innovation_variance * (0..psi.len() - l).map(|j| psi[j] * psi[j + l]).sum::<f64>())
            .collect();
        let block = toeplitz(&gamma);
        let mean = proc.intercept / (1.0 - proc.coefficients.iter().sum::<f64>());
        for i in 0..n {
            mu_beta[c * n + i] = mean;
            for j in 0..n {
                sigma_beta[(c * n + i, c * n + j)] = block[(i, j)];
            }
        }
    }
    // U = Fᵀ ⊗ I_n maps vec(B) to vec(BF)
    let mut u = DMatrix::zeros(n * m, n * k);
    for j in 0..m {
        for c in 0..k {
            for i in 0..n {
                u[(j * n + i, c * n + i)] = params.loadings[(c, j)];
            }
        }
    }
    let mut sigma_x = &u * &sigma_beta * u.transpose();
    for i in 0..n * m {
        sigma_x[(i, i)] += params.sigma2;
    }
    DenseModel { mu_beta, sigma_beta, u, sigma_x }
}

fn ma_weights(phi: &[f64], len: usize) -> Vec<f64> {
    let mut psi = vec![1.0];
    for j in 1..len {
        let v = (1..=phi.len()).filter(|&r| r <= j).map(|r| phi[r - 1] * psi[j - r]).sum();
        psi.push(v);
    }
    psi
}

pub fn vec_of(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Gaussian log density evaluated densely.
pub fn dense_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().unwrap();
    let d = x - mean;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + d.dot(&chol.solve(&d)))
}
