use nalgebra::{DMatrix, DVector};

use super::{CurvePanel, FdfmError, FdfmParams};
use crate::artime::RegressorPanel;
use crate::linalg::symmetrize;
use crate::par;

/// Largest `|FFᵀ − I|` entry the E-step accepts.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Posterior moments of the factor scores given the data.
///
/// With orthonormal loadings the posterior covariance is block diagonal
/// across factors, so only the K diagonal n×n blocks are stored.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    /// n×K, column k is `E[β_k | X]`.
    pub means: DMatrix<f64>,
    /// `Cov(β_k | X)` for each factor.
    pub cov_blocks: Vec<DMatrix<f64>>,
    /// Observed-data log-likelihood `log p(X; θ)` under the current parameters.
    pub loglik: f64,
}

impl PosteriorMoments {
    pub fn n(&self) -> usize {
        self.means.nrows()
    }

    pub fn k(&self) -> usize {
        self.means.ncols()
    }

    pub fn mean(&self, k: usize) -> Vec<f64> {
        self.means.column(k).iter().copied().collect()
    }

    /// Stacked `vec(B)` posterior mean (factor-major, length nK).
    pub fn stacked_mean(&self) -> DVector<f64> {
        DVector::from_column_slice(self.means.as_slice())
    }

    /// `E[β_k β_hᵀ | X]`. Cross-factor posterior covariances vanish, so for
    /// `k ≠ h` this is the outer product of the means.
    pub fn second_moment(&self, k: usize, h: usize) -> DMatrix<f64> {
        let outer = self.means.column(k) * self.means.column(h).transpose();
        if k == h {
            &self.cov_blocks[k] + outer
        } else {
            outer
        }
    }

    /// `E[‖β_k‖² | X] = tr(C_k) + ‖m_k‖²`.
    pub fn expected_sq_norm(&self, k: usize) -> f64 {
        self.cov_blocks[k].trace() + self.means.column(k).norm_squared()
    }

    pub fn permute(&mut self, order: &[usize]) {
        let means = DMatrix::from_fn(self.n(), order.len(), |i, c| self.means[(i, order[c])]);
        self.cov_blocks = order.iter().map(|&k| self.cov_blocks[k].clone()).collect();
        self.means = means;
    }

    pub fn negate(&mut self, k: usize) {
        self.means.column_mut(k).neg_mut();
    }
}

pub(crate) fn orthonormality_error(loadings: &DMatrix<f64>) -> f64 {
    let gram = loadings * loadings.transpose();
    let k = gram.nrows();
    (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .map(|(a, b)| (gram[(a, b)] - if a == b { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Per-factor prior mean path and Toeplitz covariance.
pub(crate) fn factor_priors(
    params: &FdfmParams,
    n: usize,
    regressors: Option<&RegressorPanel>,
) -> Result<Vec<(Vec<f64>, DMatrix<f64>)>, FdfmError> {
    params
        .factors
        .iter()
        .enumerate()
        .map(|(k, proc)| {
            let (_, sigma) = proc
                .unconditional_moments(n)
                .map_err(|source| FdfmError::Ar { factor: k, source })?;
            Ok((proc.mean_path(n, regressors), sigma))
        })
        .collect()
}

struct FactorPosterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    logdet: f64,
    quad: f64,
    z_sq: f64,
}

/// Posterior moments of the scores and the observed-data log-likelihood.
///
/// With `z_k = X f_k` and `G_k = Σ_k + σ² I`:
/// `E[β_k|X] = μ_k + Σ_k G_k⁻¹ (z_k − μ_k)` and
/// `Cov(β_k|X) = σ² G_k⁻¹ Σ_k`, which is `[σ⁻² I + Σ_k⁻¹]⁻¹`.
pub fn e_step(
    params: &FdfmParams,
    panel: &CurvePanel,
    regressors: Option<&RegressorPanel>,
) -> Result<PosteriorMoments, FdfmError> {
    let x = panel.data();
    let (n, m) = (panel.n(), panel.m());
    let k_count = params.k();
    if params.loadings.ncols() != m {
        return Err(FdfmError::Panel(format!("loadings have {} knots, panel has {m}", params.loadings.ncols())));
    }
    let err = orthonormality_error(&params.loadings);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(FdfmError::NotOrthonormal(err));
    }
    let s2 = params.sigma2;
    if !(s2 > 0.0) {
        return Err(FdfmError::Singular(0));
    }
    let priors = factor_priors(params, n, regressors)?;
    let z_all = x * params.loadings.transpose();

    let parts = par::map_range(k_count, |k| -> Result<FactorPosterior, FdfmError> {
        let (mu, sigma) = &priors[k];
        let z = z_all.column(k).into_owned();
        let mut g = sigma.clone();
        for i in 0..n {
            g[(i, i)] += s2;
        }
        let chol = g.cholesky().ok_or(FdfmError::Singular(k))?;
        let d = DVector::from_fn(n, |i, _| z[i] - mu[i]);
        let ginv_d = chol.solve(&d);
        let mean = DVector::from_fn(n, |i, _| mu[i]) + sigma * &ginv_d;
        let cov = symmetrize(&(chol.solve(sigma) * s2));
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(FactorPosterior { mean, cov, logdet, quad: d.dot(&ginv_d), z_sq: z.norm_squared() })
    });

    let mut means = DMatrix::zeros(n, k_count);
    let mut cov_blocks = Vec::with_capacity(k_count);
    let (nf, mf, kf) = (n as f64, m as f64, k_count as f64);
    let mut acc = nf * mf * (2.0 * std::f64::consts::PI).ln() + nf * (mf - kf) * s2.ln();
    let mut resid_sq = x.norm_squared();
    for (k, part) in parts.into_iter().enumerate() {
        let part = part?;
        means.set_column(k, &part.mean);
        cov_blocks.push(part.cov);
        acc += part.logdet + part.quad;
        resid_sq -= part.z_sq;
    }
    acc += resid_sq.max(0.0) / s2;
    Ok(PosteriorMoments { means, cov_blocks, loglik: -0.5 * acc })
}

/// `Σ_X⁻¹` assembled from the Woodbury factorization
/// `σ⁻² I − σ⁻⁴ U diag(C_k) Uᵀ` with `U = Fᵀ ⊗ I_n`, where
/// `C_k = [σ⁻² I + Σ_k⁻¹]⁻¹`. Only the K n×n inner blocks are inverted.
/// Rows and columns follow `vec(X)` (index `j·n + i`).
pub fn woodbury_precision(
    params: &FdfmParams,
    n: usize,
    regressors: Option<&RegressorPanel>,
) -> Result<DMatrix<f64>, FdfmError> {
    let err = orthonormality_error(&params.loadings);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(FdfmError::NotOrthonormal(err));
    }
    let m = params.loadings.ncols();
    let s2 = params.sigma2;
    let priors = factor_priors(params, n, regressors)?;
    let inner = par::map_range(params.k(), |k| -> Result<DMatrix<f64>, FdfmError> {
        let (_, sigma) = &priors[k];
        let mut g = sigma.clone();
        for i in 0..n {
            g[(i, i)] += s2;
        }
        let chol = g.cholesky().ok_or(FdfmError::Singular(k))?;
        Ok(symmetrize(&(chol.solve(sigma) * s2)))
    });
    let mut out = DMatrix::zeros(n * m, n * m);
    for i in 0..n * m {
        out[(i, i)] = 1.0 / s2;
    }
    let s4 = s2 * s2;
    for (k, c) in inner.into_iter().enumerate() {
        let c = c?;
        for j1 in 0..m {
            let f1 = params.loadings[(k, j1)];
            for j2 in 0..m {
                let w = f1 * params.loadings[(k, j2)] / s4;
                if w == 0.0 {
                    continue;
                }
                for a in 0..n {
                    for b in 0..n {
                        out[(j1 * n + a, j2 * n + b)] -= w * c[(a, b)];
                    }
                }
            }
        }
    }
    Ok(out)
}
