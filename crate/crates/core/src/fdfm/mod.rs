//! The functional dynamic factor model.
//!
//! Curves `x_i(t_j) = Σ_k β_ik f_k(t_j) + ε_ij` with independent stationary
//! AR(p) factor scores `β_·k` and smooth loading curves `f_k`, estimated by a
//! penalized-likelihood EM algorithm:
//!
//! * [`estep`]: posterior moments of the scores, inverting only K n×n blocks.
//! * [`mstep`]: ridge loading updates with GCV smoothing selection computed
//!   from the eigendecomposition of the penalty, AR updates on expected normal
//!   equations and the noise variance update.
//! * [`fit`]: SVD start, the EM loop and the penalized log-likelihood.
//! * [`forecast`]: curve forecasts and synthesis of unobserved maturities.
//! * [`serialize`]: the text model document.

pub mod estep;
pub mod fit;
pub mod forecast;
pub mod mstep;
pub mod ortho;
pub mod panel;
pub mod serialize;
#[cfg(test)]
pub(crate) mod testutil;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::artime::{ArError, ArProcess, RegressorPanel};
use crate::spline::{KnotGrid, NaturalCubicSpline, SplineError};

pub use estep::{e_step, PosteriorMoments};
pub use fit::{fit, initialize_svd, penalized_loglik, plugin_penalized_loglik};
pub use forecast::{forecast_curve, synthesize_series, CurveForecast};
pub use mstep::{gcv_score, m_step_ar, m_step_loading, select_lambda, update_sigma2, LoadingProblem};
pub use ortho::{orthonormalize, Orthonormalized};
pub use panel::CurvePanel;
pub use serialize::{model_from_str, model_to_string};

#[derive(Error, Debug, Clone)]
pub enum FdfmError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("factor {factor}: {source}")]
    Ar { factor: usize, source: ArError },
    #[error("invalid panel: {0}")]
    Panel(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("requested {requested} factors but the data matrix has numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("loadings are not orthonormal (max |FFᵀ − I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("loading matrix is rank deficient; cannot orthonormalize")]
    DegenerateLoadings,
    #[error("numerically singular matrix in the E-step for factor {0}")]
    Singular(usize),
    #[error("GCV denominator is not positive (effective degrees of freedom reach m)")]
    DegenerateGcv,
    #[error("every smoothing parameter on the grid gave a degenerate GCV score")]
    LambdaSelection,
    #[error("forecasting a model with regressors needs the future regressor rows")]
    RegressorsRequired,
    #[error("model document: {0}")]
    Document(String),
}

/// Inner product under which the reported loadings are orthonormal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerProduct {
    /// `f_kᵀ f_l = δ_kl` on the knot values; what the EM iterates use.
    #[default]
    Discrete,
    /// Trapezoid-weighted `f_kᵀ W f_l = δ_kl`, applied to the reported
    /// loadings and scores after the EM has converged (AR parameters are
    /// refitted on the transformed scores).
    Quadrature,
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FdfmConfig {
    pub factors: usize,
    pub ar_order: usize,
    pub lambda_grid: Vec<f64>,
    pub em_tolerance: f64,
    pub max_iterations: usize,
    pub gcv_enabled: bool,
    /// Per-factor smoothing parameters; overrides GCV when present.
    pub fixed_lambdas: Option<Vec<f64>>,
    pub regressors: Option<RegressorPanel>,
    pub inner_product: InnerProduct,
}

impl Default for FdfmConfig {
    fn default() -> Self {
        Self {
            factors: 3,
            ar_order: 1,
            lambda_grid: log_spaced(1e-4, 1e6, 25),
            em_tolerance: 1e-6,
            max_iterations: 500,
            gcv_enabled: true,
            fixed_lambdas: None,
            regressors: None,
            inner_product: InnerProduct::Discrete,
        }
    }
}

impl FdfmConfig {
    pub fn with_factors(mut self, k: usize) -> Self {
        self.factors = k;
        self
    }

    pub fn with_fixed_lambdas(mut self, lambdas: Vec<f64>) -> Self {
        self.fixed_lambdas = Some(lambdas);
        self.gcv_enabled = false;
        self
    }

    /// True when smoothing parameters are re-selected by GCV each iteration.
    pub fn selects_lambda(&self) -> bool {
        self.gcv_enabled && self.fixed_lambdas.is_none()
    }

    pub fn validate(&self, panel: &CurvePanel) -> Result<(), FdfmError> {
        let (n, m) = (panel.n(), panel.m());
        if self.factors == 0 || self.factors >= n.min(m) {
            return Err(FdfmError::Config(format!(
                "factor count {} must satisfy 1 <= K < min(n, m) = {}",
                self.factors,
                n.min(m)
            )));
        }
        if self.ar_order == 0 {
            return Err(FdfmError::Config("AR order must be at least 1".into()));
        }
        if n < 2 * self.ar_order + 5 {
            return Err(FdfmError::Config(format!(
                "panel has {n} rows; estimation needs at least 2p + 5 = {}",
                2 * self.ar_order + 5
            )));
        }
        if self.selects_lambda() && self.lambda_grid.is_empty() {
            return Err(FdfmError::Config("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(FdfmError::Config("lambda grid values must be positive and finite".into()));
        }
        if let Some(l) = &self.fixed_lambdas {
            if l.len() != self.factors || l.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(FdfmError::Config(format!(
                    "fixed lambdas must be {} non-negative finite values",
                    self.factors
                )));
            }
        }
        if let Some(r) = &self.regressors {
            if r.len() != n {
                return Err(FdfmError::Config(format!("regressor panel has {} rows, panel has {n}", r.len())));
            }
        }
        if !(self.em_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(FdfmError::Config("EM tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// The parameter set the EM iterates on.
#[derive(Debug, Clone, PartialEq)]
pub struct FdfmParams {
    /// K×m, rows are the discrete loading vectors.
    pub loadings: DMatrix<f64>,
    pub factors: Vec<ArProcess>,
    pub sigma2: f64,
    pub lambdas: Vec<f64>,
}

impl FdfmParams {
    pub fn k(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn loading(&self, k: usize) -> Vec<f64> {
        self.loadings.row(k).iter().copied().collect()
    }

    /// Largest relative change `|Δ| / (1 + |old|)` over every scalar parameter.
    pub fn max_relative_change(&self, old: &FdfmParams) -> f64 {
        let rel = |new: f64, old: f64| (new - old).abs() / (1.0 + old.abs());
        let mut worst = rel(self.sigma2, old.sigma2);
        for (a, b) in self.loadings.iter().zip(old.loadings.iter()) {
            worst = worst.max(rel(*a, *b));
        }
        for (a, b) in self.factors.iter().zip(&old.factors) {
            worst = worst.max(rel(a.intercept, b.intercept));
            worst = worst.max(rel(a.innovation_variance, b.innovation_variance));
            for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
                worst = worst.max(rel(*x, *y));
            }
            if let (Some(x), Some(y)) = (&a.regressor_coefficients, &b.regressor_coefficients) {
                for (u, v) in x.iter().zip(y) {
                    worst = worst.max(rel(*u, *v));
                }
            }
        }
        worst
    }
}

/// A fitted model.
#[derive(Debug, Clone)]
pub struct FdfmModel {
    pub grid: KnotGrid,
    pub loadings: Vec<NaturalCubicSpline>,
    pub factors: Vec<ArProcess>,
    /// n×K posterior-mean scores.
    pub scores: DMatrix<f64>,
    pub sigma2: f64,
    pub lambdas: Vec<f64>,
    /// Penalized observed-data log-likelihood at every iterate.
    pub fit_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub inner_product: InnerProduct,
    pub regressors: Option<RegressorPanel>,
}

impl FdfmModel {
    pub fn k(&self) -> usize {
        self.loadings.len()
    }

    pub fn ar_order(&self) -> usize {
        self.factors.first().map_or(0, |f| f.order())
    }

    /// K×m matrix of knot values.
    pub fn loading_matrix(&self) -> DMatrix<f64> {
        let m = self.grid.len();
        DMatrix::from_fn(self.k(), m, |k, j| self.loadings[k].values()[j])
    }

    pub fn params(&self) -> FdfmParams {
        FdfmParams {
            loadings: self.loading_matrix(),
            factors: self.factors.clone(),
            sigma2: self.sigma2,
            lambdas: self.lambdas.clone(),
        }
    }

    /// Fitted values `B̂ F̂` on the knots.
    pub fn fitted(&self) -> DMatrix<f64> {
        &self.scores * self.loading_matrix()
    }
}
