use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{CurvePanel, FdfmError, PosteriorMoments};
use crate::artime::{self, ArError, ArProcess, RegressorPanel, SeriesMoments, MIN_VARIANCE};
use crate::linalg::sorted_symmetric_eigen;
use crate::par;
use crate::spline::PenaltyOperator;

/// GCV denominators at or below this are treated as degenerate.
pub const GCV_DENOMINATOR_FLOOR: f64 = 1e-12;
/// Factors with `E‖β_k‖²` below this are frozen for the iteration.
pub const DEGENERATE_SCORE_NORM: f64 = 1e-12;
/// Radius non-stationary AR candidates are shrunk to.
pub const SHRINK_RADIUS: f64 = 0.99;

/// The penalized least-squares problem for one loading:
/// `min_f E‖X* − β_k fᵀ‖² / σ² + λ fᵀΩf`, solved in the eigenbasis of Ω.
#[derive(Debug, Clone)]
pub struct LoadingProblem<'a> {
    penalty: &'a PenaltyOperator,
    /// `E[X*]ᵀ E[β_k]`-type cross product `(X*)ᵀβ_k` under the posterior.
    pub cross: DVector<f64>,
    /// `Γᵀ cross`.
    rotated: DVector<f64>,
    /// `E‖β_k‖² / σ²`.
    pub nu: f64,
    pub sigma2: f64,
}

impl<'a> LoadingProblem<'a> {
    /// Builds the problem for factor `k`; `loadings` supplies the other
    /// factors' current loadings for the partial residual `X*`.
    pub fn new(
        k: usize,
        panel: &CurvePanel,
        posterior: &PosteriorMoments,
        loadings: &DMatrix<f64>,
        sigma2: f64,
        penalty: &'a PenaltyOperator,
    ) -> Self {
        let mk = posterior.means.column(k);
        let mut cross = panel.data().transpose() * mk;
        for h in 0..loadings.nrows() {
            if h == k {
                continue;
            }
            let w = posterior.means.column(h).dot(&mk);
            for j in 0..cross.len() {
                cross[j] -= w * loadings[(h, j)];
            }
        }
        Self::from_parts(cross, posterior.expected_sq_norm(k), sigma2, penalty)
    }

    pub fn from_parts(cross: DVector<f64>, expected_sq_norm: f64, sigma2: f64, penalty: &'a PenaltyOperator) -> Self {
        let rotated = penalty.eigenvectors().transpose() * &cross;
        Self { penalty, cross, rotated, nu: expected_sq_norm / sigma2, sigma2 }
    }

    fn shrink(&self, lambda: f64) -> impl Iterator<Item = f64> + '_ {
        self.penalty.eigenvalues().iter().map(move |d| 1.0 / (self.nu + lambda * d))
    }

    /// `f̂ = σ⁻² (νI + λΩ)⁻¹ (X*)ᵀβ_k`.
    pub fn solve(&self, lambda: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.rotated.len(),
            self.shrink(lambda).zip(self.rotated.iter()).map(|(s, a)| s * a / self.sigma2),
        );
        self.penalty.eigenvectors() * scaled
    }

    /// `S(λ) = (νI + λΩ)⁻¹`.
    pub fn smoother(&self, lambda: f64) -> DMatrix<f64> {
        let g = self.penalty.eigenvectors();
        let d = DVector::from_iterator(g.ncols(), self.shrink(lambda));
        g * DMatrix::from_diagonal(&d) * g.transpose()
    }

    pub fn smoother_trace(&self, lambda: f64) -> f64 {
        self.shrink(lambda).sum()
    }

    /// GCV numerator and denominator:
    /// `‖(I − νS)(X*)ᵀβ_k‖²/m` and `(1 − tr(νS)/m)²`.
    pub fn gcv_parts(&self, lambda: f64) -> (f64, f64) {
        let m = self.rotated.len() as f64;
        let mut num = 0.0;
        let mut tr = 0.0;
        for (d, a) in self.penalty.eigenvalues().iter().zip(self.rotated.iter()) {
            let denom = self.nu + lambda * d;
            let resid = lambda * d / denom;
            num += resid * resid * a * a;
            tr += self.nu / denom;
        }
        (num / m, (1.0 - tr / m).powi(2))
    }

    pub fn gcv(&self, lambda: f64) -> Result<f64, FdfmError> {
        let (num, den) = self.gcv_parts(lambda);
        let m = self.rotated.len() as f64;
        // effective degrees of freedom at m make the denominator vanish
        if !(den > GCV_DENOMINATOR_FLOOR) || self.smoother_trace(lambda) * self.nu >= m {
            return Err(FdfmError::DegenerateGcv);
        }
        Ok(num / den)
    }
}

/// Ridge loading update for factor `k` at smoothing parameter `lambda`.
pub fn m_step_loading(
    k: usize,
    panel: &CurvePanel,
    posterior: &PosteriorMoments,
    loadings: &DMatrix<f64>,
    lambda: f64,
    sigma2: f64,
    penalty: &PenaltyOperator,
) -> DVector<f64> {
    LoadingProblem::new(k, panel, posterior, loadings, sigma2, penalty).solve(lambda)
}

pub fn gcv_score(
    lambda: f64,
    k: usize,
    panel: &CurvePanel,
    posterior: &PosteriorMoments,
    loadings: &DMatrix<f64>,
    sigma2: f64,
    penalty: &PenaltyOperator,
) -> Result<f64, FdfmError> {
    LoadingProblem::new(k, panel, posterior, loadings, sigma2, penalty).gcv(lambda)
}

/// Grid minimizer of GCV; ties go to the larger λ. Degenerate grid points
/// are skipped.
pub fn select_lambda(problem: &LoadingProblem<'_>, grid: &[f64]) -> Result<(f64, f64), FdfmError> {
    let scores = par::map(grid, |&l| problem.gcv(l).ok());
    let mut best: Option<(f64, f64)> = None;
    for (&l, s) in grid.iter().zip(scores) {
        let Some(s) = s else { continue };
        best = match best {
            None => Some((l, s)),
            Some((bl, bs)) if s < bs || (s == bs && l > bl) => Some((l, s)),
            keep => keep,
        };
    }
    best.ok_or(FdfmError::LambdaSelection)
}

/// Expected complete-data objective in the loadings on the orthonormal set,
/// up to terms constant there: `σ⁻² Σ_k f_kᵀXᵀm_k − ½ Σ_k λ_k f_kᵀΩf_k`.
pub(crate) fn loading_objective(
    loadings: &DMatrix<f64>,
    xtm: &DMatrix<f64>,
    lambdas: &[f64],
    sigma2: f64,
    penalty: &PenaltyOperator,
) -> f64 {
    (0..loadings.nrows())
        .map(|k| {
            let f: Vec<f64> = loadings.row(k).iter().copied().collect();
            let fit = (0..f.len()).map(|j| f[j] * xtm[(j, k)]).sum::<f64>() / sigma2;
            fit - 0.5 * lambdas[k] * penalty.quadratic_form(&f)
        })
        .sum()
}

/// Maximizes `bᵀy − ½ yᵀAy` over unit vectors `y` (A symmetric PSD).
fn sphere_quadratic_max(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (vals, vecs) = sorted_symmetric_eigen(a);
    let bt = vecs.transpose() * b;
    let dim = vals.len();
    let amin = vals[0];
    let bnorm = bt.norm();
    let scale = vals[dim - 1].abs().max(1.0);
    let norm_at = |shift: f64| -> f64 {
        (0..dim).map(|i| (bt[i] / (vals[i] - amin + shift)).powi(2)).sum::<f64>().sqrt()
    };
    // y(s) = (A − α_min I + sI)⁻¹ b, ‖y(s)‖ decreasing in s > 0
    let tiny = 1e-14 * scale;
    let degenerate_tol = 1e-12 * scale;
    let hard_case = bt.iter().zip(vals.iter()).filter(|(_, v)| *v - amin <= degenerate_tol).all(|(b, _)| b.abs() <= 1e-14 * (1.0 + bnorm));
    if hard_case {
        // minimal-eigenvalue directions carry no linear term
        let partial: Vec<f64> = (0..dim)
            .map(|i| if vals[i] - amin <= degenerate_tol { 0.0 } else { bt[i] / (vals[i] - amin) })
            .collect();
        let pn: f64 = partial.iter().map(|v| v * v).sum::<f64>().sqrt();
        if pn <= 1.0 {
            let mut y = DVector::from_vec(partial);
            y[0] += (1.0 - pn * pn).max(0.0).sqrt();
            return vecs * y;
        }
    }
    if bnorm == 0.0 {
        return vecs.column(0).into_owned();
    }
    let (mut lo, mut hi) = (tiny, bnorm + tiny);
    if norm_at(lo) < 1.0 {
        lo = 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = hi;
    let y = DVector::from_fn(dim, |i, _| bt[i] / (vals[i] - amin + s));
    let y = &y / y.norm();
    vecs * y
}

/// One constrained coordinate-ascent pass: each loading in turn is moved to
/// the best unit vector orthogonal to the others. Keeps a loading unchanged
/// unless the objective improves.
pub(crate) fn constrained_loading_pass(
    loadings: &DMatrix<f64>,
    xtm: &DMatrix<f64>,
    lambdas: &[f64],
    sigma2: f64,
    penalty: &PenaltyOperator,
    frozen: &[bool],
) -> DMatrix<f64> {
    let (kc, m) = (loadings.nrows(), loadings.ncols());
    let mut f = loadings.clone();
    for k in 0..kc {
        if frozen[k] {
            continue;
        }
        // orthonormal basis of the complement of the other loadings
        let mut proj = DMatrix::<f64>::identity(m, m);
        for h in (0..kc).filter(|&h| h != k) {
            let row = f.row(h).transpose();
            proj -= &row * row.transpose();
        }
        let (vals, vecs) = sorted_symmetric_eigen(&proj);
        let cols: Vec<usize> = (0..m).filter(|&i| vals[i] > 0.5).collect();
        let w = DMatrix::from_fn(m, cols.len(), |r, c| vecs[(r, cols[c])]);
        let b = w.transpose() * xtm.column(k);
        let a = w.transpose() * penalty.omega() * &w * (sigma2 * lambdas[k]);
        let cand = &w * sphere_quadratic_max(&a, &b);
        let score = |v: &DVector<f64>| {
            let vs: Vec<f64> = v.iter().copied().collect();
            v.dot(&xtm.column(k)) - 0.5 * sigma2 * lambdas[k] * penalty.quadratic_form(&vs)
        };
        let old = f.row(k).transpose();
        if score(&cand) > score(&old) {
            f.set_row(k, &cand.transpose());
        }
    }
    f
}

/// `σ̂² = (‖X − MF‖² + Σ_k tr(C_k) ‖f_k‖²) / (nm)`, clamped at `1e−14`.
pub fn update_sigma2(panel: &CurvePanel, posterior: &PosteriorMoments, loadings: &DMatrix<f64>) -> f64 {
    let resid = panel.data() - &posterior.means * loadings;
    let mut total = resid.norm_squared();
    for k in 0..loadings.nrows() {
        total += posterior.cov_blocks[k].trace() * loadings.row(k).norm_squared();
    }
    let s2 = total / (panel.n() * panel.m()) as f64;
    if s2 < MIN_VARIANCE {
        warn!("noise variance {s2:e} clamped to {MIN_VARIANCE:e}");
        return MIN_VARIANCE;
    }
    s2
}

/// Conditional least-squares AR candidate from the posterior moments of one
/// factor (FGLS when regressors are supplied).
pub fn ar_candidate(
    posterior: &PosteriorMoments,
    k: usize,
    p: usize,
    regressors: Option<&RegressorPanel>,
) -> Result<ArProcess, ArError> {
    let mean = posterior.mean(k);
    let moments = SeriesMoments::latent(&mean, &posterior.cov_blocks[k]);
    let fitted = match regressors {
        Some(r) => match artime::fit_fgls_moments(moments, r, p) {
            Err(ArError::NonConvergence { last, .. }) => {
                warn!("factor {k}: FGLS did not converge; using last iterate");
                Ok(*last)
            }
            other => other,
        },
        None => artime::fit_ols_moments(moments, p),
    }?;
    if fitted.is_stationary() {
        Ok(fitted)
    } else {
        warn!("factor {k}: non-stationary AR update (radius {:.4}) shrunk", fitted.spectral_radius());
        Ok(fitted.shrink_to_radius(SHRINK_RADIUS))
    }
}

/// AR update for every factor: maximizes the expected exact stationary
/// log-likelihood of each factor's scores under the posterior, started from
/// the previous process and the least-squares candidate. A factor keeps its
/// previous process if the search does not improve on it.
pub fn m_step_ar(
    posterior: &PosteriorMoments,
    current: &[ArProcess],
    p: usize,
    regressors: Option<&RegressorPanel>,
    frozen: &[bool],
) -> Result<Vec<ArProcess>, FdfmError> {
    let updated = par::map_range(current.len(), |k| -> Result<ArProcess, FdfmError> {
        let old = &current[k];
        if frozen[k] {
            return Ok(old.clone());
        }
        let cand = match ar_candidate(posterior, k, p, regressors) {
            Ok(c) => Some(c),
            Err(ArError::Degenerate) => None,
            Err(source) => return Err(FdfmError::Ar { factor: k, source }),
        };
        let mean = posterior.mean(k);
        let moments = SeriesMoments::latent(&mean, &posterior.cov_blocks[k]);
        let mut starts = vec![old];
        starts.extend(cand.as_ref());
        let next = match artime::fit_exact_moments(moments, regressors, p, &starts) {
            Ok(next) => next,
            Err(ArError::Degenerate) => {
                warn!("factor {k}: degenerate AR update; keeping previous parameters");
                return Ok(old.clone());
            }
            Err(source) => return Err(FdfmError::Ar { factor: k, source }),
        };
        let value = |proc: &ArProcess| proc.expected_stationary_loglik(moments, regressors).ok();
        match (value(&next), value(old)) {
            (Some(a), Some(b)) if a < b => Ok(old.clone()),
            (Some(_), _) => Ok(next),
            _ => Ok(old.clone()),
        }
    });
    updated.into_iter().collect()
}
