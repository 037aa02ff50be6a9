//! Univariate AR(p) processes: conditional least-squares and feasible GLS
//! estimation, stationarity checks, plug-in forecasts and the stationary
//! autocovariance structure used by the E-step.
//!
//! All estimators work on [`SeriesMoments`], so the same normal equations
//! serve both an observed series (point mass) and a latent factor whose
//! products are replaced by posterior expectations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::linalg::{sorted_symmetric_eigen, toeplitz};

/// Innovation variances are floored here so that downstream covariance
/// matrices stay positive definite.
pub const MIN_VARIANCE: f64 = 1e-14;

/// Spectral radius threshold: stationary iff every root of the AR polynomial
/// has modulus above `1 + STATIONARITY_MARGIN`.
pub const STATIONARITY_MARGIN: f64 = 1e-10;

const FGLS_TOLERANCE: f64 = 1e-8;
const FGLS_MAX_ITERATIONS: usize = 50;

#[derive(Error, Debug, Clone)]
pub enum ArError {
    #[error("series of length {n} is too short for an AR({p}) fit (need n > p + 2)")]
    TooShort { n: usize, p: usize },
    #[error("AR order must be at least 1")]
    ZeroOrder,
    #[error("degenerate series: the lagged design matrix is rank deficient")]
    Degenerate,
    #[error("regressor matrix is rank deficient on the estimation sample")]
    RegressorRank,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("feasible GLS did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, last: Box<ArProcess> },
    #[error("AR process is not stationary (spectral radius {radius})")]
    NonStationary { radius: f64 },
    #[error("non-finite value in series")]
    NonFinite,
}

/// Per-time regressor rows `A_i` (n × d).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorPanel {
    pub rows: DMatrix<f64>,
}

impl RegressorPanel {
    pub fn new(rows: DMatrix<f64>) -> Self {
        Self { rows }
    }

    /// A single constant column.
    pub fn constant(n: usize) -> Self {
        Self { rows: DMatrix::from_element(n, 1, 1.0) }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self { rows: self.rows.rows(start, end - start).into_owned() }
    }
}

/// `β_i − A_i μ = Σ_r φ_r (β_{i−r} − A_{i−r} μ) + v_i`, or with an intercept
/// `β_i = c + Σ_r φ_r β_{i−r} + v_i` when there are no regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct ArProcess {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub innovation_variance: f64,
    pub regressor_coefficients: Option<Vec<f64>>,
}

/// First and second moments of a (possibly latent) series.
///
/// `E[x_i x_j] = mean_i mean_j + cov_ij`; without a covariance the series is
/// treated as observed.
#[derive(Debug, Clone, Copy)]
pub struct SeriesMoments<'a> {
    pub mean: &'a [f64],
    pub cov: Option<&'a DMatrix<f64>>,
}

impl<'a> SeriesMoments<'a> {
    pub fn observed(series: &'a [f64]) -> Self {
        Self { mean: series, cov: None }
    }

    pub fn latent(mean: &'a [f64], cov: &'a DMatrix<f64>) -> Self {
        Self { mean, cov: Some(cov) }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `E[x_i x_j]`.
    pub fn product(&self, i: usize, j: usize) -> f64 {
        let c = self.cov.map_or(0.0, |c| c[(i, j)]);
        self.mean[i] * self.mean[j] + c
    }
}

impl ArProcess {
    /// Intercept-form process.
    pub fn new(coefficients: Vec<f64>, intercept: f64, innovation_variance: f64) -> Self {
        Self {
            coefficients,
            intercept,
            innovation_variance,
            regressor_coefficients: None,
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// `c / (1 − Σ φ_r)`; zero for regressor-form processes.
    pub fn mean(&self) -> f64 {
        self.intercept / (1.0 - self.coefficients.iter().sum::<f64>())
    }

    /// Unconditional mean at every time index.
    pub fn mean_path(&self, n: usize, regressors: Option<&RegressorPanel>) -> Vec<f64> {
        match (&self.regressor_coefficients, regressors) {
            (Some(mu), Some(regs)) => (0..n)
                .map(|i| (0..mu.len()).map(|d| regs.rows[(i, d)] * mu[d]).sum())
                .collect(),
            _ => vec![self.mean(); n],
        }
    }

    /// Largest modulus among the companion-matrix eigenvalues (reciprocal
    /// of the smallest root modulus of `1 − Σ φ_r z^r`).
    pub fn spectral_radius(&self) -> f64 {
        let p = self.order();
        if p == 0 {
            return 0.0;
        }
        if p == 1 {
            return self.coefficients[0].abs();
        }
        let mut companion = DMatrix::zeros(p, p);
        for r in 0..p {
            companion[(0, r)] = self.coefficients[r];
        }
        for r in 1..p {
            companion[(r, r - 1)] = 1.0;
        }
        companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_stationary(&self) -> bool {
        self.spectral_radius() * (1.0 + STATIONARITY_MARGIN) < 1.0
    }

    /// Radially shrink the AR polynomial so that the spectral radius becomes
    /// `target` (`φ_r ← φ_r s^r`, `s = target / ρ`). Intercept-form processes
    /// keep their unconditional mean.
    pub fn shrink_to_radius(&self, target: f64) -> Self {
        let rho = self.spectral_radius();
        if rho <= target {
            return self.clone();
        }
        let s = target / rho;
        let mean = self.mean();
        let coefficients: Vec<f64> = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(r, phi)| phi * s.powi(r as i32 + 1))
            .collect();
        let intercept = if self.regressor_coefficients.is_some() || !mean.is_finite() {
            self.intercept
        } else {
            mean * (1.0 - coefficients.iter().sum::<f64>())
        };
        Self { coefficients, intercept, ..self.clone() }
    }

    /// Stationary autocovariances `γ(0), …, γ(n−1)` from the Yule–Walker
    /// relations.
    pub fn autocovariances(&self, n: usize) -> Result<Vec<f64>, ArError> {
        if !self.is_stationary() {
            return Err(ArError::NonStationary { radius: self.spectral_radius() });
        }
        let p = self.order();
        let phi = &self.coefficients;
        // γ(l) − Σ_r φ_r γ(|l − r|) = σ² [l = 0], l = 0..p
        let mut a = DMatrix::zeros(p + 1, p + 1);
        let mut b = DVector::zeros(p + 1);
        b[0] = self.innovation_variance;
        for l in 0..=p {
            a[(l, l)] += 1.0;
            for r in 1..=p {
                a[(l, l.abs_diff(r))] -= phi[r - 1];
            }
        }
        let head = a.lu().solve(&b).ok_or(ArError::NonStationary { radius: self.spectral_radius() })?;
        let mut gamma: Vec<f64> = head.iter().copied().collect();
        while gamma.len() < n {
            let l = gamma.len();
            let next = (1..=p).map(|r| phi[r - 1] * gamma[l - r]).sum();
            gamma.push(next);
        }
        gamma.truncate(n.max(1));
        if n == 0 {
            gamma.clear();
        }
        Ok(gamma)
    }

    /// Unconditional mean and the n×n Toeplitz autocovariance matrix.
    pub fn unconditional_moments(&self, n: usize) -> Result<(f64, DMatrix<f64>), ArError> {
        let gamma = self.autocovariances(n)?;
        Ok((self.mean(), toeplitz(&gamma)))
    }

    /// Iterated plug-in forecasts `h` steps past `history` (oldest first;
    /// at least `p` values, only the last `p` are used).
    pub fn forecast(&self, history: &[f64], h: usize) -> Vec<f64> {
        let p = self.order();
        assert!(history.len() >= p, "forecast needs at least p history values");
        let mut path: Vec<f64> = history[history.len() - p..].to_vec();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let l = path.len();
            let next = self.intercept + (1..=p).map(|r| self.coefficients[r - 1] * path[l - r]).sum::<f64>();
            path.push(next);
            out.push(next);
        }
        out
    }

    /// Forecasts for a regressor-form process given the last `p` values with
    /// their regressor rows and the regressor rows of the forecast periods.
    pub fn forecast_with_regressors(
        &self,
        history: &[f64],
        history_regressors: &DMatrix<f64>,
        future_regressors: &DMatrix<f64>,
    ) -> Vec<f64> {
        let mu = match &self.regressor_coefficients {
            Some(mu) => mu,
            None => return self.forecast(history, future_regressors.nrows()),
        };
        let p = self.order();
        let lin = |row: nalgebra::DMatrixView<f64>| (0..mu.len()).map(|d| row[(0, d)] * mu[d]).sum::<f64>();
        let hn = history.len();
        let mut dev: Vec<f64> = (0..p)
            .map(|q| history[hn - p + q] - lin(history_regressors.rows(history_regressors.nrows() - p + q, 1)))
            .collect();
        let mut out = Vec::new();
        for s in 0..future_regressors.nrows() {
            let l = dev.len();
            let next: f64 = (1..=p).map(|r| self.coefficients[r - 1] * dev[l - r]).sum();
            dev.push(next);
            out.push(next + lin(future_regressors.rows(s, 1)));
        }
        out
    }

    /// Draw a path of length `n` after a burn-in started at the mean.
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let burn = 500;
        let p = self.order();
        let noise = Normal::new(0.0, self.innovation_variance.sqrt()).expect("finite variance");
        let start = if self.mean().is_finite() { self.mean() } else { 0.0 };
        let mut path = vec![start; p];
        for _ in 0..burn + n {
            let l = path.len();
            let next = self.intercept
                + (1..=p).map(|r| self.coefficients[r - 1] * path[l - r]).sum::<f64>()
                + noise.sample(rng);
            path.push(next);
        }
        path[path.len() - n..].to_vec()
    }

    /// Conditional log-likelihood of an observed series given its first `p`
    /// values (intercept form).
    pub fn conditional_loglik(&self, series: &[f64]) -> f64 {
        let p = self.order();
        let s2 = self.innovation_variance;
        let mut ss = 0.0;
        for i in p..series.len() {
            let pred = self.intercept + (1..=p).map(|r| self.coefficients[r - 1] * series[i - r]).sum::<f64>();
            ss += (series[i] - pred).powi(2);
        }
        let n_eff = (series.len() - p) as f64;
        -0.5 * (n_eff * (2.0 * std::f64::consts::PI * s2).ln() + ss / s2)
    }

    /// `E[log N(x; mean path, Σ)]` for a latent series with the given moments
    /// under the exact stationary Gaussian law of the process.
    ///
    /// Uses the banded AR precision: the first `p` values have covariance
    /// `σ²R_p` and the later innovations are independent, so the cost is
    /// `O(n p²)`.
    pub fn expected_stationary_loglik(
        &self,
        moments: SeriesMoments<'_>,
        regressors: Option<&RegressorPanel>,
    ) -> Result<f64, ArError> {
        let w = Whitener::new(&self.coefficients)
            .ok_or(ArError::NonStationary { radius: self.spectral_radius() })?;
        let n = moments.len();
        let mean = self.mean_path(n, regressors);
        let dev: Vec<f64> = (0..n).map(|i| moments.mean[i] - mean[i]).collect();
        let e = w.apply(&dev);
        let q = e.iter().map(|v| v * v).sum::<f64>() + moments.cov.map_or(0.0, |c| w.cov_trace(c));
        let s2 = self.innovation_variance;
        Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI * s2).ln() + w.logdet + q / s2))
    }
}

/// The whitening map of a stationary AR(p) with unit innovation variance:
/// `L_p⁻¹ x_{1:p}` for the first `p` values (with `R_p = L_p L_pᵀ` their
/// covariance) and the innovations `x_i − Σ_r φ_r x_{i−r}` afterwards.
struct Whitener {
    phi: Vec<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `log det R_p`.
    logdet: f64,
}

impl Whitener {
    fn new(phi: &[f64]) -> Option<Self> {
        let unit = ArProcess::new(phi.to_vec(), 0.0, 1.0);
        if !unit.is_stationary() {
            return None;
        }
        let gamma = unit.autocovariances(phi.len()).ok()?;
        let chol = toeplitz(&gamma).cholesky()?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Some(Self { phi: phi.to_vec(), chol, logdet })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let p = self.phi.len();
        let head = self.chol.l().solve_lower_triangular(&DVector::from_column_slice(&x[..p])).expect("positive diagonal");
        let mut out: Vec<f64> = head.iter().copied().collect();
        for i in p..x.len() {
            out.push(x[i] - (1..=p).map(|r| self.phi[r - 1] * x[i - r]).sum::<f64>());
        }
        out
    }

    /// `tr(W C Wᵀ)`.
    fn cov_trace(&self, cov: &DMatrix<f64>) -> f64 {
        let p = self.phi.len();
        let n = cov.nrows();
        let head = cov.view((0, 0), (p, p)).into_owned();
        let mut total = self.chol.solve(&head).trace();
        let mut w = vec![1.0; p + 1];
        for r in 1..=p {
            w[r] = -self.phi[r - 1];
        }
        for i in p..n {
            for r in 0..=p {
                for s in 0..=p {
                    total += w[r] * w[s] * cov[(i - r, i - s)];
                }
            }
        }
        total
    }
}

/// Profile of the expected exact log-likelihood at `φ`, maximized in closed
/// form over the mean parameters (GLS on whitened moments) and the
/// innovation variance. Returns the value and the maximizing process.
fn exact_profile(
    phi: &[f64],
    moments: SeriesMoments<'_>,
    regressors: Option<&RegressorPanel>,
) -> Option<(f64, ArProcess)> {
    let w = Whitener::new(phi)?;
    let n = moments.len();
    let d = regressors.map_or(1, |r| r.dim());
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let col: Vec<f64> = match regressors {
                Some(r) => (0..n).map(|i| r.rows[(i, c)]).collect(),
                None => vec![1.0; n],
            };
            w.apply(&col)
        })
        .collect();
    let wm = w.apply(moments.mean);
    let gram = DMatrix::from_fn(d, d, |a, b| columns[a].iter().zip(&columns[b]).map(|(x, y)| x * y).sum());
    let rhs = DVector::from_fn(d, |a, _| columns[a].iter().zip(&wm).map(|(x, y)| x * y).sum());
    let mu = solve_normal_equations(&gram, &rhs)?;
    let q = (0..n)
        .map(|i| (wm[i] - (0..d).map(|c| columns[c][i] * mu[c]).sum::<f64>()).powi(2))
        .sum::<f64>()
        + moments.cov.map_or(0.0, |c| w.cov_trace(c));
    let s2 = (q / n as f64).max(MIN_VARIANCE);
    let value = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI * s2).ln() + w.logdet + q / s2);
    let proc = match regressors {
        Some(_) => ArProcess {
            coefficients: phi.to_vec(),
            intercept: 0.0,
            innovation_variance: s2,
            regressor_coefficients: Some(mu.iter().copied().collect()),
        },
        None => ArProcess::new(phi.to_vec(), mu[0] * (1.0 - phi.iter().sum::<f64>()), s2),
    };
    Some((value, proc))
}

/// Partial autocorrelations to AR coefficients (Durbin–Levinson step-up).
pub fn pacf_to_coefficients(kappa: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(kappa.len());
    for (j, &k) in kappa.iter().enumerate() {
        let prev = phi.clone();
        for i in 0..j {
            phi[i] = prev[i] - k * prev[j - 1 - i];
        }
        phi.push(k);
    }
    phi
}

/// AR coefficients to partial autocorrelations (step-down); `None` when the
/// process is not stationary.
pub fn coefficients_to_pacf(phi: &[f64]) -> Option<Vec<f64>> {
    let mut cur = phi.to_vec();
    let mut kappa = vec![0.0; phi.len()];
    for j in (0..phi.len()).rev() {
        let k = cur[j];
        if !(k.abs() < 1.0) {
            return None;
        }
        kappa[j] = k;
        let prev: Vec<f64> = (0..j).map(|i| (cur[i] + k * cur[j - 1 - i]) / (1.0 - k * k)).collect();
        cur = prev;
    }
    Some(kappa)
}

/// Nelder–Mead minimization from `start` with initial step `step`.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], step: f64, xtol: f64, max_evals: usize) -> Vec<f64> {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..dim {
        let mut x = start.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = dim + 1;
    let point = |c: &[f64], x: &[f64], t: f64| -> Vec<f64> { c.iter().zip(x).map(|(a, b)| a + t * (b - a)).collect() };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size < xtol {
            break;
        }
        let centroid: Vec<f64> =
            (0..dim).map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64).collect();
        let worst = simplex[dim].clone();
        let reflected = point(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < simplex[0].1 {
            let expanded = point(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            evals += 1;
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 { point(&centroid, &reflected, 0.5) } else { point(&centroid, &worst.0, 0.5) };
            let fc = f(&contracted);
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[dim] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x = point(&best, &entry.0, 0.5);
                    *entry = (x.clone(), f(&x));
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

/// Maximizes the expected exact stationary log-likelihood of a latent series.
/// The mean parameters and innovation variance are profiled out; the
/// coefficients are searched over partial autocorrelations `tanh(u)`,
/// starting from the best of `starts`. The result is never worse than any
/// stationary start.
pub fn fit_exact_moments(
    moments: SeriesMoments<'_>,
    regressors: Option<&RegressorPanel>,
    p: usize,
    starts: &[&ArProcess],
) -> Result<ArProcess, ArError> {
    let n = moments.len();
    check_length(n, p)?;
    if let Some(r) = regressors {
        if r.len() != n {
            return Err(ArError::Dimension { expected: n, found: r.len() });
        }
    }
    let to_u = |phi: &[f64]| -> Option<Vec<f64>> {
        coefficients_to_pacf(phi).map(|k| k.iter().map(|v| v.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh()).collect())
    };
    let to_phi = |u: &[f64]| pacf_to_coefficients(&u.iter().map(|v| v.tanh()).collect::<Vec<_>>());
    let cost = |u: &[f64]| exact_profile(&to_phi(u), moments, regressors).map_or(f64::INFINITY, |(v, _)| -v);
    let mut start = vec![0.0; p];
    let mut best = cost(&start);
    for s in starts.iter().filter(|s| s.order() == p) {
        if let Some(u) = to_u(&s.coefficients) {
            let c = cost(&u);
            if c < best {
                best = c;
                start = u;
            }
        }
    }
    if !best.is_finite() {
        return Err(ArError::Degenerate);
    }
    let u = nelder_mead(cost, &start, 0.05, 1e-10, 400 * (p + 1));
    exact_profile(&to_phi(&u), moments, regressors).map(|(_, proc)| proc).ok_or(ArError::Degenerate)
}

/// Solve symmetric normal equations, reporting rank deficiency of the
/// correlation-scaled Gram matrix.
fn solve_normal_equations(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let k = gram.nrows();
    let scale: Vec<f64> = (0..k).map(|i| gram[(i, i)]).collect();
    if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] / (scale[i] * scale[j]).sqrt());
    let (vals, _) = sorted_symmetric_eigen(&scaled);
    if vals[0] <= 1e-12 * vals[k - 1] {
        return None;
    }
    let rhs_scaled = DVector::from_fn(k, |i, _| rhs[i] / scale[i].sqrt());
    let sol = scaled.cholesky()?.solve(&rhs_scaled);
    Some(DVector::from_fn(k, |i, _| sol[i] / scale[i].sqrt()))
}

fn check_length(n: usize, p: usize) -> Result<(), ArError> {
    if p == 0 {
        return Err(ArError::ZeroOrder);
    }
    if n <= p + 2 {
        return Err(ArError::TooShort { n, p });
    }
    Ok(())
}

/// Conditional least squares on the expected normal equations: regress
/// `x_i` on `[1, x_{i−1}, …, x_{i−p}]` for `i > p`, innovation variance
/// `E[RSS] / (n − p)`.
pub fn fit_ols_moments(moments: SeriesMoments<'_>, p: usize) -> Result<ArProcess, ArError> {
    let n = moments.len();
    check_length(n, p)?;
    if moments.mean.iter().any(|x| !x.is_finite()) {
        return Err(ArError::NonFinite);
    }
    let k = p + 1;
    let mut gram = DMatrix::zeros(k, k);
    let mut cross = DVector::zeros(k);
    let mut yy = 0.0;
    for i in p..n {
        let lag = |c: usize| if c == 0 { None } else { Some(i - c) };
        for a in 0..k {
            for b in a..k {
                let v = match (lag(a), lag(b)) {
                    (None, None) => 1.0,
                    (None, Some(j)) | (Some(j), None) => moments.mean[j],
                    (Some(ja), Some(jb)) => moments.product(ja, jb),
                };
                gram[(a, b)] += v;
            }
            cross[a] += match lag(a) {
                None => moments.mean[i],
                Some(j) => moments.product(i, j),
            };
        }
        yy += moments.product(i, i);
    }
    for a in 0..k {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let theta = solve_normal_equations(&gram, &cross).ok_or(ArError::Degenerate)?;
    let rss = yy - 2.0 * theta.dot(&cross) + (theta.transpose() * &gram * &theta)[(0, 0)];
    let var = (rss / (n - p) as f64).max(MIN_VARIANCE);
    Ok(ArProcess::new(theta.iter().skip(1).copied().collect(), theta[0], var))
}

/// Conditional MLE (= OLS) of an intercept-form AR(p).
pub fn fit_ols(series: &[f64], p: usize) -> Result<ArProcess, ArError> {
    fit_ols_moments(SeriesMoments::observed(series), p)
}

/// Feasible GLS for an AR(p) around a regression mean `A_i μ`, on expected
/// normal equations. Alternates GLS for `μ` given `φ` with least squares for
/// `φ` given `μ` until both move less than `1e−8`.
pub fn fit_fgls_moments(
    moments: SeriesMoments<'_>,
    regressors: &RegressorPanel,
    p: usize,
) -> Result<ArProcess, ArError> {
    let n = moments.len();
    check_length(n, p)?;
    if regressors.len() != n {
        return Err(ArError::Dimension { expected: n, found: regressors.len() });
    }
    let d = regressors.dim();
    let a = &regressors.rows;
    let x = moments.mean;

    // Start from the OLS regression mean, ignoring serial correlation.
    let ata = a.transpose() * a;
    let atx = a.transpose() * DVector::from_column_slice(x);
    let mut mu = solve_normal_equations(&ata, &atx).ok_or(ArError::RegressorRank)?;
    let mut phi = DVector::<f64>::zeros(p);

    let phi_given_mu = |mu: &DVector<f64>| -> Result<DVector<f64>, ArError> {
        let fitted: Vec<f64> = (0..n).map(|i| (0..d).map(|c| a[(i, c)] * mu[c]).sum()).collect();
        let e = |i: usize, j: usize| {
            let c = moments.cov.map_or(0.0, |c| c[(i, j)]);
            (x[i] - fitted[i]) * (x[j] - fitted[j]) + c
        };
        let mut gram = DMatrix::zeros(p, p);
        let mut cross = DVector::zeros(p);
        for i in p..n {
            for r in 1..=p {
                cross[r - 1] += e(i, i - r);
                for s in 1..=p {
                    gram[(r - 1, s - 1)] += e(i - r, i - s);
                }
            }
        }
        solve_normal_equations(&gram, &cross).ok_or(ArError::Degenerate)
    };

    let transformed = |phi: &DVector<f64>| -> (DMatrix<f64>, DVector<f64>) {
        let rows = n - p;
        let mut at = DMatrix::zeros(rows, d);
        let mut yt = DVector::zeros(rows);
        for i in p..n {
            yt[i - p] = x[i] - (1..=p).map(|r| phi[r - 1] * x[i - r]).sum::<f64>();
            for c in 0..d {
                at[(i - p, c)] = a[(i, c)] - (1..=p).map(|r| phi[r - 1] * a[(i - r, c)]).sum::<f64>();
            }
        }
        (at, yt)
    };

    let build = |mu: &DVector<f64>, phi: &DVector<f64>| -> ArProcess {
        // E[Σ (ỹ_i − Ã_i μ)²] including the latent covariance contribution.
        let mut rss = 0.0;
        for i in p..n {
            let mut w = vec![0.0; p + 1];
            w[0] = 1.0;
            for r in 1..=p {
                w[r] = -phi[r - 1];
            }
            let mean_part = (0..=p)
                .map(|r| w[r] * (x[i - r] - (0..d).map(|c| a[(i - r, c)] * mu[c]).sum::<f64>()))
                .sum::<f64>();
            let mut var_part = 0.0;
            if let Some(cov) = moments.cov {
                for r in 0..=p {
                    for s in 0..=p {
                        var_part += w[r] * w[s] * cov[(i - r, i - s)];
                    }
                }
            }
            rss += mean_part * mean_part + var_part;
        }
        ArProcess {
            coefficients: phi.iter().copied().collect(),
            intercept: 0.0,
            innovation_variance: (rss / (n - p) as f64).max(MIN_VARIANCE),
            regressor_coefficients: Some(mu.iter().copied().collect()),
        }
    };

    for _ in 0..FGLS_MAX_ITERATIONS {
        let new_phi = phi_given_mu(&mu)?;
        let (at, yt) = transformed(&new_phi);
        let new_mu = solve_normal_equations(&(at.transpose() * &at), &(at.transpose() * yt))
            .ok_or(ArError::RegressorRank)?;
        let change = (&new_phi - &phi).amax().max((&new_mu - &mu).amax());
        phi = new_phi;
        mu = new_mu;
        if change < FGLS_TOLERANCE {
            return Ok(build(&mu, &phi));
        }
    }
    Err(ArError::NonConvergence {
        iterations: FGLS_MAX_ITERATIONS,
        last: Box::new(build(&mu, &phi)),
    })
}

/// Feasible GLS on an observed series.
pub fn fit_fgls(series: &[f64], regressors: &RegressorPanel, p: usize) -> Result<ArProcess, ArError> {
    fit_fgls_moments(SeriesMoments::observed(series), regressors, p)
}
