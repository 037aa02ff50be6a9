use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use super::estep::e_step;
use super::mstep::{
    constrained_loading_pass, loading_objective, m_step_ar, select_lambda, update_sigma2, LoadingProblem,
    DEGENERATE_SCORE_NORM, SHRINK_RADIUS,
};
use super::ortho::{canonical_form, column_variances, LOADING_RANK_TOL};
use super::{CurvePanel, FdfmConfig, FdfmError, FdfmModel, FdfmParams, InnerProduct, PosteriorMoments};
use crate::artime::{self, ArProcess, RegressorPanel, MIN_VARIANCE};
use crate::linalg::inv_sqrt_spd;
use crate::spline::{build_penalty, complete_spline, PenaltyOperator};

/// Step 0: the rank-K truncated SVD `X ≈ B₀F₀` with `B₀ = U_K S_K` and
/// `F₀ = V_Kᵀ`.
pub fn initialize_svd(panel: &CurvePanel, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>), FdfmError> {
    let x = panel.data();
    let (n, m) = (x.nrows(), x.ncols());
    if k == 0 || k > n.min(m) {
        return Err(FdfmError::Config(format!("cannot extract {k} factors from a {n}×{m} panel")));
    }
    let svd = x.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("left vectors requested"), svd.v_t.expect("right vectors requested"));
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let smax = s[order[0]];
    let floor = n.max(m) as f64 * f64::EPSILON * smax;
    let rank = order.iter().filter(|&&i| s[i] > floor).count();
    if k > rank {
        return Err(FdfmError::RankDeficient { requested: k, rank });
    }
    let b0 = DMatrix::from_fn(n, k, |i, c| u[(i, order[c])] * s[order[c]]);
    let f0 = DMatrix::from_fn(k, m, |c, j| vt[(order[c], j)]);
    Ok((b0, f0))
}

fn ar_from_series(series: &[f64], k: usize, p: usize, regressors: Option<&RegressorPanel>) -> Result<ArProcess, FdfmError> {
    let fitted = match regressors {
        Some(r) => match artime::fit_fgls(series, r, p) {
            Err(artime::ArError::NonConvergence { last, .. }) => Ok(*last),
            other => other,
        },
        None => artime::fit_ols(series, p),
    }
    .map_err(|source| FdfmError::Ar { factor: k, source })?;
    Ok(if fitted.is_stationary() { fitted } else { fitted.shrink_to_radius(SHRINK_RADIUS) })
}

fn negate_process(proc: &ArProcess) -> ArProcess {
    ArProcess {
        intercept: -proc.intercept,
        regressor_coefficients: proc.regressor_coefficients.as_ref().map(|mu| mu.iter().map(|v| -v).collect()),
        ..proc.clone()
    }
}

/// Relabels factors by `order` and applies `signs`; the model is unchanged.
fn relabel(params: &FdfmParams, order: &[usize], signs: &[f64]) -> FdfmParams {
    let m = params.loadings.ncols();
    FdfmParams {
        loadings: DMatrix::from_fn(order.len(), m, |c, j| signs[c] * params.loadings[(order[c], j)]),
        factors: order
            .iter()
            .zip(signs)
            .map(|(&k, &s)| if s < 0.0 { negate_process(&params.factors[k]) } else { params.factors[k].clone() })
            .collect(),
        sigma2: params.sigma2,
        lambdas: order.iter().map(|&k| params.lambdas[k]).collect(),
    }
}

fn canonicalize(params: &mut FdfmParams, posterior: &mut PosteriorMoments) {
    let (order, signs) = canonical_form(&params.loadings, &column_variances(&posterior.means));
    *params = relabel(params, &order, &signs);
    posterior.permute(&order);
    for (c, s) in signs.iter().enumerate() {
        if *s < 0.0 {
            posterior.negate(c);
        }
    }
}

fn roughness_penalty(params: &FdfmParams, penalty: &PenaltyOperator) -> f64 {
    (0..params.k())
        .map(|k| 0.5 * params.lambdas[k] * penalty.quadratic_form(&params.loading(k)))
        .sum()
}

/// One M-step given the posterior under `params`.
fn m_step(
    params: &FdfmParams,
    posterior: &PosteriorMoments,
    panel: &CurvePanel,
    penalty: &PenaltyOperator,
    config: &FdfmConfig,
) -> Result<FdfmParams, FdfmError> {
    let kc = params.k();
    let regressors = config.regressors.as_ref();
    let frozen: Vec<bool> = (0..kc).map(|k| posterior.expected_sq_norm(k) < DEGENERATE_SCORE_NORM).collect();
    for k in (0..kc).filter(|&k| frozen[k]) {
        warn!("factor {k}: posterior score norm is negligible; frozen this iteration");
    }

    // sequential ridge updates, each using the latest loadings of the others
    let mut lambdas = params.lambdas.clone();
    let mut ridge = params.loadings.clone();
    for k in 0..kc {
        if frozen[k] {
            continue;
        }
        let problem = LoadingProblem::new(k, panel, posterior, &ridge, params.sigma2, penalty);
        if config.selects_lambda() {
            lambdas[k] = select_lambda(&problem, &config.lambda_grid)?.0;
        }
        ridge.set_row(k, &problem.solve(lambdas[k]).transpose());
    }

    let xtm = panel.data().transpose() * &posterior.means;
    let objective = |f: &DMatrix<f64>| loading_objective(f, &xtm, &lambdas, params.sigma2, penalty);
    let base = objective(&params.loadings);
    let lowdin = inv_sqrt_spd(&(&ridge * ridge.transpose()), LOADING_RANK_TOL).map(|(r, _)| r * &ridge);
    let loadings = match lowdin {
        Some(f) if objective(&f) >= base => f,
        _ => {
            debug!("orthonormalized ridge step rejected; constrained coordinate ascent");
            constrained_loading_pass(&params.loadings, &xtm, &lambdas, params.sigma2, penalty, &frozen)
        }
    };

    let sigma2 = update_sigma2(panel, posterior, &loadings);
    let factors = m_step_ar(posterior, &params.factors, config.ar_order, regressors, &frozen)?;
    Ok(FdfmParams { loadings, factors, sigma2, lambdas })
}

/// Estimates the model by penalized-likelihood EM from the SVD start.
pub fn fit(panel: &CurvePanel, config: &FdfmConfig) -> Result<FdfmModel, FdfmError> {
    config.validate(panel)?;
    let (kc, p) = (config.factors, config.ar_order);
    let penalty = build_penalty(panel.grid());
    let regressors = config.regressors.as_ref();

    let (b0, f0) = initialize_svd(panel, kc)?;
    let resid = panel.data() - &b0 * &f0;
    let sigma2 = (resid.norm_squared() / (panel.n() * panel.m()) as f64).max(MIN_VARIANCE);
    let factors = (0..kc)
        .map(|k| ar_from_series(b0.column(k).as_slice(), k, p, regressors))
        .collect::<Result<Vec<_>, _>>()?;
    let lambdas = match &config.fixed_lambdas {
        Some(l) => l.clone(),
        None => vec![config.lambda_grid[config.lambda_grid.len() / 2]; kc],
    };
    let mut params = FdfmParams { loadings: f0, factors, sigma2, lambdas };
    let mut posterior = e_step(&params, panel, regressors)?;
    let mut trace = vec![posterior.loglik - roughness_penalty(&params, &penalty)];

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let next = m_step(&params, &posterior, panel, &penalty, config)?;
        let next_posterior = e_step(&next, panel, regressors)?;
        trace.push(next_posterior.loglik - roughness_penalty(&next, &penalty));
        let change = next.max_relative_change(&params);
        params = next;
        posterior = next_posterior;
        debug!("EM iteration {iterations}: objective {:.10e}, change {change:.3e}", trace[trace.len() - 1]);
        if change < config.em_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("EM stopped after {iterations} iterations without meeting the tolerance");
    }
    canonicalize(&mut params, &mut posterior);

    let mut scores = posterior.means;
    if config.inner_product == InnerProduct::Quadrature {
        let (f, b, factors) = quadrature_reparametrize(panel, &params, &scores, p, regressors)?;
        params.loadings = f;
        params.factors = factors;
        scores = b;
    }

    let loadings = (0..kc)
        .map(|k| complete_spline(&params.loading(k), &penalty))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FdfmModel {
        grid: panel.grid().clone(),
        loadings,
        factors: params.factors,
        scores,
        sigma2: params.sigma2,
        lambdas: params.lambdas,
        fit_trace: trace,
        converged,
        iterations,
        inner_product: config.inner_product,
        regressors: config.regressors.clone(),
    })
}

/// Rotates to loadings orthonormal under trapezoid weights,
/// `F″ = (FWFᵀ)^{−1/2}F`, `B″ = B(FWFᵀ)^{1/2}`, and refits the AR processes
/// on the rotated scores.
fn quadrature_reparametrize(
    panel: &CurvePanel,
    params: &FdfmParams,
    scores: &DMatrix<f64>,
    p: usize,
    regressors: Option<&RegressorPanel>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<ArProcess>), FdfmError> {
    let w = DMatrix::from_diagonal(&DVector::from_vec(panel.grid().trapezoid_weights()));
    let gram = &params.loadings * w * params.loadings.transpose();
    let (inv_root, root) = inv_sqrt_spd(&gram, LOADING_RANK_TOL).ok_or(FdfmError::DegenerateLoadings)?;
    let f = inv_root * &params.loadings;
    let b = scores * root;
    let factors = (0..f.nrows())
        .map(|k| ar_from_series(b.column(k).as_slice(), k, p, regressors))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((f, b, factors))
}

/// Observed-data log-likelihood of the panel minus `½ Σ λ_k f_kᵀΩf_k`;
/// the quantity the EM iterations increase.
pub fn penalized_loglik(model: &FdfmModel, panel: &CurvePanel) -> Result<f64, FdfmError> {
    let params = model.params();
    let penalty = build_penalty(panel.grid());
    let posterior = e_step(&params, panel, model.regressors.as_ref())?;
    Ok(posterior.loglik - roughness_penalty(&params, &penalty))
}

/// Plug-in penalized log-likelihood with the scores fixed at their posterior
/// means: conditional AR log-likelihood of each score series, plus the
/// Gaussian log-likelihood of `X` given the scores, minus `½ Σ λ_k f_kᵀΩf_k`.
pub fn plugin_penalized_loglik(model: &FdfmModel, panel: &CurvePanel) -> f64 {
    let params = model.params();
    let penalty = build_penalty(panel.grid());
    let n = panel.n();
    let mut total = 0.0;
    for (k, proc) in model.factors.iter().enumerate() {
        let mean = proc.mean_path(n, model.regressors.as_ref());
        let dev: Vec<f64> = (0..n).map(|i| model.scores[(i, k)] - mean[i]).collect();
        let centred = ArProcess { intercept: 0.0, regressor_coefficients: None, ..proc.clone() };
        total += centred.conditional_loglik(&dev);
    }
    let resid = panel.data() - model.fitted();
    let nm = (n * panel.m()) as f64;
    total -= 0.5 * (nm * (2.0 * std::f64::consts::PI * model.sigma2).ln() + resid.norm_squared() / model.sigma2);
    total - roughness_penalty(&params, &penalty)
}
