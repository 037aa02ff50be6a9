use super::{FdfmError, FdfmModel};
use crate::artime::RegressorPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveForecast {
    pub maturities: Vec<f64>,
    pub values: Vec<f64>,
    /// True where the maturity lies outside the knot range (linear extrapolation).
    pub extrapolated: Vec<bool>,
    /// `β̂_{n+h|n,k}` per factor.
    pub scores: Vec<f64>,
}

/// `h`-step factor score forecasts from the last `p` posterior-mean scores.
/// Models with regressors need the regressor rows of periods `n+1..=n+h`.
pub fn forecast_scores(
    model: &FdfmModel,
    h: usize,
    future_regressors: Option<&RegressorPanel>,
) -> Result<Vec<f64>, FdfmError> {
    if h == 0 {
        return Err(FdfmError::Config("forecast horizon must be at least 1".into()));
    }
    let n = model.scores.nrows();
    (0..model.k())
        .map(|k| {
            let proc = &model.factors[k];
            let history: Vec<f64> = model.scores.column(k).iter().copied().collect();
            let path = match (&proc.regressor_coefficients, &model.regressors) {
                (Some(_), Some(regs)) => {
                    let future = future_regressors.ok_or(FdfmError::RegressorsRequired)?;
                    if future.len() < h || future.dim() != regs.dim() {
                        return Err(FdfmError::Config(format!(
                            "need {h} future regressor rows of width {}",
                            regs.dim()
                        )));
                    }
                    let p = proc.order();
                    proc.forecast_with_regressors(&history, &regs.rows.rows(n - p, p).into_owned(), &future.slice(0, h).rows)
                }
                _ => proc.forecast(&history, h),
            };
            Ok(path[h - 1])
        })
        .collect()
}

/// `x̂_{n+h|n}(t) = Σ_k β̂_{n+h|n,k} f̂_k(t)` at arbitrary maturities.
pub fn forecast_curve(
    model: &FdfmModel,
    h: usize,
    eval_points: &[f64],
    future_regressors: Option<&RegressorPanel>,
) -> Result<CurveForecast, FdfmError> {
    let scores = forecast_scores(model, h, future_regressors)?;
    let values = eval_points
        .iter()
        .map(|&t| scores.iter().zip(&model.loadings).map(|(b, f)| b * f.evaluate(t)).sum())
        .collect();
    Ok(CurveForecast {
        maturities: eval_points.to_vec(),
        values,
        extrapolated: eval_points.iter().map(|&t| model.grid.is_extrapolation(t)).collect(),
        scores,
    })
}

/// The in-sample series `Σ_k b_ik f̂_k(t)` at maturity `t`, with a flag that
/// is true when `t` is outside the knot range.
pub fn synthesize_series(model: &FdfmModel, t: f64) -> (Vec<f64>, bool) {
    let f: Vec<f64> = model.loadings.iter().map(|l| l.evaluate(t)).collect();
    let series = (0..model.scores.nrows())
        .map(|i| (0..model.k()).map(|k| model.scores[(i, k)] * f[k]).sum())
        .collect();
    (series, model.grid.is_extrapolation(t))
}
