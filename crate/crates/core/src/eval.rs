//! Rolling-window forecast evaluation and the column-deletion synthesis study.
//!
//! Both loops only see models through [`ModelFactory`] and [`CurveModel`], so
//! the random walk, DNS and FDFM run through identical code.

use std::fmt::Write as _;

use thiserror::Error;

use crate::fdfm::CurvePanel;
use crate::models::{ModelError, ModelFactory};
use crate::par;

#[derive(Error, Debug, Clone)]
pub enum EvalError {
    #[error("need at least {needed} rows for window {window} and horizon {horizon}, have {n}")]
    Window { needed: usize, window: usize, horizon: usize, n: usize },
    #[error("invalid evaluation spec: {0}")]
    Spec(String),
    #[error("synthesis study infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Panel(#[from] crate::fdfm::FdfmError),
}

/// Mean forecast error, root mean squared forecast error and mean absolute
/// percentage error (in percent). MAPE is `None` when any actual is zero.
pub fn metrics(errors: &[f64], actuals: &[f64]) -> (f64, f64, Option<f64>) {
    assert_eq!(errors.len(), actuals.len(), "errors and actuals differ in length");
    let r = errors.len() as f64;
    let mfe = errors.iter().sum::<f64>() / r;
    let rmsfe = (errors.iter().map(|e| e * e).sum::<f64>() / r).sqrt();
    let mape = if actuals.iter().any(|&a| a == 0.0) {
        None
    } else {
        Some(100.0 * errors.iter().zip(actuals).map(|(e, a)| (e / a).abs()).sum::<f64>() / r)
    };
    (mfe, rmsfe, mape)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingSpec {
    pub window: usize,
    pub horizons: Vec<usize>,
    /// Columns with maturity below this are dropped before fitting.
    pub min_maturity: Option<f64>,
}

impl Default for RollingSpec {
    fn default() -> Self {
        Self { window: 108, horizons: vec![1, 6, 12], min_maturity: Some(3.0) }
    }
}

impl RollingSpec {
    /// Number of forecasts `r = n − window − h + 1` for horizon `h`.
    pub fn forecast_count(&self, n: usize, h: usize) -> usize {
        (n + 1).saturating_sub(self.window + h)
    }

    fn validate(&self, n: usize) -> Result<(), EvalError> {
        if self.window == 0 || self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(EvalError::Spec("window and horizons must be positive and non-empty".into()));
        }
        let hmax = *self.horizons.iter().max().unwrap();
        if n < self.window + hmax {
            return Err(EvalError::Window { needed: self.window + hmax, window: self.window, horizon: hmax, n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub horizon: usize,
    pub maturity: f64,
    pub count: usize,
    pub mfe: f64,
    pub rmsfe: f64,
    pub mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn find(&self, model: &str, horizon: usize, maturity: f64) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.model == model && r.horizon == horizon && r.maturity == maturity)
    }

    pub fn extend(&mut self, other: MetricTable) {
        self.rows.extend(other.rows);
    }

    /// CSV with `units` naming the yield unit of the error columns.
    pub fn to_csv(&self, units: &str) -> String {
        let mut out = format!("model,horizon,maturity_months,count,mfe_{units},rmsfe_{units},mape_percent\n");
        for r in &self.rows {
            let mape = r.mape.map(|v| format!("{v:.10}")).unwrap_or_else(|| "NA".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{:.10},{:.10},{}",
                r.model, r.horizon, r.maturity, r.count, r.mfe, r.rmsfe, mape
            );
        }
        out
    }
}

/// Fit on rows `[s, s + window)` for every start `s` and score the
/// `h`-step forecast against row `s + window + h − 1`.
pub fn rolling_forecast_eval(
    panel: &CurvePanel,
    factory: &dyn ModelFactory,
    spec: &RollingSpec,
) -> Result<MetricTable, EvalError> {
    spec.validate(panel.n())?;
    let panel = match spec.min_maturity {
        Some(t) => panel.filter_maturities(t)?,
        None => panel.clone(),
    };
    let (n, m) = (panel.n(), panel.m());
    let hmin = *spec.horizons.iter().min().unwrap();
    let starts = spec.forecast_count(n, hmin);
    let maturities = panel.maturities().to_vec();

    // per start: per horizon, the forecast curve (None past the panel end)
    let forecasts = par::map_range(starts, |s| -> Result<Vec<Option<Vec<f64>>>, ModelError> {
        let model = factory.fit(&panel.rows(s, s + spec.window))?;
        spec.horizons
            .iter()
            .map(|&h| {
                if s + spec.window + h - 1 < n {
                    model.forecast(h, &maturities).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect()
    });
    let forecasts = forecasts.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut table = MetricTable::default();
    for (hi, &h) in spec.horizons.iter().enumerate() {
        for j in 0..m {
            let mut errors = Vec::new();
            let mut actuals = Vec::new();
            for (s, per_h) in forecasts.iter().enumerate() {
                if let Some(curve) = &per_h[hi] {
                    let actual = panel.data()[(s + spec.window + h - 1, j)];
                    errors.push(actual - curve[j]);
                    actuals.push(actual);
                }
            }
            let (mfe, rmsfe, mape) = metrics(&errors, &actuals);
            table.rows.push(MetricRow {
                model: factory.name().to_string(),
                horizon: h,
                maturity: maturities[j],
                count: errors.len(),
                mfe,
                rmsfe,
                mape,
            });
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Short,
    Mid,
    Long,
}

impl Bucket {
    /// Short `[1.5, 21)`, mid `[21, 36]`, long `(36, 120]`.
    pub fn of(t: f64) -> Self {
        if t < 21.0 {
            Bucket::Short
        } else if t <= 36.0 {
            Bucket::Mid
        } else {
            Bucket::Long
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bucket::Short => "short",
            Bucket::Mid => "mid",
            Bucket::Long => "long",
        }
    }
}

/// One withheld column of one deletion window.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisCell {
    pub window: usize,
    pub maturity: f64,
    pub rmsfe: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub model: String,
    pub deleted: usize,
    pub cells: Vec<SynthesisCell>,
}

/// Bucket means of per-maturity averages: `[short, mid, long, overall]`.
pub type BucketSummary = [Option<f64>; 4];

impl SynthesisResult {
    /// Per maturity, the mean over deletion windows of the per-window RMSFE.
    /// Without extrapolation, windows where the maturity lies outside the
    /// retained knot range are skipped.
    pub fn per_maturity(&self, with_extrapolation: bool) -> Vec<(f64, f64)> {
        let mut mats: Vec<f64> = self.cells.iter().map(|c| c.maturity).collect();
        mats.sort_by(f64::total_cmp);
        mats.dedup();
        mats.into_iter()
            .filter_map(|t| {
                let vals: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.maturity == t && (with_extrapolation || !c.extrapolated))
                    .map(|c| c.rmsfe)
                    .collect();
                (!vals.is_empty()).then(|| (t, vals.iter().sum::<f64>() / vals.len() as f64))
            })
            .collect()
    }

    pub fn buckets(&self, with_extrapolation: bool) -> BucketSummary {
        let per = self.per_maturity(with_extrapolation);
        let mean = |sel: &dyn Fn(f64) -> bool| {
            let v: Vec<f64> = per.iter().filter(|(t, _)| sel(*t)).map(|(_, r)| *r).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        [
            mean(&|t| Bucket::of(t) == Bucket::Short),
            mean(&|t| Bucket::of(t) == Bucket::Mid),
            mean(&|t| Bucket::of(t) == Bucket::Long),
            mean(&|_| true),
        ]
    }
}

/// Delete each run of `deleted` consecutive columns in turn, refit on the
/// rest and synthesize the withheld series.
pub fn curve_synthesis_eval(
    panel: &CurvePanel,
    factory: &dyn ModelFactory,
    deleted: usize,
) -> Result<SynthesisResult, EvalError> {
    let m = panel.m();
    if !(1..=8).contains(&deleted) {
        return Err(EvalError::Infeasible(format!("deleted column count {deleted} outside 1..=8")));
    }
    if m < deleted + 3 {
        return Err(EvalError::Infeasible(format!("{m} maturities leave fewer than 3 after deleting {deleted}")));
    }
    let windows = m - deleted + 1;
    let knots = panel.maturities();
    let per_window = par::map_range(windows, |w| -> Result<Vec<SynthesisCell>, EvalError> {
        let keep: Vec<usize> = (0..m).filter(|j| *j < w || *j >= w + deleted).collect();
        let retained = panel.select_columns(&keep)?;
        let model = factory.fit(&retained)?;
        let (lo, hi) = (retained.grid().first(), retained.grid().last());
        (w..w + deleted)
            .map(|j| {
                let t = knots[j];
                let synth = model.synthesize(t)?;
                let mse = synth
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (panel.data()[(i, j)] - s).powi(2))
                    .sum::<f64>()
                    / panel.n() as f64;
                Ok(SynthesisCell { window: w, maturity: t, rmsfe: mse.sqrt(), extrapolated: t < lo || t > hi })
            })
            .collect()
    });
    let mut cells = Vec::new();
    for w in per_window {
        cells.extend(w?);
    }
    Ok(SynthesisResult { model: factory.name().to_string(), deleted, cells })
}

/// `numerator / denominator` per bucket.
pub fn ratio_summary(numerator: &SynthesisResult, denominator: &SynthesisResult, with_extrapolation: bool) -> BucketSummary {
    let (a, b) = (numerator.buckets(with_extrapolation), denominator.buckets(with_extrapolation));
    std::array::from_fn(|i| match (a[i], b[i]) {
        (Some(x), Some(y)) if y > 0.0 => Some(x / y),
        _ => None,
    })
}

/// Ratio table with one row per deleted-column count:
/// `deleted,variant,short,mid,long,overall`.
pub fn ratio_table_csv(pairs: &[(&SynthesisResult, &SynthesisResult)]) -> String {
    let mut out = String::from("deleted,variant,short,mid,long,overall\n");
    for (num, den) in pairs {
        for (with, label) in [(true, "with_extrapolation"), (false, "without_extrapolation")] {
            let r = ratio_summary(num, den, with);
            let cells: Vec<String> =
                r.iter().map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())).collect();
            let _ = writeln!(out, "{},{},{}", num.deleted, label, cells.join(","));
        }
    }
    out
}
