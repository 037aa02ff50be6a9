//! Comparator models: two-step dynamic Nelson–Siegel and the random walk.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::artime::{self, ArError, ArProcess};
use crate::doc::{DocError, KeyedDocument};
use crate::fdfm::CurvePanel;
use crate::spline::{KnotGrid, SplineError};

/// Decay parameter per month.
pub const DEFAULT_ALPHA: f64 = 0.0609;

#[derive(Error, Debug, Clone)]
pub enum BaselineError {
    #[error("maturity {0} is not positive")]
    Domain(f64),
    #[error("decay parameter {0} is not positive")]
    Alpha(f64),
    #[error("Nelson–Siegel design on this grid is rank deficient")]
    Rank,
    #[error("DNS factor {factor}: {source}")]
    Ar { factor: usize, source: ArError },
    #[error("forecast horizon must be at least 1")]
    Horizon,
    #[error("maturity index {index} out of range for {m} maturities")]
    Index { index: usize, m: usize },
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("model document: {0}")]
    Document(String),
}

impl From<DocError> for BaselineError {
    fn from(e: DocError) -> Self {
        BaselineError::Document(e.to_string())
    }
}

/// Level, slope and curvature loadings `(1, f2(t), f3(t))` with
/// `f2 = (1 − e^{−αt})/(αt)` and `f3 = f2(t) − e^{−αt}`.
pub fn dns_loadings(t: f64, alpha: f64) -> Result<[f64; 3], BaselineError> {
    if !(t > 0.0) {
        return Err(BaselineError::Domain(t));
    }
    if !(alpha > 0.0) {
        return Err(BaselineError::Alpha(alpha));
    }
    let x = alpha * t;
    let f2 = -(-x).exp_m1() / x;
    Ok([1.0, f2, f2 - (-x).exp()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnsModel {
    pub alpha: f64,
    pub grid: KnotGrid,
    /// n×3 cross-sectional OLS scores.
    pub factor_series: DMatrix<f64>,
    pub ar: Vec<ArProcess>,
}

fn design(maturities: &[f64], alpha: f64) -> Result<DMatrix<f64>, BaselineError> {
    let rows = maturities.iter().map(|&t| dns_loadings(t, alpha)).collect::<Result<Vec<_>, _>>()?;
    Ok(DMatrix::from_fn(rows.len(), 3, |j, c| rows[j][c]))
}

/// Two-step estimation: per-date OLS on the three loadings, then an AR(1)
/// per factor series.
pub fn dns_fit(panel: &CurvePanel, alpha: f64) -> Result<DnsModel, BaselineError> {
    let d = design(panel.maturities(), alpha)?;
    if d.nrows() < 3 {
        return Err(BaselineError::Rank);
    }
    let sv = d.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(BaselineError::Rank);
    }
    // B = X D (DᵀD)⁻¹ via the QR of D for accuracy
    let qr = d.clone().qr();
    let r_inv = qr.r().try_inverse().ok_or(BaselineError::Rank)?;
    let factor_series = panel.data() * qr.q() * r_inv.transpose();
    let ar = (0..3)
        .map(|k| {
            let series: Vec<f64> = factor_series.column(k).iter().copied().collect();
            artime::fit_ols(&series, 1).map_err(|source| BaselineError::Ar { factor: k, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DnsModel { alpha, grid: panel.grid().clone(), factor_series, ar })
}

impl DnsModel {
    pub fn factor_forecasts(&self, h: usize) -> Result<[f64; 3], BaselineError> {
        if h == 0 {
            return Err(BaselineError::Horizon);
        }
        let n = self.factor_series.nrows();
        let mut out = [0.0; 3];
        for (k, proc) in self.ar.iter().enumerate() {
            out[k] = proc.forecast(&[self.factor_series[(n - 1, k)]], h)[h - 1];
        }
        Ok(out)
    }

    /// In-sample curve values at maturity `t` for every date.
    pub fn synthesize(&self, t: f64) -> Result<Vec<f64>, BaselineError> {
        let l = dns_loadings(t, self.alpha)?;
        Ok((0..self.factor_series.nrows())
            .map(|i| (0..3).map(|k| self.factor_series[(i, k)] * l[k]).sum())
            .collect())
    }
}

pub fn dns_forecast(model: &DnsModel, h: usize, eval_points: &[f64]) -> Result<Vec<f64>, BaselineError> {
    let b = model.factor_forecasts(h)?;
    eval_points
        .iter()
        .map(|&t| Ok(dns_loadings(t, model.alpha)?.iter().zip(&b).map(|(l, v)| l * v).sum()))
        .collect()
}

/// `x̂_{n+h|n}(t_j) = x_n(t_j)` for every horizon.
pub fn rw_forecast(panel: &CurvePanel, h: usize, j: usize) -> Result<f64, BaselineError> {
    if h == 0 {
        return Err(BaselineError::Horizon);
    }
    if j >= panel.m() {
        return Err(BaselineError::Index { index: j, m: panel.m() });
    }
    Ok(panel.data()[(panel.n() - 1, j)])
}

/// Piecewise-linear interpolation of knot values, held flat beyond the ends.
pub fn linear_interpolate(knots: &[f64], values: &[f64], t: f64) -> f64 {
    let m = knots.len();
    if t <= knots[0] {
        return values[0];
    }
    if t >= knots[m - 1] {
        return values[m - 1];
    }
    let j = knots.partition_point(|&k| k <= t) - 1;
    let w = (t - knots[j]) / (knots[j + 1] - knots[j]);
    (1.0 - w) * values[j] + w * values[j + 1]
}

/// Random-walk forecast: the last observed curve, linearly interpolated
/// between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalk {
    pub maturities: Vec<f64>,
    pub last: Vec<f64>,
}

impl RandomWalk {
    pub fn fit(panel: &CurvePanel) -> Self {
        Self { maturities: panel.maturities().to_vec(), last: panel.row(panel.n() - 1) }
    }

    pub fn forecast(&self, h: usize, eval_points: &[f64]) -> Result<Vec<f64>, BaselineError> {
        if h == 0 {
            return Err(BaselineError::Horizon);
        }
        Ok(eval_points.iter().map(|&t| linear_interpolate(&self.maturities, &self.last, t)).collect())
    }
}

const DNS_FORMAT: &str = "dns-model-1";

pub fn dns_to_string(model: &DnsModel) -> String {
    let mut doc = KeyedDocument::new();
    doc.push_str("format", DNS_FORMAT);
    doc.push_float("alpha", model.alpha);
    doc.push_floats("knots", model.grid.knots());
    for (k, proc) in model.ar.iter().enumerate() {
        doc.push_floats(&format!("factor.{k}.coefficients"), &proc.coefficients);
        doc.push_float(&format!("factor.{k}.intercept"), proc.intercept);
        doc.push_float(&format!("factor.{k}.innovation_variance"), proc.innovation_variance);
    }
    doc.push_display("scores.rows", model.factor_series.nrows());
    for i in 0..model.factor_series.nrows() {
        let row: Vec<f64> = model.factor_series.row(i).iter().copied().collect();
        doc.push_floats(&format!("scores.{i}"), &row);
    }
    doc.render("dynamic Nelson–Siegel model")
}

pub fn dns_from_str(text: &str) -> Result<DnsModel, BaselineError> {
    let doc = KeyedDocument::parse(text)?;
    let format: String = doc.value("format")?;
    if format != DNS_FORMAT {
        return Err(BaselineError::Document(format!("unsupported format `{format}`")));
    }
    let ar = (0..3)
        .map(|k| {
            Ok(ArProcess::new(
                doc.values_n(&format!("factor.{k}.coefficients"), 1)?,
                doc.value(&format!("factor.{k}.intercept"))?,
                doc.value(&format!("factor.{k}.innovation_variance"))?,
            ))
        })
        .collect::<Result<Vec<_>, BaselineError>>()?;
    let n: usize = doc.value("scores.rows")?;
    let mut factor_series = DMatrix::zeros(n, 3);
    for i in 0..n {
        let row: Vec<f64> = doc.values_n(&format!("scores.{i}"), 3)?;
        for k in 0..3 {
            factor_series[(i, k)] = row[k];
        }
    }
    Ok(DnsModel { alpha: doc.value("alpha")?, grid: KnotGrid::new(doc.values("knots")?)?, factor_series, ar })
}
