//! Yield panel CSV ingestion and the TOML run configuration.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::fdfm::{log_spaced, CurvePanel, FdfmConfig, InnerProduct};
use crate::spline::KnotGrid;

#[derive(Error, Debug)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema { line: u64, column: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Panel(#[from] crate::fdfm::FdfmError),
}

/// How yields are held in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnitMode {
    /// Annualized percent, as stored on disk. Used for error metrics.
    #[default]
    Percent,
    /// Continuously compounded per-month decimals (`percent / 1200`). Used
    /// for bond pricing.
    MonthlyDecimal,
}

impl UnitMode {
    pub fn factor(self) -> f64 {
        match self {
            UnitMode::Percent => 1.0,
            UnitMode::MonthlyDecimal => 1.0 / 1200.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            UnitMode::Percent => "percent_annual",
            UnitMode::MonthlyDecimal => "decimal_monthly",
        }
    }
}

fn is_month(s: &str) -> bool {
    let b = s.as_bytes();
    let digits = |r: std::ops::Range<usize>| r.clone().all(|i| b[i].is_ascii_digit());
    let ym = b.len() >= 7 && digits(0..4) && b[4] == b'-' && digits(5..7);
    ym && (b.len() == 7 || (b.len() == 10 && b[7] == b'-' && digits(8..10)))
}

/// Parse a panel from CSV text: header `date,<maturity>,...`, one row per
/// month, yields in annualized percent.
pub fn parse_panel(text: &str, unit: UnitMode) -> Result<CurvePanel, IoError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let schema = |line: u64, column: usize, message: String| IoError::Schema { line, column, message };
    if header.is_empty() || !header[0].eq_ignore_ascii_case("date") {
        return Err(schema(1, 1, "first header field must be `date`".into()));
    }
    let mut maturities = Vec::with_capacity(header.len() - 1);
    for (c, field) in header.iter().enumerate().skip(1) {
        let t: f64 = field.parse().map_err(|_| schema(1, c + 1, format!("maturity `{field}` is not a number")))?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(schema(1, c + 1, format!("maturity {t} must be positive")));
        }
        if let Some(&prev) = maturities.last() {
            if t <= prev {
                return Err(schema(1, c + 1, format!("maturity {t} does not increase on {prev}")));
            }
        }
        maturities.push(t);
    }
    if maturities.is_empty() {
        return Err(schema(1, 2, "no maturity columns".into()));
    }
    let m = maturities.len();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != m + 1 {
            return Err(schema(line, record.len().min(m + 1), format!("expected {} fields, found {}", m + 1, record.len())));
        }
        if !is_month(&record[0]) {
            return Err(schema(line, 1, format!("date `{}` is not YYYY-MM", &record[0])));
        }
        dates.push(record[0].to_string());
        for c in 1..=m {
            let cell = &record[c];
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| schema(line, c + 1, format!("yield `{cell}` is missing or not a number")))?;
            values.push(v * unit.factor());
        }
    }
    if dates.is_empty() {
        return Err(schema(2, 1, "no data rows".into()));
    }
    let data = DMatrix::from_row_slice(dates.len(), m, &values);
    Ok(CurvePanel::new(data, KnotGrid::new(maturities).map_err(crate::fdfm::FdfmError::from)?, Some(dates))?)
}

pub fn load_panel(path: &Path, unit: UnitMode) -> Result<CurvePanel, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    parse_panel(&text, unit)
}

/// Render a panel held in `unit` back to the on-disk percent schema with 17
/// significant digits. Rows without dates are labelled from 2000-01.
pub fn panel_to_csv(panel: &CurvePanel, unit: UnitMode) -> String {
    let mut out = String::from("date");
    for t in panel.maturities() {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    let scale = 1.0 / unit.factor();
    for i in 0..panel.n() {
        match panel.dates() {
            Some(d) => out.push_str(&d[i]),
            None => {
                let _ = write!(out, "{:04}-{:02}", 2000 + i / 12, i % 12 + 1);
            }
        }
        for j in 0..panel.m() {
            let _ = write!(out, ",{:.16e}", panel.data()[(i, j)] * scale);
        }
        out.push('\n');
    }
    out
}

/// Run configuration. Every section is optional; unknown keys are errors.
#[derive(Debug, Clone, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub data: Option<String>,
    pub out_dir: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub fdfm: FdfmSection,
    #[serde(default)]
    pub dns: DnsSection,
    #[serde(default)]
    pub rolling: RollingSection,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub trading: TradingSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FdfmSection {
    pub factors: usize,
    pub ar_order: usize,
    pub em_tolerance: f64,
    pub max_iterations: usize,
    pub gcv: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_points: usize,
    pub fixed_lambdas: Option<Vec<f64>>,
    pub inner_product: String,
}

impl Default for FdfmSection {
    fn default() -> Self {
        let d = FdfmConfig::default();
        Self {
            factors: d.factors,
            ar_order: d.ar_order,
            em_tolerance: d.em_tolerance,
            max_iterations: d.max_iterations,
            gcv: d.gcv_enabled,
            lambda_min: 1e-4,
            lambda_max: 1e6,
            lambda_points: 25,
            fixed_lambdas: None,
            inner_product: "discrete".into(),
        }
    }
}

impl FdfmSection {
    pub fn to_config(&self) -> Result<FdfmConfig, IoError> {
        let inner_product = match self.inner_product.as_str() {
            "discrete" => InnerProduct::Discrete,
            "quadrature" => InnerProduct::Quadrature,
            other => return Err(IoError::Config(format!("inner_product `{other}` is not discrete|quadrature"))),
        };
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min && self.lambda_points >= 1) {
            return Err(IoError::Config("lambda grid needs 0 < lambda_min <= lambda_max and lambda_points >= 1".into()));
        }
        let mut config = FdfmConfig {
            factors: self.factors,
            ar_order: self.ar_order,
            lambda_grid: log_spaced(self.lambda_min, self.lambda_max, self.lambda_points),
            em_tolerance: self.em_tolerance,
            max_iterations: self.max_iterations,
            gcv_enabled: self.gcv,
            fixed_lambdas: None,
            regressors: None,
            inner_product,
        };
        if let Some(l) = &self.fixed_lambdas {
            config = config.with_fixed_lambdas(l.clone());
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DnsSection {
    pub alpha: f64,
}

impl Default for DnsSection {
    fn default() -> Self {
        Self { alpha: crate::baselines::DEFAULT_ALPHA }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RollingSection {
    pub window: usize,
    pub horizons: Vec<usize>,
    /// Negative disables the filter.
    pub min_maturity: f64,
}

impl Default for RollingSection {
    fn default() -> Self {
        Self { window: 108, horizons: vec![1, 6, 12], min_maturity: 3.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub deleted: Vec<usize>,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self { deleted: vec![1] }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TradingSection {
    pub algorithm: u8,
    pub stake: f64,
    pub window: usize,
    pub t1: f64,
    /// `log` or `simple`.
    pub accounting: String,
    /// Inclusive row range of the weight window for the weighted-pairs
    /// strategy; defaults to the 1985-01..1993-12 span or the first window.
    pub weight_rows: Option<[usize; 2]>,
}

impl Default for TradingSection {
    fn default() -> Self {
        Self {
            algorithm: 1,
            stake: crate::trading::DEFAULT_STAKE,
            window: 108,
            t1: 12.0,
            accounting: "log".into(),
            weight_rows: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub factors: usize,
    pub n: usize,
    pub m: usize,
    pub phi: Vec<f64>,
    pub sigma: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { factors: 2, n: 300, m: 20, phi: vec![0.8, 0.5], sigma: 0.1 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Config(e.to_string().replace('\n', " ").trim().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }
}
