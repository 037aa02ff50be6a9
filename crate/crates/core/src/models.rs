//! A common interface so evaluation and backtests treat every model alike.

use thiserror::Error;

use crate::baselines::{self, BaselineError, DnsModel, RandomWalk};
use crate::fdfm::{self, CurvePanel, FdfmConfig, FdfmError, FdfmModel};

#[derive(Error, Debug, Clone)]
pub enum ModelError {
    #[error(transparent)]
    Fdfm(#[from] FdfmError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{model} does not support {operation}")]
    Unsupported { model: String, operation: &'static str },
}

/// A fitted curve model.
pub trait CurveModel: Send + Sync {
    /// `h`-step-ahead forecast of the curve at the given maturities.
    fn forecast(&self, h: usize, maturities: &[f64]) -> Result<Vec<f64>, ModelError>;
    /// In-sample series of the curve at maturity `t`.
    fn synthesize(&self, t: f64) -> Result<Vec<f64>, ModelError>;
}

/// Fits a model to a panel.
pub trait ModelFactory: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, panel: &CurvePanel) -> Result<Box<dyn CurveModel>, ModelError>;
}

impl CurveModel for FdfmModel {
    fn forecast(&self, h: usize, maturities: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(fdfm::forecast_curve(self, h, maturities, None)?.values)
    }

    fn synthesize(&self, t: f64) -> Result<Vec<f64>, ModelError> {
        Ok(fdfm::synthesize_series(self, t).0)
    }
}

impl CurveModel for DnsModel {
    fn forecast(&self, h: usize, maturities: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(baselines::dns_forecast(self, h, maturities)?)
    }

    fn synthesize(&self, t: f64) -> Result<Vec<f64>, ModelError> {
        Ok(DnsModel::synthesize(self, t)?)
    }
}

impl CurveModel for RandomWalk {
    fn forecast(&self, h: usize, maturities: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(RandomWalk::forecast(self, h, maturities)?)
    }

    fn synthesize(&self, _t: f64) -> Result<Vec<f64>, ModelError> {
        Err(ModelError::Unsupported { model: "rw".into(), operation: "curve synthesis" })
    }
}

#[derive(Debug, Clone)]
pub struct FdfmFactory {
    pub config: FdfmConfig,
}

impl ModelFactory for FdfmFactory {
    fn name(&self) -> &str {
        "fdfm"
    }

    fn fit(&self, panel: &CurvePanel) -> Result<Box<dyn CurveModel>, ModelError> {
        Ok(Box::new(fdfm::fit(panel, &self.config)?))
    }
}

#[derive(Debug, Clone)]
pub struct DnsFactory {
    pub alpha: f64,
}

impl Default for DnsFactory {
    fn default() -> Self {
        Self { alpha: baselines::DEFAULT_ALPHA }
    }
}

impl ModelFactory for DnsFactory {
    fn name(&self) -> &str {
        "dns"
    }

    fn fit(&self, panel: &CurvePanel) -> Result<Box<dyn CurveModel>, ModelError> {
        Ok(Box::new(baselines::dns_fit(panel, self.alpha)?))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RwFactory;

impl ModelFactory for RwFactory {
    fn name(&self) -> &str {
        "rw"
    }

    fn fit(&self, panel: &CurvePanel) -> Result<Box<dyn CurveModel>, ModelError> {
        Ok(Box::new(RandomWalk::fit(panel)))
    }
}
