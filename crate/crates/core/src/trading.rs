//! Zero-coupon bond returns and the pairs-trading backtests.
//!
//! Yields here are continuously compounded per-month decimals, so a bond of
//! maturity `t` months priced at yield `x` is worth `exp(−t·x)`. Input in
//! annualized percent is converted by the ingestion layer (`x = y / 1200`).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::fdfm::CurvePanel;
use crate::models::{ModelError, ModelFactory};
use crate::par;

pub const DEFAULT_STAKE: f64 = 1_000_000.0;

#[derive(Error, Debug, Clone)]
pub enum TradingError {
    #[error("maturity {0} must be at least 2 months to roll down one month")]
    Maturity(f64),
    #[error("maturity {t} outside the observed range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("maturity {0} is not in the forecast book")]
    NotInBook(f64),
    #[error("period {period} needs {window} rows of history")]
    History { period: usize, window: usize },
    #[error("invalid backtest setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `exp(−t·x)`.
pub fn bond_price(t: f64, x: f64) -> f64 {
    (-t * x).exp()
}

/// One-month log return `t·x_now − (t−1)·x_next`, with `x_next` the next
/// month's yield at maturity `t − 1`.
pub fn log_return(x_now: f64, x_next: f64, t: f64) -> Result<f64, TradingError> {
    if !(t >= 2.0) {
        return Err(TradingError::Maturity(t));
    }
    Ok(t * x_now - (t - 1.0) * x_next)
}

/// One-month simple return `P_{i+1}(t−1)/P_i(t) − 1`.
pub fn simple_return(x_now: f64, x_next: f64, t: f64) -> Result<f64, TradingError> {
    if !(t >= 2.0) {
        return Err(TradingError::Maturity(t));
    }
    Ok(bond_price(t - 1.0, x_next) / bond_price(t, x_now) - 1.0)
}

/// Piecewise-linear interpolation of an observed curve.
pub fn interpolate_yield(knots: &[f64], yields: &[f64], t: f64) -> Result<f64, TradingError> {
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    if !(t >= lo && t <= hi) {
        return Err(TradingError::OutOfRange { t, lo, hi });
    }
    Ok(crate::baselines::linear_interpolate(knots, yields, t))
}

/// `{4, …, 13} ∪ {16, 19, …, 85}`: `t₁ = 4` plus the 33 partner maturities.
pub fn weighted_pairs_set() -> Vec<f64> {
    (4..=13).chain((16..=85).step_by(3)).map(f64::from).collect()
}

pub fn optimal_pairs_set() -> Vec<f64> {
    [4, 7, 10, 13, 16, 19, 22, 25, 31, 37, 49, 61, 73, 85].map(f64::from).to_vec()
}

pub fn fixed_pairs_set() -> Vec<f64> {
    let mut t = optimal_pairs_set();
    t.extend([97.0, 109.0]);
    t
}

/// Source of one-month-ahead yield forecasts.
pub trait YieldForecaster: Sync {
    fn name(&self) -> &str;
    /// `x̂_{i+1|i}(t)` for each requested maturity using rows `..=i`.
    fn forecast_next(&self, panel: &CurvePanel, i: usize, maturities: &[f64]) -> Result<Vec<f64>, TradingError>;
}

/// Refits a model on the trailing `window` rows every period.
pub struct ModelForecaster<'a> {
    pub factory: &'a dyn ModelFactory,
    pub window: usize,
    /// The model sees `scale · x` and its forecasts are divided back, so a
    /// model tuned for percent yields can trade on decimal yields.
    pub scale: f64,
}

impl<'a> ModelForecaster<'a> {
    pub fn new(factory: &'a dyn ModelFactory, window: usize) -> Self {
        Self { factory, window, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

impl YieldForecaster for ModelForecaster<'_> {
    fn name(&self) -> &str {
        self.factory.name()
    }

    fn forecast_next(&self, panel: &CurvePanel, i: usize, maturities: &[f64]) -> Result<Vec<f64>, TradingError> {
        if i + 1 < self.window {
            return Err(TradingError::History { period: i, window: self.window });
        }
        let rows = panel.rows(i + 1 - self.window, i + 1);
        let rows = if self.scale == 1.0 { rows } else { rows.scaled(self.scale) };
        let forecast = self.factory.fit(&rows)?.forecast(1, maturities)?;
        Ok(forecast.into_iter().map(|v| v / self.scale).collect())
    }
}

/// Reads next month's interpolated curve: the sign oracle.
pub struct PerfectForesight;

impl YieldForecaster for PerfectForesight {
    fn name(&self) -> &str {
        "perfect"
    }

    fn forecast_next(&self, panel: &CurvePanel, i: usize, maturities: &[f64]) -> Result<Vec<f64>, TradingError> {
        let next = panel.row(i + 1);
        maturities.iter().map(|&t| interpolate_yield(panel.maturities(), &next, t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accounting {
    /// Profit from log-return spreads.
    #[default]
    Log,
    /// Profit from simple-return spreads.
    Simple,
}

/// Predicted and realized one-month returns for each trading period and
/// maturity of a universe.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnBook {
    pub forecaster: String,
    /// Panel row `i` of each period; returns are realized at `i + 1`.
    pub periods: Vec<usize>,
    pub dates: Vec<Option<String>>,
    pub maturities: Vec<f64>,
    /// `r̂_{i+1|i}(t)`.
    pub predicted: DMatrix<f64>,
    /// `r_{i+1}(t)` from interpolated observed yields.
    pub realized_log: DMatrix<f64>,
    pub realized_simple: DMatrix<f64>,
}

impl ReturnBook {
    pub fn build(
        panel: &CurvePanel,
        forecaster: &dyn YieldForecaster,
        periods: &[usize],
        maturities: &[f64],
    ) -> Result<Self, TradingError> {
        if periods.iter().any(|&i| i + 1 >= panel.n()) {
            return Err(TradingError::Setup("every period needs a following month".into()));
        }
        let knots = panel.maturities();
        let rolled: Vec<f64> = maturities.iter().map(|t| t - 1.0).collect();
        for &t in maturities {
            if t < 2.0 {
                return Err(TradingError::Maturity(t));
            }
            interpolate_yield(knots, &vec![0.0; knots.len()], t)?;
            interpolate_yield(knots, &vec![0.0; knots.len()], t - 1.0)?;
        }
        let rows = par::map(periods, |&i| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), TradingError> {
            let now = panel.row(i);
            let next = panel.row(i + 1);
            let forecast = forecaster.forecast_next(panel, i, &rolled)?;
            let mut pred = Vec::with_capacity(maturities.len());
            let mut real_log = Vec::with_capacity(maturities.len());
            let mut real_simple = Vec::with_capacity(maturities.len());
            for (c, &t) in maturities.iter().enumerate() {
                let x_now = interpolate_yield(knots, &now, t)?;
                let x_next = interpolate_yield(knots, &next, t - 1.0)?;
                pred.push(log_return(x_now, forecast[c], t)?);
                real_log.push(log_return(x_now, x_next, t)?);
                real_simple.push(simple_return(x_now, x_next, t)?);
            }
            Ok((pred, real_log, real_simple))
        });
        let (p, k) = (periods.len(), maturities.len());
        let mut predicted = DMatrix::zeros(p, k);
        let mut realized_log = DMatrix::zeros(p, k);
        let mut realized_simple = DMatrix::zeros(p, k);
        for (r, row) in rows.into_iter().enumerate() {
            let (a, b, c) = row?;
            for j in 0..k {
                predicted[(r, j)] = a[j];
                realized_log[(r, j)] = b[j];
                realized_simple[(r, j)] = c[j];
            }
        }
        let dates = periods.iter().map(|&i| panel.dates().map(|d| d[i].clone())).collect();
        Ok(Self {
            forecaster: forecaster.name().to_string(),
            periods: periods.to_vec(),
            dates,
            maturities: maturities.to_vec(),
            predicted,
            realized_log,
            realized_simple,
        })
    }

    /// The same book with every predicted return negated.
    pub fn negated(&self) -> Self {
        Self { forecaster: format!("-{}", self.forecaster), predicted: -&self.predicted, ..self.clone() }
    }

    fn column(&self, t: f64) -> Result<usize, TradingError> {
        self.maturities.iter().position(|&m| m == t).ok_or(TradingError::NotInBook(t))
    }

    fn realized(&self, accounting: Accounting) -> &DMatrix<f64> {
        match accounting {
            Accounting::Log => &self.realized_log,
            Accounting::Simple => &self.realized_simple,
        }
    }
}

/// Trading periods for a rolling window of `window` rows: every row `i` with
/// a full window ending at `i` and a following month.
pub fn trading_periods(n: usize, window: usize) -> Vec<usize> {
    if window == 0 || n < window + 1 {
        return Vec::new();
    }
    (window - 1..n - 1).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub period: usize,
    pub date: Option<String>,
    pub t1: f64,
    pub t2: f64,
    /// Signed amount long in `t2` and short in `t1`.
    pub stake: f64,
    pub predicted_spread: f64,
    pub realized_spread: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradingLedger {
    pub strategy: String,
    pub model: String,
    pub accounting: Accounting,
    pub entries: Vec<LedgerEntry>,
    /// `π_{i+1}` per period, in book order.
    pub period_profits: Vec<f64>,
}

/// Compensated (Neumaier) sum.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Linear-interpolation percentile of sorted data (`q` in `[0, 1]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerSummary {
    pub cumulative: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub positive_hits: usize,
    pub positive_total: usize,
    pub negative_hits: usize,
    pub negative_total: usize,
}

impl TradingLedger {
    fn new(strategy: &str, book: &ReturnBook, accounting: Accounting) -> Self {
        Self {
            strategy: strategy.to_string(),
            model: book.forecaster.clone(),
            accounting,
            entries: Vec::new(),
            period_profits: Vec::new(),
        }
    }

    pub fn cumulative(&self) -> f64 {
        exact_sum(self.period_profits.iter().copied())
    }

    /// Percentiles are of the per-period portfolio profit. Directional
    /// accuracy counts sub-portfolios by the sign of the realized spread;
    /// a zero prediction counts as a miss.
    pub fn summary(&self) -> LedgerSummary {
        let mut sorted = self.period_profits.clone();
        sorted.sort_by(f64::total_cmp);
        let pct = |q| if sorted.is_empty() { f64::NAN } else { percentile(&sorted, q) };
        let mut s = LedgerSummary {
            cumulative: self.cumulative(),
            median: pct(0.5),
            p10: pct(0.1),
            p90: pct(0.9),
            positive_hits: 0,
            positive_total: 0,
            negative_hits: 0,
            negative_total: 0,
        };
        for e in &self.entries {
            if e.realized_spread > 0.0 {
                s.positive_total += 1;
                s.positive_hits += usize::from(e.predicted_spread > 0.0);
            } else if e.realized_spread < 0.0 {
                s.negative_total += 1;
                s.negative_hits += usize::from(e.predicted_spread < 0.0);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let form = match self.accounting {
            Accounting::Log => "log",
            Accounting::Simple => "simple",
        };
        let mut out = format!(
            "date,period,t1_months,t2_months,stake_usd,predicted_spread_log_decimal,realized_spread_{form}_decimal,profit_usd\n"
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.12e},{:.12e},{:.6}",
                e.date.as_deref().unwrap_or(""),
                e.period,
                e.t1,
                e.t2,
                e.stake,
                e.predicted_spread,
                e.realized_spread,
                e.profit
            );
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let s = self.summary();
        let frac = |a: usize, b: usize| if b == 0 { f64::NAN } else { 100.0 * a as f64 / b as f64 };
        format!(
            "{{\n  \"strategy\": \"{}\",\n  \"model\": \"{}\",\n  \"periods\": {},\n  \"cumulative_usd\": {:.2},\n  \
             \"median_period_profit_usd\": {:.2},\n  \"p10_period_profit_usd\": {:.2},\n  \"p90_period_profit_usd\": {:.2},\n  \
             \"positive_spread_hits\": \"{}/{} ({:.1}%)\",\n  \"negative_spread_hits\": \"{}/{} ({:.1}%)\"\n}}\n",
            self.strategy,
            self.model,
            self.period_profits.len(),
            s.cumulative,
            s.median,
            s.p10,
            s.p90,
            s.positive_hits,
            s.positive_total,
            frac(s.positive_hits, s.positive_total),
            s.negative_hits,
            s.negative_total,
            frac(s.negative_hits, s.negative_total),
        )
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sub-portfolio weights proportional to the summed absolute simple-return
/// spreads over consecutive rows of `weight_rows`.
pub fn pair_weights(
    panel: &CurvePanel,
    weight_rows: std::ops::Range<usize>,
    t1: f64,
    partners: &[f64],
) -> Result<Vec<f64>, TradingError> {
    if weight_rows.end > panel.n() || weight_rows.len() < 2 {
        return Err(TradingError::Setup(format!("weight window {weight_rows:?} invalid for {} rows", panel.n())));
    }
    let knots = panel.maturities();
    let ret = |i: usize, t: f64| -> Result<f64, TradingError> {
        let now = interpolate_yield(knots, &panel.row(i), t)?;
        let next = interpolate_yield(knots, &panel.row(i + 1), t - 1.0)?;
        simple_return(now, next, t)
    };
    let mut raw = vec![0.0; partners.len()];
    for i in weight_rows.start..weight_rows.end - 1 {
        let base = ret(i, t1)?;
        for (j, &t2) in partners.iter().enumerate() {
            raw[j] += (ret(i, t2)? - base).abs();
        }
    }
    let total = exact_sum(raw.iter().copied());
    if !(total > 0.0) {
        return Err(TradingError::Setup("historical spreads are all zero; weights undefined".into()));
    }
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Default weight rows: the 1985-01 to 1993-12 span when the panel carries
/// those dates, else the first `window` rows.
pub fn default_weight_rows(panel: &CurvePanel, window: usize) -> std::ops::Range<usize> {
    if let Some(d) = panel.dates() {
        let a = d.iter().position(|s| s.starts_with("1985-01"));
        let b = d.iter().position(|s| s.starts_with("1993-12"));
        if let (Some(a), Some(b)) = (a, b) {
            if a < b {
                return a..b + 1;
            }
        }
    }
    0..window.min(panel.n())
}

fn push_entry(
    ledger: &mut TradingLedger,
    book: &ReturnBook,
    r: usize,
    (c1, c2): (usize, usize),
    amount: f64,
    accounting: Accounting,
) -> f64 {
    let pred = book.predicted[(r, c2)] - book.predicted[(r, c1)];
    let realized = book.realized(accounting)[(r, c2)] - book.realized(accounting)[(r, c1)];
    let stake = amount * sign(pred);
    let profit = stake * realized;
    ledger.entries.push(LedgerEntry {
        period: book.periods[r],
        date: book.dates[r].clone(),
        t1: book.maturities[c1],
        t2: book.maturities[c2],
        stake,
        predicted_spread: pred,
        realized_spread: realized,
        profit,
    });
    profit
}

/// Weighted pairs: every period, one sub-portfolio per partner maturity,
/// sized by `stake·w_j` in the direction of the predicted spread.
pub fn algo1_weighted_pairs(
    book: &ReturnBook,
    t1: f64,
    partners: &[f64],
    weights: &[f64],
    stake: f64,
    accounting: Accounting,
) -> Result<TradingLedger, TradingError> {
    if weights.len() != partners.len() {
        return Err(TradingError::Setup("one weight per partner maturity required".into()));
    }
    let c1 = book.column(t1)?;
    let cols = partners.iter().map(|&t| book.column(t)).collect::<Result<Vec<_>, _>>()?;
    let mut ledger = TradingLedger::new("weighted_pairs", book, accounting);
    for r in 0..book.periods.len() {
        let profits: Vec<f64> = cols
            .iter()
            .zip(weights)
            .map(|(&c2, &w)| push_entry(&mut ledger, book, r, (c1, c2), stake * w, accounting))
            .collect();
        ledger.period_profits.push(exact_sum(profits));
    }
    Ok(ledger)
}

/// Optimal pairs: each period the partner with the largest absolute
/// predicted spread against `t1`; ties go to the shortest partner.
pub fn algo2_optimal_pairs(
    book: &ReturnBook,
    t1: f64,
    universe: &[f64],
    stake: f64,
    accounting: Accounting,
) -> Result<TradingLedger, TradingError> {
    let c1 = book.column(t1)?;
    let mut partners: Vec<f64> = universe.iter().copied().filter(|&t| t != t1).collect();
    partners.sort_by(f64::total_cmp);
    if partners.is_empty() {
        return Err(TradingError::Setup("no partner maturity besides t1".into()));
    }
    let cols = partners.iter().map(|&t| book.column(t)).collect::<Result<Vec<_>, _>>()?;
    let mut ledger = TradingLedger::new(&format!("optimal_pairs_t1_{t1}"), book, accounting);
    for r in 0..book.periods.len() {
        let mut best = cols[0];
        let mut best_abs = (book.predicted[(r, best)] - book.predicted[(r, c1)]).abs();
        for &c in &cols[1..] {
            let a = (book.predicted[(r, c)] - book.predicted[(r, c1)]).abs();
            if a > best_abs {
                best = c;
                best_abs = a;
            }
        }
        let p = push_entry(&mut ledger, book, r, (c1, best), stake, accounting);
        ledger.period_profits.push(p);
    }
    Ok(ledger)
}

/// A single pair held for every period.
pub fn fixed_pair(book: &ReturnBook, t1: f64, t2: f64, stake: f64, accounting: Accounting) -> Result<TradingLedger, TradingError> {
    let (c1, c2) = (book.column(t1)?, book.column(t2)?);
    let mut ledger = TradingLedger::new(&format!("fixed_pair_{t1}_{t2}"), book, accounting);
    for r in 0..book.periods.len() {
        let p = push_entry(&mut ledger, book, r, (c1, c2), stake, accounting);
        ledger.period_profits.push(p);
    }
    Ok(ledger)
}

/// Cumulative profit of every fixed pair `t1 < t2`; `NaN` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrid {
    pub model: String,
    pub maturities: Vec<f64>,
    pub profits: DMatrix<f64>,
}

pub fn algo3_fixed_pairs(book: &ReturnBook, universe: &[f64], stake: f64, accounting: Accounting) -> Result<PairGrid, TradingError> {
    let k = universe.len();
    let mut profits = DMatrix::from_element(k, k, f64::NAN);
    for a in 0..k {
        for b in 0..k {
            if universe[b] > universe[a] {
                profits[(a, b)] = fixed_pair(book, universe[a], universe[b], stake, accounting)?.cumulative();
            }
        }
    }
    Ok(PairGrid { model: book.forecaster.clone(), maturities: universe.to_vec(), profits })
}

/// Per cell, the model with the largest cumulative profit and its sign:
/// `t1,t2,winner,sign,<model profits…>`.
pub fn winner_grid_csv(grids: &[PairGrid]) -> String {
    let mut out = String::from("t1_months,t2_months,winner,sign");
    for g in grids {
        let _ = write!(out, ",{}_profit_usd", g.model);
    }
    out.push('\n');
    let Some(first) = grids.first() else { return out };
    let k = first.maturities.len();
    for a in 0..k {
        for b in 0..k {
            if !first.profits[(a, b)].is_finite() {
                continue;
            }
            let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
            for (g, grid) in grids.iter().enumerate() {
                if grid.profits[(a, b)] > best_v {
                    best = g;
                    best_v = grid.profits[(a, b)];
                }
            }
            let sign = if best_v >= 0.0 { "+" } else { "-" };
            let _ = write!(out, "{},{},{},{}", first.maturities[a], first.maturities[b], grids[best].model, sign);
            for g in grids {
                let _ = write!(out, ",{:.2}", g.profits[(a, b)]);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RwFactory;
    use crate::spline::KnotGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid18() -> Vec<f64> {
        vec![1.5, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 30.0, 36.0, 48.0, 60.0, 72.0, 84.0, 96.0, 108.0, 120.0]
    }

    /// Random-walk level plus slope, in per-month decimals.
    fn random_panel(n: usize, seed: u64) -> CurvePanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = grid18();
        let mut x = DMatrix::zeros(n, 18);
        let (mut level, mut slope) = (6.0, 1.0);
        for i in 0..n {
            level += rng.random_range(-0.3..0.3);
            slope += rng.random_range(-0.1..0.1);
            for j in 0..18 {
                x[(i, j)] = (level + slope * (1.0 - (-t[j] / 30.0).exp()) + rng.random_range(-0.05..0.05)) / 1200.0;
            }
        }
        CurvePanel::new(x, KnotGrid::new(t).unwrap(), None).unwrap()
    }

    #[test]
    fn return_examples() {
        assert!((log_return(0.05, 0.05, 2.0).unwrap() - 0.05).abs() < 1e-15);
        assert!(log_return(0.05, 0.05 * 6.0 / 5.0, 6.0).unwrap().abs() < 1e-15);
        assert!(matches!(log_return(0.05, 0.05, 1.5), Err(TradingError::Maturity(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = rng.random_range(2.0..120.0);
            let (a, b) = (rng.random_range(0.0..0.01), rng.random_range(0.0..0.01));
            let r = log_return(a, b, t).unwrap();
            let big_r = bond_price(t - 1.0, b) / bond_price(t, a) - 1.0;
            assert!((r.exp() - 1.0 - big_r).abs() < 1e-12);
            assert!((r - (1.0 + simple_return(a, b, t).unwrap()).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_examples() {
        assert!((interpolate_yield(&[3.0, 6.0], &[0.04, 0.06], 4.5).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(interpolate_yield(&[3.0, 6.0], &[0.04, 0.06], 6.0).unwrap(), 0.06);
        assert!(matches!(interpolate_yield(&[3.0, 6.0], &[0.04, 0.06], 7.0), Err(TradingError::OutOfRange { .. })));
    }

    #[test]
    fn maturity_sets() {
        let t1 = weighted_pairs_set();
        assert_eq!(t1.len(), 34);
        assert_eq!((t1[0], t1[9], t1[10], t1[33]), (4.0, 13.0, 16.0, 85.0));
        assert_eq!(fixed_pairs_set().len(), 16);
        assert!(optimal_pairs_set().iter().all(|t| fixed_pairs_set().contains(t)));
    }

    #[test]
    fn trading_period_count() {
        assert_eq!(trading_periods(192, 108).len(), 84);
        assert_eq!(trading_periods(192, 108)[0], 107);
    }

    #[test]
    fn random_walk_predicted_returns_use_current_curve() {
        let panel = random_panel(30, 2);
        let rw = ModelForecaster::new(&RwFactory, 10);
        let universe = [4.0, 7.0, 25.0];
        let book = ReturnBook::build(&panel, &rw, &trading_periods(30, 10), &universe).unwrap();
        let knots = panel.maturities();
        for (r, &i) in book.periods.iter().enumerate() {
            let x = panel.row(i);
            let ix = |t| interpolate_yield(knots, &x, t).unwrap();
            let spread = book.predicted[(r, 2)] - book.predicted[(r, 0)];
            let hand = (25.0 * ix(25.0) - 24.0 * ix(24.0)) - (4.0 * ix(4.0) - 3.0 * ix(3.0));
            assert!((spread - hand).abs() < 1e-15);
        }
    }

    fn all_algorithms(book: &ReturnBook, panel: &CurvePanel) -> Vec<TradingLedger> {
        let t1 = weighted_pairs_set();
        let w = pair_weights(panel, 0..20, 4.0, &t1[1..]).unwrap();
        let mut out = vec![
            algo1_weighted_pairs(book, 4.0, &t1[1..], &w, DEFAULT_STAKE, Accounting::Log).unwrap(),
            algo2_optimal_pairs(book, 13.0, &optimal_pairs_set(), DEFAULT_STAKE, Accounting::Log).unwrap(),
        ];
        for (a, b) in [(4.0, 7.0), (31.0, 109.0)] {
            out.push(fixed_pair(book, a, b, DEFAULT_STAKE, Accounting::Log).unwrap());
        }
        out
    }

    fn universe() -> Vec<f64> {
        let mut u = weighted_pairs_set();
        u.extend(fixed_pairs_set());
        u.sort_by(f64::total_cmp);
        u.dedup();
        u
    }

    #[test]
    fn perfect_foresight_never_loses() {
        let panel = random_panel(40, 3);
        let book = ReturnBook::build(&panel, &PerfectForesight, &trading_periods(40, 20), &universe()).unwrap();
        for ledger in all_algorithms(&book, &panel) {
            assert!(ledger.period_profits.iter().all(|&p| p >= 0.0), "{}", ledger.strategy);
            let s = ledger.summary();
            assert_eq!(s.positive_hits, s.positive_total);
            assert_eq!(s.negative_hits, s.negative_total);
            assert_eq!(s.positive_total + s.negative_total, ledger.entries.len());
        }
        let grid = algo3_fixed_pairs(&book, &fixed_pairs_set(), DEFAULT_STAKE, Accounting::Log).unwrap();
        assert!(grid.profits.iter().filter(|v| v.is_finite()).all(|&v| v >= 0.0));
    }

    #[test]
    fn negated_book_negates_every_stake_and_profit() {
        let panel = random_panel(40, 4);
        let rw = ModelForecaster::new(&RwFactory, 20);
        let book = ReturnBook::build(&panel, &rw, &trading_periods(40, 20), &universe()).unwrap();
        let neg = book.negated();
        let t1 = weighted_pairs_set();
        let w = pair_weights(&panel, 0..20, 4.0, &t1[1..]).unwrap();
        let a = algo1_weighted_pairs(&book, 4.0, &t1[1..], &w, DEFAULT_STAKE, Accounting::Log).unwrap();
        let b = algo1_weighted_pairs(&neg, 4.0, &t1[1..], &w, DEFAULT_STAKE, Accounting::Log).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.stake, -y.stake);
            assert_eq!(x.profit, -y.profit);
        }
        for (x, y) in a.period_profits.iter().zip(&b.period_profits) {
            assert_eq!(*x, -*y);
        }
        // net investment is zero by construction: each entry is long and short the same amount
        assert!(a.entries.iter().all(|e| e.stake.abs() <= DEFAULT_STAKE));
    }

    #[test]
    fn perfect_foresight_dominates_models() {
        let panel = random_panel(40, 5);
        let periods = trading_periods(40, 20);
        let rw = ModelForecaster::new(&RwFactory, 20);
        let pf = ReturnBook::build(&panel, &PerfectForesight, &periods, &universe()).unwrap();
        let model = ReturnBook::build(&panel, &rw, &periods, &universe()).unwrap();
        for (p, m) in all_algorithms(&pf, &panel).iter().zip(all_algorithms(&model, &panel)) {
            assert!(p.cumulative() >= m.cumulative());
        }
    }

    #[test]
    fn constant_sloped_curve_earns_the_carry_spread() {
        // x(t) = a + b·t gives r(t) = a + b(2t − 1) every month
        let (a, b) = (0.003, 1e-5);
        let t = grid18();
        let x = DMatrix::from_fn(30, 18, |_, j| a + b * t[j]);
        let panel = CurvePanel::new(x, KnotGrid::new(t).unwrap(), None).unwrap();
        let periods = trading_periods(30, 10);
        let book = ReturnBook::build(&panel, &PerfectForesight, &periods, &fixed_pairs_set()).unwrap();
        let grid = algo3_fixed_pairs(&book, &fixed_pairs_set(), DEFAULT_STAKE, Accounting::Log).unwrap();
        let u = fixed_pairs_set();
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                let expect = 2.0 * b * (u[j] - u[i]) * DEFAULT_STAKE * periods.len() as f64;
                assert!((grid.profits[(i, j)] - expect).abs() < 1e-6 * expect, "{} {}", u[i], u[j]);
            }
        }
    }

    #[test]
    fn optimal_pairs_edge_cases() {
        let panel = random_panel(30, 6);
        let rw = ModelForecaster::new(&RwFactory, 10);
        let book = ReturnBook::build(&panel, &rw, &trading_periods(30, 10), &fixed_pairs_set()).unwrap();
        let a = algo2_optimal_pairs(&book, 4.0, &[4.0, 7.0], DEFAULT_STAKE, Accounting::Log).unwrap();
        let b = fixed_pair(&book, 4.0, 7.0, DEFAULT_STAKE, Accounting::Log).unwrap();
        assert_eq!(a.period_profits, b.period_profits);
        assert_eq!(a.cumulative(), algo3_fixed_pairs(&book, &[4.0, 7.0], DEFAULT_STAKE, Accounting::Log).unwrap().profits[(0, 1)]);

        // identical predicted returns at 7 and 10 tie; the shorter maturity wins
        let mut tied = book.clone();
        for r in 0..tied.periods.len() {
            tied.predicted[(r, 0)] = 0.0;
            tied.predicted[(r, 1)] = 1.0;
            tied.predicted[(r, 2)] = -1.0;
            for c in 3..tied.maturities.len() {
                tied.predicted[(r, c)] = 0.5;
            }
        }
        let l = algo2_optimal_pairs(&tied, 4.0, &[4.0, 7.0, 10.0, 13.0], DEFAULT_STAKE, Accounting::Log).unwrap();
        assert!(l.entries.iter().all(|e| e.t2 == 7.0 && e.stake == DEFAULT_STAKE));

        // zero predicted spread sits out
        let mut flat = book.clone();
        flat.predicted.fill(0.25);
        let l = fixed_pair(&flat, 4.0, 7.0, DEFAULT_STAKE, Accounting::Log).unwrap();
        assert!(l.entries.iter().all(|e| e.stake == 0.0 && e.profit == 0.0));
    }

    #[test]
    fn weights_sum_to_one_and_match_hand_sums() {
        let panel = random_panel(25, 7);
        let partners = [7.0, 10.0, 25.0];
        let w = pair_weights(&panel, 0..10, 4.0, &partners).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let knots = panel.maturities();
        let big_r = |i: usize, t: f64| {
            let a = interpolate_yield(knots, &panel.row(i), t).unwrap();
            let b = interpolate_yield(knots, &panel.row(i + 1), t - 1.0).unwrap();
            (-(t - 1.0) * b).exp() / (-t * a).exp() - 1.0
        };
        let raw: Vec<f64> = partners
            .iter()
            .map(|&t| (0..9).map(|i| (big_r(i, t) - big_r(i, 4.0)).abs()).sum())
            .collect();
        let total: f64 = raw.iter().sum();
        for j in 0..3 {
            assert!((w[j] - raw[j] / total).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert!((percentile(&[0.0, 10.0], 0.1) - 1.0).abs() < 1e-15);
        assert_eq!(exact_sum([1e16, 1.0, -1e16]), 1.0);
        let panel = random_panel(40, 8);
        let rw = ModelForecaster::new(&RwFactory, 20);
        let book = ReturnBook::build(&panel, &rw, &trading_periods(40, 20), &fixed_pairs_set()).unwrap();
        let l = fixed_pair(&book, 4.0, 61.0, DEFAULT_STAKE, Accounting::Simple).unwrap();
        let naive: f64 = l.entries.iter().map(|e| e.profit).sum();
        assert!((l.cumulative() - naive).abs() < 1e-9);
        assert!(l.summary_text().contains("\"periods\": 20"));
        assert_eq!(l.to_csv().lines().count(), 21);
    }
}
